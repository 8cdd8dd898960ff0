#include "escox/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "escox/errors.hpp"
#include "escox/parallel.hpp"

namespace escox {

namespace fs = std::filesystem;
using nlohmann::json;

bool InclusionMatrix::contains(int b, int i) const {
  const auto& row = rows.at(b);
  return std::binary_search(row.begin(), row.end(), static_cast<std::int32_t>(i));
}

Eigen::VectorXd InclusionMatrix::column_means() const {
  Eigen::VectorXd means = Eigen::VectorXd::Zero(n);
  for (const auto& row : rows)
    for (std::int32_t i : row) means[i] += 1.0;
  means /= static_cast<double>(B());
  return means;
}

namespace {

std::vector<std::int32_t> sample_without_replacement(int n, int r, Rng& rng) {
  std::vector<std::int32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < r; ++k) {
    const int j = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - k)));
    std::swap(pool[k], pool[j]);
  }
  pool.resize(r);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<std::int32_t> draw_row(int n, int r, std::uint64_t seed, int b,
                                   int attempt) {
  Rng rng(derive_seed(seed, rng_tag::kSubsample, static_cast<std::uint64_t>(b),
                      static_cast<std::uint64_t>(attempt)));
  return sample_without_replacement(n, r, rng);
}

}  // namespace

InclusionMatrix draw_subsamples(int n, int r, int B, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (r < 1 || r > n)
    throw std::invalid_argument("subsample size r must satisfy 1 <= r <= n");
  if (B < 1) throw std::invalid_argument("B must be >= 1");
  InclusionMatrix inc;
  inc.n = n;
  inc.r = r;
  inc.seed = seed;
  inc.rows.resize(B);
  for (int b = 0; b < B; ++b) inc.rows[b] = draw_row(n, r, seed, b, 0);
  return inc;
}

EnsembleModel fit_ensemble(const SurvivalDataset& dataset,
                           const NetworkConfig& net_config,
                           const TrainConfig& train_config, int r, int B,
                           std::uint64_t seed, int n_threads) {
  const int n = dataset.size();
  if (r < 1 || r > n)
    throw std::invalid_argument("subsample size r must satisfy 1 <= r <= n");
  if (B < 1) throw std::invalid_argument("B must be >= 1");
  static std::atomic<bool> warned{false};
  if (B < n && !warned.exchange(true))
    std::cerr << "escox: warning: B=" << B << " < n=" << n
              << "; the IJ theory asks for B of order n or larger"
                 " (reported once)\n";

  const std::vector<std::uint8_t> events = dataset.events();
  auto has_event = [&](const std::vector<std::int32_t>& row) {
    for (std::int32_t i : row)
      if (events[i]) return true;
    return false;
  };

  EnsembleModel model;
  model.inclusion.n = n;
  model.inclusion.r = r;
  model.inclusion.seed = seed;
  model.inclusion.rows.resize(B);
  model.base_params.resize(B);
  model.n = n;
  model.r = r;
  model.net_config = net_config;
  model.train_config = train_config;
  model.seed = seed;

  parallel_for(B, n_threads, [&](int b) {
    std::vector<std::int32_t> row;
    bool ok = false;
    for (int attempt = 0; attempt < 100; ++attempt) {
      row = draw_row(n, r, seed, b, attempt);
      if (has_event(row)) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw DegenerateDataError(
          "subsample " + std::to_string(b) +
          ": 100 consecutive draws contained no events");
    NetworkConfig base_net = net_config;
    base_net.seed = derive_seed(seed, rng_tag::kBaseNet, static_cast<std::uint64_t>(b));
    TrainConfig base_train = train_config;
    base_train.seed = derive_seed(seed, rng_tag::kBaseTrain, static_cast<std::uint64_t>(b));
    const SurvivalDataset sub =
        dataset.subset(row, dataset.name() + "#b" + std::to_string(b));
    TrainResult res = train(sub, base_net, base_train);
    model.base_params[b] = std::move(res.params);
    model.inclusion.rows[b] = std::move(row);
  });

  return model;
}

Eigen::VectorXd base_predictions(const EnsembleModel& model,
                                 const Eigen::VectorXd& x) {
  Eigen::VectorXd preds(model.B());
  for (int b = 0; b < model.B(); ++b)
    preds[b] = predict_g(model.base_params[b], x);
  return preds;
}

double ensemble_predict(const EnsembleModel& model, const Eigen::VectorXd& x) {
  return base_predictions(model, x).mean();
}

double contrast_estimate(const EnsembleModel& model, const Eigen::VectorXd& x1,
                         const Eigen::VectorXd& x2) {
  return ensemble_predict(model, x1) - ensemble_predict(model, x2);
}

namespace {

json train_config_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"weight_decay", c.weight_decay},
              {"dropout_rate", c.dropout_rate},
              {"optimizer", c.optimizer == Optimizer::PlainGd ? "plain-gd"
                                                              : "adaptive-moments"},
              {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  const std::string opt = j.at("optimizer").get<std::string>();
  if (opt == "plain-gd")
    c.optimizer = Optimizer::PlainGd;
  else if (opt == "adaptive-moments")
    c.optimizer = Optimizer::AdaptiveMoments;
  else
    throw std::invalid_argument("unknown optimizer: " + opt);
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::string base_file_name(int b) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "base_%05d.bin", b);
  return buf;
}

}  // namespace

void save_model(const EnsembleModel& model, const std::string& dir) {
  fs::create_directories(dir);

  json meta;
  meta["format"] = "escox-ensemble-v1";
  meta["n"] = model.n;
  meta["r"] = model.r;
  meta["B"] = model.B();
  if (model.alpha) meta["alpha"] = *model.alpha;
  meta["seed"] = model.seed;
  meta["net_config"] = {{"widths", model.net_config.widths},
                        {"dropout_rate", model.net_config.dropout_rate},
                        {"weight_decay", model.net_config.weight_decay},
                        {"seed", model.net_config.seed}};
  meta["train_config"] = train_config_to_json(model.train_config);
  {
    std::ofstream out(fs::path(dir) / "metadata.json");
    if (!out) throw std::runtime_error("cannot write model metadata in " + dir);
    out << meta.dump(2) << "\n";
  }

  {
    std::ofstream out(fs::path(dir) / "inclusion.csv");
    if (!out) throw std::runtime_error("cannot write inclusion matrix in " + dir);
    for (const auto& row : model.inclusion.rows) {
      std::vector<char> dense(model.n, '0');
      for (std::int32_t i : row) dense[i] = '1';
      for (int i = 0; i < model.n; ++i) {
        if (i) out << ',';
        out << dense[i];
      }
      out << "\n";
    }
  }

  for (int b = 0; b < model.B(); ++b)
    save_network(model.base_params[b], (fs::path(dir) / base_file_name(b)).string());
}

EnsembleModel load_model(const std::string& dir) {
  std::ifstream meta_in(fs::path(dir) / "metadata.json");
  if (!meta_in)
    throw std::runtime_error("cannot open model metadata: " + dir + "/metadata.json");
  json meta = json::parse(meta_in);
  if (meta.at("format").get<std::string>() != "escox-ensemble-v1")
    throw std::runtime_error("unrecognized model format in " + dir);

  EnsembleModel model;
  model.n = meta.at("n").get<int>();
  model.r = meta.at("r").get<int>();
  const int B = meta.at("B").get<int>();
  if (meta.contains("alpha")) model.alpha = meta.at("alpha").get<double>();
  model.seed = meta.at("seed").get<std::uint64_t>();
  const json& net = meta.at("net_config");
  model.net_config.widths = net.at("widths").get<std::vector<int>>();
  model.net_config.dropout_rate = net.at("dropout_rate").get<double>();
  model.net_config.weight_decay = net.at("weight_decay").get<double>();
  model.net_config.seed = net.at("seed").get<std::uint64_t>();
  model.train_config = train_config_from_json(meta.at("train_config"));

  model.inclusion.n = model.n;
  model.inclusion.r = model.r;
  model.inclusion.seed = model.seed;
  {
    std::ifstream in(fs::path(dir) / "inclusion.csv");
    if (!in)
      throw std::runtime_error("cannot open inclusion matrix: " + dir + "/inclusion.csv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::int32_t> row;
      int col = 0;
      for (std::size_t pos = 0; pos < line.size(); ++pos) {
        const char c = line[pos];
        if (c == ',' || c == '\r') continue;
        if (c == '1')
          row.push_back(col);
        else if (c != '0')
          throw ParseError("inclusion.csv: unexpected character '" +
                           std::string(1, c) + "'");
        ++col;
      }
      if (col != model.n)
        throw ParseError("inclusion.csv: row has " + std::to_string(col) +
                         " columns, expected " + std::to_string(model.n));
      if (static_cast<int>(row.size()) != model.r)
        throw ValidationError("inclusion.csv: row sum differs from r");
      model.inclusion.rows.push_back(std::move(row));
    }
  }
  if (model.inclusion.B() != B)
    throw ValidationError("inclusion.csv row count differs from metadata B");

  model.base_params.reserve(B);
  for (int b = 0; b < B; ++b)
    model.base_params.push_back(
        load_network((fs::path(dir) / base_file_name(b)).string()));
  return model;
}

}  // namespace escox
