// escox command-line driver: simulation, ensemble fitting, inference,
// subsample-exponent diagnostics, and the Monte Carlo benchmark harness.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "escox/baselines.hpp"
#include "escox/dataset.hpp"
#include "escox/ensemble.hpp"
#include "escox/errors.hpp"
#include "escox/inference.hpp"
#include "escox/metrics.hpp"
#include "escox/parallel.hpp"
#include "escox/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace escox;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  int threads = default_thread_count();
  double level = 0.95;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return json::parse(in);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TrainConfig parse_train_config(const json& j) {
  TrainConfig c;
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("dropout_rate")) c.dropout_rate = j.at("dropout_rate").get<double>();
  if (j.contains("optimizer")) {
    const std::string opt = j.at("optimizer").get<std::string>();
    if (opt == "plain-gd")
      c.optimizer = Optimizer::PlainGd;
    else if (opt == "adaptive-moments")
      c.optimizer = Optimizer::AdaptiveMoments;
    else
      throw std::invalid_argument("unknown optimizer: " + opt);
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Query CSV with header x1..xp, one evaluation point per row.
Eigen::MatrixXd load_query_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open query file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path + ": empty file");
  int p = 0;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (!col.empty() && col.back() == '\r') col.pop_back();
      ++p;
      if (col != "x" + std::to_string(p))
        throw ParseError(path + ": header columns must be x1,...,xp");
    }
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> row;
    while (std::getline(ss, field, ',')) {
      try {
        row.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": cannot parse '" + field + "'");
      }
    }
    if (static_cast<int>(row.size()) != p)
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected " + std::to_string(p) + " fields");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no query rows");
  Eigen::MatrixXd x(rows.size(), p);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < p; ++j) x(i, j) = rows[i][j];
  return x;
}

int cmd_simulate(const GlobalOpts& g) {
  const json cfg = load_config(g.config_path);
  SimulationSpec spec;
  spec.case_id = cfg.at("case").get<int>();
  spec.n = cfg.at("n").get<int>();
  if (cfg.contains("censor_target"))
    spec.censor_rate_target = cfg.at("censor_target").get<double>();
  spec.seed = g.seed_override ? *g.seed_override
                              : cfg.value("seed", std::uint64_t{0});
  const std::string name = cfg.value("output", std::string("dataset.csv"));
  fs::create_directories(g.out_dir);
  const SurvivalDataset ds = generate_case(spec);
  const std::string path = (fs::path(g.out_dir) / name).string();
  save_dataset_csv(ds, path);
  std::cout << "wrote " << path << " (" << ds.size() << " observations, "
            << ds.event_count() << " events)\n";
  return 0;
}

int cmd_fit(const GlobalOpts& g) {
  const json cfg = load_config(g.config_path);
  const SurvivalDataset data = load_dataset(cfg.at("data").get<std::string>());
  const int B = cfg.value("B", 1000);  // full-scale ensemble size by default
  std::optional<double> alpha;
  int r = 0;
  if (cfg.contains("alpha")) {
    alpha = cfg.at("alpha").get<double>();
    r = static_cast<int>(std::floor(std::pow(data.size(), *alpha)));
  } else {
    r = cfg.at("r").get<int>();
  }
  NetworkConfig net;
  net.widths.push_back(data.p0());
  for (int w : cfg.at("hidden").get<std::vector<int>>()) net.widths.push_back(w);
  net.widths.push_back(1);
  TrainConfig train = cfg.contains("train") ? parse_train_config(cfg.at("train"))
                                            : TrainConfig{};
  net.dropout_rate = train.dropout_rate;
  net.weight_decay = train.weight_decay;
  const std::uint64_t seed =
      g.seed_override ? *g.seed_override : cfg.value("seed", std::uint64_t{0});

  EnsembleModel model = fit_ensemble(data, net, train, r, B, seed, g.threads);
  model.alpha = alpha;
  const std::string dir =
      (fs::path(g.out_dir) / cfg.value("model_dir", std::string("model"))).string();
  save_model(model, dir);
  std::cout << "wrote ensemble model to " << dir << " (B=" << B << ", r=" << r
            << ", n=" << data.size() << ")\n";
  return 0;
}

int cmd_predict(const GlobalOpts& g) {
  const json cfg = load_config(g.config_path);
  const EnsembleModel model = load_model(cfg.at("model").get<std::string>());
  const Eigen::MatrixXd query = load_query_points(cfg.at("query").get<std::string>());
  if (query.cols() != model.net_config.widths.front())
    throw ValidationError("query dimension does not match the model input width");
  fs::create_directories(g.out_dir);
  const std::string path =
      (fs::path(g.out_dir) / cfg.value("output", std::string("predictions.csv")))
          .string();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "x_id,estimate\n";
  for (int i = 0; i < query.rows(); ++i)
    out << i << ',' << fmt(ensemble_predict(model, query.row(i).transpose()))
        << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_infer(const GlobalOpts& g) {
  const json cfg = load_config(g.config_path);
  const EnsembleModel model = load_model(cfg.at("model").get<std::string>());
  const Eigen::MatrixXd query = load_query_points(cfg.at("query").get<std::string>());
  if (query.cols() != model.net_config.widths.front())
    throw ValidationError("query dimension does not match the model input width");
  const double level = cfg.contains("level") ? cfg.at("level").get<double>() : g.level;
  fs::create_directories(g.out_dir);

  const int m = static_cast<int>(query.rows());
  std::vector<Eigen::VectorXd> preds(m);
  for (int i = 0; i < m; ++i)
    preds[i] = base_predictions(model, query.row(i).transpose());

  json report;
  report["level"] = level;
  report["n"] = model.n;
  report["r"] = model.r;
  report["B"] = model.B();
  if (model.alpha) report["alpha"] = *model.alpha;

  const std::string points_path =
      (fs::path(g.out_dir) / "infer_points.csv").string();
  {
    std::ofstream out(points_path);
    if (!out) throw std::runtime_error("cannot write " + points_path);
    out << "x_id,estimate,se,ci_lo,ci_hi,clamped\n";
    for (int i = 0; i < m; ++i) {
      const double raw = ij_cov_from_predictions(model.inclusion, preds[i], preds[i]);
      const bool clamped = raw < 0.0;
      const double se = std::sqrt(std::max(raw, 0.0));
      InferenceResult res = wald_interval(preds[i].mean(), se, level);
      res.clamped = clamped;
      out << i << ',' << fmt(res.estimate) << ',' << fmt(res.std_error) << ','
          << fmt(res.ci_lower) << ',' << fmt(res.ci_upper) << ','
          << (res.clamped ? 1 : 0) << "\n";
    }
  }

  json contrast_rows = json::array();
  const std::string contrasts_path =
      (fs::path(g.out_dir) / "infer_contrasts.csv").string();
  if (cfg.contains("contrasts")) {
    std::ofstream out(contrasts_path);
    if (!out) throw std::runtime_error("cannot write " + contrasts_path);
    out << "i,j,estimate,se,ci_lo,ci_hi,rr,rr_lo,rr_hi,clamped\n";
    for (const auto& pair : cfg.at("contrasts")) {
      const int i = pair.at(0).get<int>();
      const int j = pair.at(1).get<int>();
      if (i < 0 || i >= m || j < 0 || j >= m)
        throw std::invalid_argument("contrast indices out of query range");
      const double v1 = ij_cov_from_predictions(model.inclusion, preds[i], preds[i]);
      const double v2 = ij_cov_from_predictions(model.inclusion, preds[j], preds[j]);
      const double tau = ij_cov_from_predictions(model.inclusion, preds[i], preds[j]);
      const double raw = v1 + v2 - 2.0 * tau;
      const bool clamped = raw < 0.0;
      const double se = std::sqrt(std::max(raw, 0.0));
      InferenceResult res =
          wald_interval(preds[i].mean() - preds[j].mean(), se, level);
      res.clamped = clamped;
      const auto [rr_lo, rr_hi] = relative_risk_interval(res);
      out << i << ',' << j << ',' << fmt(res.estimate) << ','
          << fmt(res.std_error) << ',' << fmt(res.ci_lower) << ','
          << fmt(res.ci_upper) << ',' << fmt(std::exp(res.estimate)) << ','
          << fmt(rr_lo) << ',' << fmt(rr_hi) << ',' << (res.clamped ? 1 : 0)
          << "\n";
      contrast_rows.push_back(json{{"i", i},
                                   {"j", j},
                                   {"estimate", res.estimate},
                                   {"se", res.std_error},
                                   {"ci", {res.ci_lower, res.ci_upper}},
                                   {"relative_risk", std::exp(res.estimate)},
                                   {"rr_ci", {rr_lo, rr_hi}},
                                   {"clamped", res.clamped}});
    }
  }
  report["contrasts"] = contrast_rows;
  const std::string report_path = (fs::path(g.out_dir) / "report.json").string();
  {
    std::ofstream out(report_path);
    out << report.dump(2) << "\n";
  }
  std::cout << "wrote " << points_path;
  if (cfg.contains("contrasts")) std::cout << ", " << contrasts_path;
  std::cout << ", " << report_path << "\n";
  return 0;
}

int cmd_alpha_range(const GlobalOpts& g) {
  const json cfg = load_config(g.config_path);
  RateParams params;
  params.q = cfg.at("q").get<int>();
  params.t = cfg.at("t").get<std::vector<int>>();
  params.gamma = cfg.at("gamma").get<std::vector<double>>();
  params.delta = cfg.value("delta", 0.0);
  params.xi = cfg.value("xi", 0.1);
  params.nu = cfg.value("nu", 1.0);
  const AlphaRange range = alpha_range(params);
  std::cout << alpha_range_report(params, range);

  json out;
  out["c_eff"] = range.c_eff;
  out["i_eff"] = range.i_eff;
  out["gamma_star"] = range.gamma_star;
  out["level_rates"] = range.level_rates;
  out["eta"] = range.eta;
  out["m0"] = range.m0;
  out["delta"] = params.delta;
  out["delta_window"] = {range.delta_lower, range.delta_upper};
  out["delta_in_window"] = range.delta_in_window;
  out["nu"] = params.nu;
  out["nu_window"] = {range.nu_lower, range.nu_upper};
  out["nu_in_window"] = range.nu_in_window;
  out["alpha_lower"] = range.alpha_lower;
  out["alpha_upper"] = range.alpha_upper;
  out["admissible"] = range.admissible;
  out["ij_consistency_needs_alpha_above"] = 0.5;
  fs::create_directories(g.out_dir);
  const std::string path = (fs::path(g.out_dir) / "alpha_range.json").string();
  std::ofstream jout(path);
  jout << out.dump(2) << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_benchmark(const GlobalOpts& g) {
  const json cfg = load_config(g.config_path);
  StudyConfig study;
  if (cfg.contains("cases")) study.cases = cfg.at("cases").get<std::vector<int>>();
  if (cfg.contains("ns")) study.ns = cfg.at("ns").get<std::vector<int>>();
  if (cfg.contains("alphas"))
    study.alphas = cfg.at("alphas").get<std::vector<double>>();
  if (cfg.contains("B")) study.B = cfg.at("B").get<int>();
  if (cfg.contains("R")) study.R = cfg.at("R").get<int>();
  if (cfg.contains("m")) study.m = cfg.at("m").get<int>();
  if (cfg.contains("censor_target"))
    study.censor_target = cfg.at("censor_target").get<double>();
  study.level = cfg.contains("level") ? cfg.at("level").get<double>() : g.level;
  if (cfg.contains("hidden"))
    study.hidden_widths = cfg.at("hidden").get<std::vector<int>>();
  if (cfg.contains("train")) study.train = parse_train_config(cfg.at("train"));
  if (cfg.contains("contrast_quota"))
    study.contrast_quota = cfg.at("contrast_quota").get<int>();
  study.seed = g.seed_override ? *g.seed_override : cfg.value("seed", std::uint64_t{0});
  study.n_threads = g.threads;
  study.out_dir = g.out_dir;
  if (cfg.contains("write_raw")) study.write_raw = cfg.at("write_raw").get<bool>();

  const auto cells = run_monte_carlo(study);
  int failed = 0;
  for (const auto& cell : cells) {
    if (cell.failed) {
      ++failed;
      continue;
    }
    std::cout << cell.pointwise.label << "  r=" << cell.r
              << "  bias=" << cell.pointwise.bias << "  mae=" << cell.pointwise.mae
              << "  empsd="
              << (cell.pointwise.emp_sd ? std::to_string(*cell.pointwise.emp_sd)
                                        : std::string("NA"))
              << "  se=" << cell.pointwise.mean_se
              << "  cp=" << cell.pointwise.coverage
              << "  ail=" << cell.pointwise.avg_interval_length << "\n";
  }
  std::cout << "wrote study outputs to " << g.out_dir << "\n";
  if (failed > 0) {
    std::cerr << failed << " cell(s) failed\n";
    return 1;
  }
  return 0;
}

int cmd_oracle_zeta(const GlobalOpts& g) {
  const json cfg = load_config(g.config_path);
  const int r = cfg.at("r").get<int>();
  const int reps = cfg.at("reps").get<int>();
  const std::uint64_t seed =
      g.seed_override ? *g.seed_override : cfg.value("seed", std::uint64_t{0});
  const std::string mode = cfg.value("mode", std::string("network"));

  double zeta = 0.0;
  if (mode == "toy") {
    // Sample-mean estimator over unit-variance exponential responses:
    // analytic single-overlap covariance Var/r^2 = 1/r^2.
    ObservationSampler sampler = [](Rng& rng) {
      Observation o;
      o.time = rng.exponential(1.0);
      o.event = true;
      o.covariates = Eigen::VectorXd::Zero(1);
      return o;
    };
    PointEstimator estimator = [](const SurvivalDataset& ds, std::uint64_t,
                                  const Eigen::VectorXd&) {
      return ds.times().mean();
    };
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    zeta = single_overlap_cov_mc(estimator, sampler, 1, r, x, x, reps, seed,
                                 g.threads);
  } else if (mode == "network") {
    const int case_id = cfg.at("case").get<int>();
    const double censor_target = cfg.value("censor_target", 0.30);
    const double mu = calibrated_censoring_rate(case_id, censor_target);
    NetworkConfig net;
    net.widths.push_back(kSimDim);
    for (int w : cfg.value("hidden", std::vector<int>{32, 16}))
      net.widths.push_back(w);
    net.widths.push_back(1);
    TrainConfig train_cfg = cfg.contains("train")
                                ? parse_train_config(cfg.at("train"))
                                : TrainConfig{};
    ObservationSampler sampler = [case_id, mu](Rng& rng) {
      Observation o;
      Eigen::VectorXd x(kSimDim);
      for (int j = 0; j < kSimDim; ++j) x[j] = rng.truncated_normal(3.0);
      const double g0 = true_risk(case_id, x);
      const double t_event = sample_event_time(g0, rng.uniform_open01());
      const double t_censor = rng.exponential(mu);
      o.time = std::min(t_event, t_censor);
      o.event = t_event <= t_censor;
      o.covariates = std::move(x);
      return o;
    };
    PointEstimator estimator = [net, train_cfg](const SurvivalDataset& ds,
                                                std::uint64_t fit_seed,
                                                const Eigen::VectorXd& x) {
      NetworkConfig base_net = net;
      base_net.seed = derive_seed(fit_seed, rng_tag::kBaseNet);
      TrainConfig base_train = train_cfg;
      base_train.seed = derive_seed(fit_seed, rng_tag::kBaseTrain);
      return predict_g(train(ds, base_net, base_train).params, x);
    };
    const auto x1v = cfg.at("x1").get<std::vector<double>>();
    const auto x2v = cfg.at("x2").get<std::vector<double>>();
    if (static_cast<int>(x1v.size()) != kSimDim ||
        static_cast<int>(x2v.size()) != kSimDim)
      throw std::invalid_argument("x1/x2 must have length 10");
    Eigen::VectorXd x1 = Eigen::Map<const Eigen::VectorXd>(x1v.data(), kSimDim);
    Eigen::VectorXd x2 = Eigen::Map<const Eigen::VectorXd>(x2v.data(), kSimDim);
    zeta = single_overlap_cov_mc(estimator, sampler, kSimDim, r, x1, x2, reps,
                                 seed, g.threads);
  } else {
    throw std::invalid_argument("oracle-zeta mode must be 'toy' or 'network'");
  }

  std::cout << "single-overlap covariance estimate: " << fmt(zeta)
            << "  (r=" << r << ", reps=" << reps << ")\n";
  fs::create_directories(g.out_dir);
  const std::string path = (fs::path(g.out_dir) / "zeta.json").string();
  std::ofstream out(path);
  out << json{{"zeta", zeta}, {"r", r}, {"reps", reps}, {"mode", mode}}.dump(2)
      << "\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"escox: ensemble-subsampling inference for nonparametric Cox models"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--threads", g.threads, "worker threads (default: cores)");
  app.add_option("--seed", g.seed_override, "override the config seed");
  app.add_option("--level", g.level, "confidence level (default 0.95)");

  struct Sub {
    const char* name;
    const char* desc;
    int (*fn)(const GlobalOpts&);
  };
  const std::vector<Sub> subs = {
      {"simulate", "generate a synthetic dataset CSV", cmd_simulate},
      {"fit", "train a subsample ensemble from a dataset CSV", cmd_fit},
      {"predict", "point predictions at query covariates", cmd_predict},
      {"infer", "predictions with IJ standard errors and Wald intervals", cmd_infer},
      {"alpha-range", "subsample-exponent admissibility diagnostics", cmd_alpha_range},
      {"benchmark", "Monte Carlo coverage study over a config grid", cmd_benchmark},
      {"oracle-zeta", "Monte Carlo single-overlap covariance", cmd_oracle_zeta},
  };
  std::vector<std::pair<CLI::App*, int (*)(const GlobalOpts&)>> dispatch;
  for (const auto& sub : subs) {
    CLI::App* s = app.add_subcommand(sub.name, sub.desc);
    s->fallthrough();  // global flags may follow the subcommand
    s->add_option("--config", g.config_path, "JSON config path")->required();
    s->add_option("--out", g.out_dir, "output directory (default .)");
    dispatch.emplace_back(s, sub.fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    for (const auto& [sub, fn] : dispatch)
      if (sub->parsed()) return fn(g);
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
