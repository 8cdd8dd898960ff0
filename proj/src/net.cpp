#include "escox/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace escox {

void NetworkConfig::validate() const {
  if (widths.size() < 3)
    throw std::invalid_argument("network needs at least one hidden layer");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("all layer widths must be positive");
  if (widths.back() != 1)
    throw std::invalid_argument("output width must be 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("dropout_rate must lie in [0,1)");
  if (weight_decay < 0.0)
    throw std::invalid_argument("weight_decay must be nonnegative");
}

void Gradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

Gradients NetworkParams::zero_gradients() const {
  Gradients g;
  g.weights.reserve(weights.size());
  g.biases.reserve(biases.size());
  for (const auto& w : weights)
    g.weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : biases)
    g.biases.push_back(Eigen::VectorXd::Zero(b.size()));
  return g;
}

NetworkParams init_network(const NetworkConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, rng_tag::kNetInit));
  NetworkParams p;
  p.config = config;
  const int n_layers = static_cast<int>(config.widths.size()) - 1;
  p.weights.reserve(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    const int fan_in = config.widths[l];
    const int fan_out = config.widths[l + 1];
    Eigen::MatrixXd w(fan_out, fan_in);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int i = 0; i < fan_out; ++i)
      for (int j = 0; j < fan_in; ++j) w(i, j) = sd * rng.normal();
    p.weights.push_back(std::move(w));
    if (l < n_layers - 1)
      p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return p;
}

DropoutMask draw_dropout_mask(const NetworkConfig& config, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0,1)");
  DropoutMask m;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int l = 1; l + 1 < static_cast<int>(config.widths.size()); ++l) {
    Eigen::VectorXd v(config.widths[l]);
    for (int j = 0; j < v.size(); ++j)
      v[j] = rng.uniform01() < rate ? 0.0 : keep_scale;
    m.scale.push_back(std::move(v));
  }
  return m;
}

BatchMasks draw_batch_masks(const NetworkConfig& config, double rate, int n, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0,1)");
  BatchMasks m;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int l = 1; l + 1 < static_cast<int>(config.widths.size()); ++l) {
    Eigen::MatrixXd s(n, config.widths[l]);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < s.cols(); ++j)
        s(i, j) = rng.uniform01() < rate ? 0.0 : keep_scale;
    m.scale.push_back(std::move(s));
  }
  return m;
}

namespace {

void check_input(const NetworkParams& params, const Eigen::VectorXd& x) {
  if (x.size() != params.config.input_dim())
    throw std::invalid_argument("input length does not match network input width");
}

}  // namespace

double forward_raw(const NetworkParams& params, const Eigen::VectorXd& x,
                   const DropoutMask* mask) {
  check_input(params, x);
  const int hidden = params.config.hidden_layers();
  if (mask && static_cast<int>(mask->scale.size()) != hidden)
    throw std::invalid_argument("dropout mask layer count mismatch");
  Eigen::VectorXd a = x;
  for (int l = 0; l < hidden; ++l) {
    Eigen::VectorXd z = params.weights[l] * a + params.biases[l];
    a = z.cwiseMax(0.0);
    if (mask) {
      if (mask->scale[l].size() != a.size())
        throw std::invalid_argument("dropout mask width mismatch");
      a = a.cwiseProduct(mask->scale[l]);
    }
  }
  return (params.weights.back() * a)(0);
}

double predict_g(const NetworkParams& params, const Eigen::VectorXd& x) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(params.config.input_dim());
  return forward_raw(params, x) - forward_raw(params, zero);
}

BatchEvaluator::BatchEvaluator(const NetworkConfig& config,
                               const Eigen::MatrixXd& x) {
  config.validate();
  if (x.cols() != config.input_dim())
    throw std::invalid_argument("batch column count does not match input width");
  n_ = static_cast<int>(x.rows());
  // Stacked design: rows [0, n) carry the samples, rows [n, 2n) carry the
  // paired zero inputs sharing sample i's dropout mask.
  Eigen::MatrixXd a0 = Eigen::MatrixXd::Zero(2 * n_, config.input_dim());
  a0.topRows(n_) = x;
  acts_.assign(1, std::move(a0));
  scores_.resize(n_);
}

const Eigen::VectorXd& BatchEvaluator::forward(const NetworkParams& params,
                                               const BatchMasks& masks) {
  const int hidden = params.config.hidden_layers();
  if (!masks.empty() && static_cast<int>(masks.scale.size()) != hidden)
    throw std::invalid_argument("batch mask layer count mismatch");
  acts_.resize(1);
  relu_on_.clear();
  for (int l = 0; l < hidden; ++l) {
    Eigen::MatrixXd z = acts_[l] * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    Eigen::MatrixXd on = (z.array() > 0.0).cast<double>().matrix();
    if (!masks.empty()) {
      if (masks.scale[l].rows() != n_ || masks.scale[l].cols() != z.cols())
        throw std::invalid_argument("batch mask shape mismatch");
      on.topRows(n_).array() *= masks.scale[l].array();
      on.bottomRows(n_).array() *= masks.scale[l].array();
    }
    relu_on_.push_back(on);
    // relu(z) * indicator == relu(z), so multiplying by `on` applies both
    // the ReLU and the mask scaling in one pass.
    acts_.push_back(z.cwiseMax(0.0).cwiseProduct(on));
  }
  f_all_ = acts_.back() * params.weights.back().transpose();
  scores_ = f_all_.head(n_) - f_all_.tail(n_);
  return scores_;
}

Gradients BatchEvaluator::backward(const NetworkParams& params,
                                   const Eigen::VectorXd& dscores) {
  if (static_cast<int>(dscores.size()) != n_)
    throw std::invalid_argument("score gradient length mismatch");
  const int hidden = params.config.hidden_layers();
  Gradients grads = params.zero_gradients();

  // d(sum_i s_i g_i)/df over the stacked rows: +s_i on the x row, -s_i on
  // the paired zero row.
  Eigen::VectorXd df(2 * n_);
  df.head(n_) = dscores;
  df.tail(n_) = -dscores;

  grads.weights[hidden] = df.transpose() * acts_[hidden];
  Eigen::MatrixXd delta =
      (df * params.weights[hidden]).cwiseProduct(relu_on_[hidden - 1]);
  for (int l = hidden - 1; l >= 0; --l) {
    grads.weights[l] = delta.transpose() * acts_[l];
    grads.biases[l] = delta.colwise().sum().transpose();
    if (l > 0)
      delta = (delta * params.weights[l]).cwiseProduct(relu_on_[l - 1]);
  }
  return grads;
}

Gradients backward(const NetworkParams& params,
                   const std::vector<Eigen::VectorXd>& inputs,
                   const Eigen::VectorXd& score_grads,
                   const BatchMasks* masks) {
  if (static_cast<int>(inputs.size()) != score_grads.size())
    throw std::invalid_argument("inputs and score_grads lengths differ");
  const int n = static_cast<int>(inputs.size());
  Eigen::MatrixXd x(n, params.config.input_dim());
  for (int i = 0; i < n; ++i) {
    check_input(params, inputs[i]);
    x.row(i) = inputs[i].transpose();
  }
  BatchEvaluator eval(params.config, x);
  eval.forward(params, masks ? *masks : BatchMasks{});
  return eval.backward(params, score_grads);
}

namespace {

constexpr char kMagic[8] = {'E', 'S', 'C', 'X', 'N', 'E', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated network file");
  return v;
}

}  // namespace

void save_network(const NetworkParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write network file: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, static_cast<std::uint32_t>(params.config.widths.size()));
  for (int w : params.config.widths) write_pod(out, static_cast<std::uint32_t>(w));
  write_pod(out, params.config.dropout_rate);
  write_pod(out, params.config.weight_decay);
  write_pod(out, params.config.seed);
  for (const auto& w : params.weights)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) write_pod(out, w(i, j));
  for (const auto& b : params.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) write_pod(out, b[i]);
  if (!out) throw std::runtime_error("write failed: " + path);
}

NetworkParams load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open network file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not a network parameter file: " + path);
  NetworkConfig cfg;
  const auto n_widths = read_pod<std::uint32_t>(in);
  if (n_widths < 3 || n_widths > 1024)
    throw std::runtime_error("corrupt network file (widths): " + path);
  cfg.widths.resize(n_widths);
  for (auto& w : cfg.widths) w = static_cast<int>(read_pod<std::uint32_t>(in));
  cfg.dropout_rate = read_pod<double>(in);
  cfg.weight_decay = read_pod<double>(in);
  cfg.seed = read_pod<std::uint64_t>(in);
  cfg.validate();
  NetworkParams p;
  p.config = cfg;
  const int n_layers = static_cast<int>(cfg.widths.size()) - 1;
  for (int l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd w(cfg.widths[l + 1], cfg.widths[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = read_pod<double>(in);
    p.weights.push_back(std::move(w));
  }
  for (int l = 0; l < n_layers - 1; ++l) {
    Eigen::VectorXd b(cfg.widths[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = read_pod<double>(in);
    p.biases.push_back(std::move(b));
  }
  return p;
}

}  // namespace escox
