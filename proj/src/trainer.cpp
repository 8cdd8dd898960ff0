#include "escox/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "escox/coxloss.hpp"
#include "escox/errors.hpp"

namespace escox {

void TrainConfig::validate() const {
  // learning_rate 0 is admitted as the exact zero step.
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be nonnegative and finite");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (weight_decay < 0.0)
    throw std::invalid_argument("weight_decay must be nonnegative");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("dropout_rate must lie in [0,1)");
}

namespace {

struct AdamState {
  Gradients m;
  Gradients v;
  int t = 0;
};

void apply_plain_gd(NetworkParams& p, const Gradients& g, double lr) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) p.weights[l] -= lr * g.weights[l];
  for (std::size_t l = 0; l < p.biases.size(); ++l) p.biases[l] -= lr * g.biases[l];
}

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

template <typename Mat>
void adam_update(Mat& theta, Mat& m, Mat& v, const Mat& grad, double lr,
                 double c1, double c2) {
  m = kBeta1 * m + (1.0 - kBeta1) * grad;
  v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
}

void apply_adam(NetworkParams& p, const Gradients& g, AdamState& s, double lr) {
  ++s.t;
  const double c1 = 1.0 - std::pow(kBeta1, s.t);
  const double c2 = 1.0 - std::pow(kBeta2, s.t);
  for (std::size_t l = 0; l < p.weights.size(); ++l)
    adam_update(p.weights[l], s.m.weights[l], s.v.weights[l], g.weights[l], lr,
                c1, c2);
  for (std::size_t l = 0; l < p.biases.size(); ++l)
    adam_update(p.biases[l], s.m.biases[l], s.v.biases[l], g.biases[l], lr, c1,
                c2);
}

}  // namespace

TrainResult train(const SurvivalDataset& dataset, NetworkConfig net_config,
                  const TrainConfig& config) {
  config.validate();
  // The training-time regularizers are authoritative; record them on the
  // returned network so serialized models carry what was actually used.
  net_config.dropout_rate = config.dropout_rate;
  net_config.weight_decay = config.weight_decay;
  net_config.validate();
  if (net_config.input_dim() != dataset.p0())
    throw std::invalid_argument("network input width does not match dataset p0");

  const int n = dataset.size();
  const Eigen::MatrixXd x = dataset.covariate_matrix();
  const RiskOrder risk_order = make_risk_order(dataset.times(), dataset.events());

  NetworkParams params = init_network(net_config);
  BatchEvaluator eval(net_config, x);
  Rng dropout_rng(derive_seed(config.seed, rng_tag::kDropout));

  AdamState adam;
  if (config.optimizer == Optimizer::AdaptiveMoments) {
    adam.m = params.zero_gradients();
    adam.v = params.zero_gradients();
  }

  TrainResult result;
  result.loss_trace.reserve(config.epochs);
  BatchMasks masks;  // stays empty when dropout is off
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.dropout_rate > 0.0)
      masks = draw_batch_masks(net_config, config.dropout_rate, n, dropout_rng);

    const Eigen::VectorXd& scores = eval.forward(params, masks);
    const double loss = neg_log_partial_likelihood(scores, risk_order);
    if (!std::isfinite(loss)) throw TrainingDivergedError(epoch);
    result.loss_trace.push_back(loss);

    const Eigen::VectorXd dscores = partial_likelihood_score(scores, risk_order);
    Gradients grads = eval.backward(params, dscores);
    if (config.weight_decay > 0.0)
      for (std::size_t l = 0; l < grads.weights.size(); ++l)
        grads.weights[l] += config.weight_decay * params.weights[l];

    if (config.optimizer == Optimizer::PlainGd)
      apply_plain_gd(params, grads, config.learning_rate);
    else
      apply_adam(params, grads, adam, config.learning_rate);
  }

  result.params = std::move(params);
  return result;
}

bool training_budget_check(const std::vector<double>& loss_trace,
                           double plateau_tol) {
  if (loss_trace.empty())
    throw std::invalid_argument("loss trace must be nonempty");
  const double final_loss = loss_trace.back();
  double min_loss = loss_trace.front();
  for (double v : loss_trace) min_loss = std::min(min_loss, v);
  if (final_loss > min_loss + 1e-6) return false;

  const int len = static_cast<int>(loss_trace.size());
  const int window = std::max(1, len / 10);
  const double window_decrease = loss_trace[len - window] - final_loss;
  const double total_decrease = std::max(loss_trace.front() - final_loss, 0.0);
  return window_decrease <= plateau_tol * total_decrease + 1e-12;
}

void write_loss_trace_csv(const std::vector<double>& trace,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss trace: " + path);
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", trace[i]);
    out << (i + 1) << ',' << buf << "\n";
  }
}

}  // namespace escox
