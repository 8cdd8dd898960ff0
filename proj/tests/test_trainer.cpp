#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "escox/coxloss.hpp"
#include "escox/dataset.hpp"
#include "escox/errors.hpp"
#include "escox/trainer.hpp"

using namespace escox;

namespace {

SurvivalDataset tiny_case1(int n, std::uint64_t seed) {
  SimulationSpec spec;
  spec.case_id = 1;
  spec.n = n;
  spec.seed = seed;
  return generate_case(spec);
}

NetworkConfig net_cfg(std::vector<int> widths, std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.widths = std::move(widths);
  cfg.seed = seed;
  return cfg;
}

bool params_equal(const NetworkParams& a, const NetworkParams& b) {
  for (std::size_t l = 0; l < a.weights.size(); ++l)
    if (a.weights[l] != b.weights[l]) return false;
  for (std::size_t l = 0; l < a.biases.size(); ++l)
    if (a.biases[l] != b.biases[l]) return false;
  return true;
}

}  // namespace

TEST_CASE("config preconditions") {
  const SurvivalDataset ds = tiny_case1(20, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(ds, net_cfg({10, 4, 1}, 0), cfg), std::invalid_argument);
  cfg.epochs = 1;
  cfg.learning_rate = -0.1;
  CHECK_THROWS_AS(train(ds, net_cfg({10, 4, 1}, 0), cfg), std::invalid_argument);
  cfg.learning_rate = 0.1;
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(train(ds, net_cfg({10, 4, 1}, 0), cfg), std::invalid_argument);
}

TEST_CASE("zero learning rate keeps the initialization") {
  const SurvivalDataset ds = tiny_case1(30, 2);
  for (Optimizer opt : {Optimizer::PlainGd, Optimizer::AdaptiveMoments}) {
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 5;
    cfg.optimizer = opt;
    cfg.dropout_rate = 0.1;
    cfg.seed = 3;
    NetworkConfig net = net_cfg({10, 6, 1}, 17);
    const TrainResult res = train(ds, net, cfg);
    NetworkConfig as_trained = net;
    as_trained.dropout_rate = cfg.dropout_rate;
    as_trained.weight_decay = cfg.weight_decay;
    CHECK(params_equal(res.params, init_network(as_trained)));
  }
}

TEST_CASE("one plain-gd step is exactly -lr (grad + wd W)") {
  const SurvivalDataset ds = tiny_case1(25, 4);
  NetworkConfig net = net_cfg({10, 5, 1}, 23);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::PlainGd;
  cfg.learning_rate = 0.05;
  cfg.epochs = 1;
  cfg.dropout_rate = 0.0;
  cfg.weight_decay = 0.02;

  NetworkConfig as_trained = net;
  as_trained.dropout_rate = 0.0;
  as_trained.weight_decay = cfg.weight_decay;
  NetworkParams expected = init_network(as_trained);
  BatchEvaluator eval(as_trained, ds.covariate_matrix());
  const Eigen::VectorXd scores = eval.forward(expected, BatchMasks{});
  const Eigen::VectorXd dscores =
      partial_likelihood_score(scores, ds.times(), ds.events());
  Gradients grads = eval.backward(expected, dscores);
  for (std::size_t l = 0; l < grads.weights.size(); ++l)
    grads.weights[l] += cfg.weight_decay * expected.weights[l];
  for (std::size_t l = 0; l < expected.weights.size(); ++l)
    expected.weights[l] -= cfg.learning_rate * grads.weights[l];
  for (std::size_t l = 0; l < expected.biases.size(); ++l)
    expected.biases[l] -= cfg.learning_rate * grads.biases[l];

  const TrainResult res = train(ds, net, cfg);
  CHECK(params_equal(res.params, expected));
}

TEST_CASE("training is deterministic") {
  const SurvivalDataset ds = tiny_case1(40, 5);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 9;
  NetworkConfig net = net_cfg({10, 8, 1}, 31);
  const TrainResult a = train(ds, net, cfg);
  const TrainResult b = train(ds, net, cfg);
  CHECK(params_equal(a.params, b.params));
  CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("monotone smoke test: epoch-500 loss below epoch-1 loss") {
  const SurvivalDataset ds = tiny_case1(50, 6);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.dropout_rate = 0.0;
  cfg.seed = 10;
  const TrainResult res = train(ds, net_cfg({10, 8, 1}, 41), cfg);
  REQUIRE(res.loss_trace.size() == 500);
  CHECK(res.loss_trace.back() < res.loss_trace.front());
}

TEST_CASE("diverged training reports the epoch") {
  // Huge covariates with plain GD blow the weights up within a few steps.
  std::vector<Observation> obs;
  Rng rng(123);
  for (int i = 0; i < 6; ++i) {
    Observation o;
    o.time = 1.0 + i;
    o.event = true;
    o.covariates = Eigen::VectorXd::Constant(3, 1e200).cwiseProduct(
        Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return rng.normal(); }));
    obs.push_back(o);
  }
  const SurvivalDataset ds(obs, 3, "explode");
  TrainConfig cfg;
  cfg.optimizer = Optimizer::PlainGd;
  cfg.learning_rate = 0.5;
  cfg.epochs = 60;
  cfg.dropout_rate = 0.0;
  try {
    train(ds, net_cfg({3, 4, 1}, 7), cfg);
    FAIL("expected TrainingDivergedError");
  } catch (const TrainingDivergedError& e) {
    CHECK(e.epoch >= 1);
    CHECK(e.epoch <= 60);
  }
}

TEST_CASE("budget check semantics") {
  CHECK_THROWS_AS(training_budget_check({}), std::invalid_argument);

  std::vector<double> decreasing;
  for (int i = 0; i < 100; ++i) decreasing.push_back(10.0 - 0.1 * i);
  CHECK(training_budget_check(decreasing));

  std::vector<double> rebound = decreasing;
  const double trace_min = *std::min_element(rebound.begin(), rebound.end());
  rebound.push_back(trace_min * 1.10);  // ends 10% above the minimum
  CHECK_FALSE(training_budget_check(rebound));

  const std::vector<double> constant(50, 2.5);
  CHECK(training_budget_check(constant));
}

TEST_CASE("trained network recovers the case-1 signal (Pearson >= 0.9)") {
  SimulationSpec spec;
  spec.case_id = 1;
  spec.n = 2000;
  spec.seed = 71;
  const SurvivalDataset ds = generate_case(spec);

  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.learning_rate = 0.01;
  cfg.dropout_rate = 0.1;
  cfg.weight_decay = 0.02;
  cfg.seed = 72;
  const TrainResult res = train(ds, net_cfg({10, 32, 16, 1}, 73), cfg);

  const Eigen::MatrixXd grid = draw_test_points(200, kSimDim, 74);
  Eigen::VectorXd pred(200), truth(200);
  for (int i = 0; i < 200; ++i) {
    pred[i] = predict_g(res.params, grid.row(i).transpose());
    truth[i] = true_risk(1, grid.row(i).transpose());
  }
  const double pm = pred.mean(), tm = truth.mean();
  const double cov = ((pred.array() - pm) * (truth.array() - tm)).sum();
  const double sp = std::sqrt((pred.array() - pm).square().sum());
  const double st = std::sqrt((truth.array() - tm).square().sum());
  const double pearson = cov / (sp * st);
  CHECK(pearson >= 0.9);
}

TEST_CASE("loss trace CSV export") {
  const auto path =
      (std::filesystem::temp_directory_path() / "escox_trace.csv").string();
  write_loss_trace_csv({1.5, 1.25, 1.0}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,loss");
  std::getline(in, line);
  CHECK(line == "1,1.5");
}
