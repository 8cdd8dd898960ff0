#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "escox/dataset.hpp"
#include "escox/ensemble.hpp"
#include "escox/errors.hpp"

using namespace escox;
namespace fs = std::filesystem;

namespace {

SurvivalDataset case1(int n, std::uint64_t seed) {
  SimulationSpec spec;
  spec.case_id = 1;
  spec.n = n;
  spec.seed = seed;
  return generate_case(spec);
}

TrainConfig fast_train(int epochs, std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = 0.01;
  cfg.seed = seed;
  return cfg;
}

NetworkConfig small_net(std::vector<int> widths) {
  NetworkConfig cfg;
  cfg.widths = std::move(widths);
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

TEST_CASE("draw_subsamples: structure and preconditions") {
  CHECK_THROWS_AS(draw_subsamples(5, 0, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(draw_subsamples(5, 6, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(draw_subsamples(5, 2, 0, 1), std::invalid_argument);

  const InclusionMatrix full = draw_subsamples(5, 5, 4, 1);
  for (const auto& row : full.rows) {
    REQUIRE(row.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(row[i] == i);
  }

  const InclusionMatrix inc = draw_subsamples(30, 7, 50, 2);
  for (const auto& row : inc.rows) {
    CHECK(row.size() == 7);
    const std::set<std::int32_t> uniq(row.begin(), row.end());
    CHECK(uniq.size() == 7);
    CHECK(*row.begin() >= 0);
    CHECK(row.back() < 30);
    CHECK(std::is_sorted(row.begin(), row.end()));
  }

  const InclusionMatrix again = draw_subsamples(30, 7, 50, 2);
  CHECK(again.rows == inc.rows);
  const InclusionMatrix other = draw_subsamples(30, 7, 50, 3);
  CHECK(other.rows != inc.rows);
}

TEST_CASE("draw_subsamples: columnwise inclusion frequency concentrates at r/n") {
  const int n = 10000, r = 100, B = 10000;
  const InclusionMatrix inc = draw_subsamples(n, r, B, 99);
  const Eigen::VectorXd means = inc.column_means();
  CHECK(means.size() == n);
  // Binomial(B, r/n)/B has sd ~ 0.000995: +-0.003 is the 3-sigma band per
  // column, and 5.5 sigma bounds the worst of the n columns.
  int within = 0;
  for (int i = 0; i < n; ++i)
    if (std::abs(means[i] - 0.01) <= 0.003) ++within;
  CHECK(within >= static_cast<int>(0.99 * n));
  CHECK(means.minCoeff() >= 0.01 - 0.0055);
  CHECK(means.maxCoeff() <= 0.01 + 0.0055);
  // overall mean is exactly r/n
  CHECK(means.mean() == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("fit_ensemble: B=1 equals one train call on the drawn subset") {
  const SurvivalDataset ds = case1(40, 11);
  const NetworkConfig net = small_net({10, 6, 1});
  const TrainConfig tc = fast_train(20);
  const std::uint64_t seed = 5;

  const EnsembleModel model = fit_ensemble(ds, net, tc, 15, 1, seed);
  REQUIRE(model.B() == 1);

  NetworkConfig base_net = net;
  base_net.seed = derive_seed(seed, rng_tag::kBaseNet, 0);
  TrainConfig base_tc = tc;
  base_tc.seed = derive_seed(seed, rng_tag::kBaseTrain, 0);
  const SurvivalDataset sub = ds.subset(model.inclusion.rows[0], "sub");
  const TrainResult direct = train(sub, base_net, base_tc);
  CHECK(params_equal(model.base_params[0], direct.params));
}

TEST_CASE("fit_ensemble: determinism and thread-count independence") {
  const SurvivalDataset ds = case1(40, 12);
  const NetworkConfig net = small_net({10, 5, 1});
  const TrainConfig tc = fast_train(15);
  const EnsembleModel serial = fit_ensemble(ds, net, tc, 20, 4, 7, 1);
  const EnsembleModel parallel = fit_ensemble(ds, net, tc, 20, 4, 7, 2);
  const EnsembleModel repeat = fit_ensemble(ds, net, tc, 20, 4, 7, 1);
  REQUIRE(serial.B() == 4);
  CHECK(serial.inclusion.rows == parallel.inclusion.rows);
  CHECK(serial.inclusion.rows == repeat.inclusion.rows);
  for (int b = 0; b < 4; ++b) {
    CHECK(params_equal(serial.base_params[b], parallel.base_params[b]));
    CHECK(params_equal(serial.base_params[b], repeat.base_params[b]));
  }
}

TEST_CASE("fit_ensemble: all-censored rows are redrawn and recorded") {
  // one event in 20 observations; r=4 rows frequently miss it at first
  std::vector<Observation> obs;
  Rng rng(13);
  for (int i = 0; i < 20; ++i) {
    Observation o;
    o.time = 1.0 + i * 0.25;
    o.event = (i == 3);
    o.covariates = Eigen::VectorXd::NullaryExpr(
        10, [&](Eigen::Index) { return rng.normal(); });
    obs.push_back(o);
  }
  const SurvivalDataset ds(obs, 10, "one-event");
  const EnsembleModel model =
      fit_ensemble(ds, small_net({10, 4, 1}), fast_train(5), 4, 12, 21);
  const InclusionMatrix naive = draw_subsamples(20, 4, 12, 21);
  bool any_redrawn = false;
  for (int b = 0; b < 12; ++b) {
    REQUIRE(model.inclusion.rows[b].size() == 4);
    CHECK(model.inclusion.contains(b, 3));  // every stored row has the event
    if (model.inclusion.rows[b] != naive.rows[b]) any_redrawn = true;
  }
  CHECK(any_redrawn);  // with P(miss) = (16/20 choose) ... redraws must occur
}

TEST_CASE("ensemble prediction is the exact mean; origin maps to zero") {
  const SurvivalDataset ds = case1(30, 14);
  const EnsembleModel model =
      fit_ensemble(ds, small_net({10, 5, 1}), fast_train(10), 12, 3, 31);

  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, -0.5, 0.5);
  const Eigen::VectorXd preds = base_predictions(model, x);
  REQUIRE(preds.size() == 3);
  CHECK(ensemble_predict(model, x) == preds.mean());
  for (int b = 0; b < 3; ++b)
    CHECK(preds[b] == predict_g(model.base_params[b], x));

  CHECK(ensemble_predict(model, Eigen::VectorXd::Zero(10)) == 0.0);

  // contrasts: zero at x1 == x2, exact antisymmetry
  Eigen::VectorXd y = -x;
  CHECK(contrast_estimate(model, x, x) == 0.0);
  CHECK(contrast_estimate(model, x, y) == -contrast_estimate(model, y, x));
}

TEST_CASE("two handcrafted base learners average to 2.0") {
  // learners computing g(x) = c * x_1 via one pass-through unit
  auto make_linear = [](double c) {
    NetworkConfig cfg;
    cfg.widths = {1, 1, 1};
    NetworkParams p = init_network(cfg);
    p.weights[0](0, 0) = 1.0;
    p.weights[1](0, 0) = c;
    p.biases[0][0] = 0.0;
    return p;
  };
  EnsembleModel model;
  model.base_params = {make_linear(1.0), make_linear(3.0)};
  model.inclusion = draw_subsamples(4, 2, 2, 0);
  model.n = 4;
  model.r = 2;
  Eigen::VectorXd x(1);
  x << 1.0;
  CHECK(ensemble_predict(model, x) == 2.0);
}

TEST_CASE("ensemble beats its worst base learner on case 1") {
  const SurvivalDataset ds = case1(400, 15);
  const int r = static_cast<int>(std::floor(std::pow(400.0, 0.9)));
  TrainConfig tc = fast_train(150);
  tc.dropout_rate = 0.1;
  const EnsembleModel model =
      fit_ensemble(ds, small_net({10, 16, 8, 1}), tc, r, 50, 41, 2);

  const Eigen::MatrixXd test_x = draw_test_points(20, kSimDim, 42);
  double ens_mae = 0.0;
  Eigen::VectorXd base_mae = Eigen::VectorXd::Zero(50);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = test_x.row(i).transpose();
    const double truth = true_risk(1, x);
    const Eigen::VectorXd preds = base_predictions(model, x);
    ens_mae += std::abs(preds.mean() - truth) / 20.0;
    for (int b = 0; b < 50; ++b)
      base_mae[b] += std::abs(preds[b] - truth) / 20.0;
  }
  CHECK(ens_mae < base_mae.maxCoeff());

  // a unit move along x1 has true log-hazard contrast 1.0
  Eigen::VectorXd base_pt = Eigen::VectorXd::Zero(10);
  Eigen::VectorXd shifted = base_pt;
  shifted[0] += 1.0;
  CHECK(std::abs(contrast_estimate(model, shifted, base_pt) - 1.0) <= 0.5);
}

TEST_CASE("model directory round trip preserves predictions bit-for-bit") {
  const SurvivalDataset ds = case1(35, 16);
  EnsembleModel model =
      fit_ensemble(ds, small_net({10, 6, 1}), fast_train(12), 14, 5, 51);
  model.alpha = 0.9;

  const fs::path dir = fs::temp_directory_path() / "escox_model_rt";
  fs::remove_all(dir);
  save_model(model, dir.string());
  const EnsembleModel loaded = load_model(dir.string());

  CHECK(loaded.n == model.n);
  CHECK(loaded.r == model.r);
  CHECK(loaded.B() == model.B());
  REQUIRE(loaded.alpha.has_value());
  CHECK(*loaded.alpha == 0.9);
  CHECK(loaded.inclusion.rows == model.inclusion.rows);
  CHECK(loaded.train_config.epochs == model.train_config.epochs);

  Rng rng(17);
  for (int it = 0; it < 5; ++it) {
    Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(
        10, [&](Eigen::Index) { return rng.normal(); });
    CHECK(ensemble_predict(loaded, x) == ensemble_predict(model, x));
  }
}
