#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "escox/dataset.hpp"
#include "escox/errors.hpp"

using namespace escox;
namespace fs = std::filesystem;

namespace {

// Independently written transcriptions of the three risk functions, kept
// deliberately separate from the library implementation.
double oracle_risk(int case_id, const Eigen::VectorXd& x) {
  const double a = x[0], b = x[1], c = x[2];
  if (case_id == 1) return a + 0.8 * c - 1.2 * b;
  if (case_id == 2) return 0.4 * std::pow(b, 2) + 0.7 * a + 0.3 * a * b - 0.5 * c;
  const double bump =
      std::exp(-(std::pow(a - 1.0, 2) + std::pow(b + 1.0, 2)) / 4.0);
  return 0.7 * a - 0.8 * c + 0.5 * b * b + std::sin(a * b / 2.0) +
         1.2 * (bump - std::exp(-0.5));
}

std::string temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "escox_data_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("true_risk matches the case formulas") {
  CHECK(true_risk(1, Eigen::VectorXd::Zero(kSimDim)) == 0.0);

  Eigen::VectorXd ones = Eigen::VectorXd::Zero(kSimDim);
  ones[0] = ones[1] = ones[2] = 1.0;
  CHECK(true_risk(1, ones) == doctest::Approx(0.6).epsilon(1e-12));

  Eigen::VectorXd center = Eigen::VectorXd::Zero(kSimDim);
  center[0] = 1.0;
  center[1] = -1.0;
  CHECK(true_risk(3, center) ==
        doctest::Approx(oracle_risk(3, center)).epsilon(1e-12));

  // Only x1..x3 matter; cross-check the whole formula set on random points.
  Rng rng(99);
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd x(kSimDim);
    for (int j = 0; j < kSimDim; ++j) x[j] = rng.truncated_normal(3.0);
    for (int case_id : {1, 2, 3}) {
      CHECK(true_risk(case_id, x) ==
            doctest::Approx(oracle_risk(case_id, x)).epsilon(1e-12));
      Eigen::VectorXd signal = Eigen::VectorXd::Zero(kSimDim);
      signal[0] = x[0];
      signal[1] = x[1];
      signal[2] = x[2];
      CHECK(true_risk(case_id, x) == true_risk(case_id, signal));
    }
  }

  CHECK_THROWS_AS(true_risk(4, ones), std::invalid_argument);
  CHECK_THROWS_AS(true_risk(1, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("sample_event_time inverts the cumulative hazard") {
  CHECK(sample_event_time(0.0, std::exp(-0.05)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sample_event_time(0.0, std::exp(-0.2)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sample_event_time(std::log(4.0), std::exp(-0.2)) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(sample_event_time(0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_event_time(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_event_time(0.0, -0.5), std::invalid_argument);
}

TEST_CASE("empirical survival curve matches exp(-0.05 t^2 e^g)") {
  const int n = 100000;
  for (double g : {0.0, std::log(4.0)}) {
    Rng rng(g == 0.0 ? 4242 : 777);
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i)
      draws[i] = sample_event_time(g, rng.uniform_open01());
    std::sort(draws.begin(), draws.end());
    const double t99 = std::sqrt(-std::log(0.01) / (0.05 * std::exp(g)));
    double worst = 0.0;
    for (int k = 1; k <= 60; ++k) {
      const double t = t99 * k / 60.0;
      const auto it = std::upper_bound(draws.begin(), draws.end(), t);
      const double emp_surv =
          static_cast<double>(draws.end() - it) / static_cast<double>(n);
      const double true_surv = std::exp(-0.05 * t * t * std::exp(g));
      worst = std::max(worst, std::abs(emp_surv - true_surv));
    }
    CHECK(worst < 0.01);
  }
}

TEST_CASE("censoring calibration hits the target on its probe") {
  CHECK_THROWS_AS(calibrate_censoring_rate(1, 20000, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_censoring_rate(1, 20000, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_censoring_rate(1, 100, 0.3, 1), std::invalid_argument);

  const std::uint64_t seed = 314;
  const double mu = calibrate_censoring_rate(1, 20000, 0.30, seed);
  CHECK(mu > 0.0);
  const double achieved = censoring_fraction_probe(1, 20000, mu, seed);
  CHECK(achieved >= 0.29);
  CHECK(achieved <= 0.31);

  CHECK(censoring_fraction_probe(1, 20000, 0.0, seed) == 0.0);
}

TEST_CASE("generate_case is deterministic, truncated, and calibrated") {
  SimulationSpec spec;
  spec.case_id = 1;
  spec.n = 50;
  spec.seed = 2024;

  const SurvivalDataset a = generate_case(spec);
  const SurvivalDataset b = generate_case(spec);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.observations()[i].time == b.observations()[i].time);
    CHECK(a.observations()[i].event == b.observations()[i].event);
    CHECK(a.observations()[i].covariates == b.observations()[i].covariates);
  }

  SimulationSpec big = spec;
  big.n = 10000;
  for (int case_id : {1, 2, 3}) {
    big.case_id = case_id;
    const SurvivalDataset ds = generate_case(big);
    int censored = 0;
    for (const auto& o : ds.observations()) {
      if (!o.event) ++censored;
      CHECK(o.time >= 0.0);
    }
    const Eigen::MatrixXd covs = ds.covariate_matrix();
    CHECK(covs.minCoeff() >= -3.0);
    CHECK(covs.maxCoeff() <= 3.0);
    const double frac = static_cast<double>(censored) / big.n;
    CHECK(frac >= 0.27);
    CHECK(frac <= 0.33);
  }

  SimulationSpec bad = spec;
  bad.n = 1;
  CHECK_THROWS_AS(generate_case(bad), std::invalid_argument);
  bad = spec;
  bad.case_id = 9;
  CHECK_THROWS_AS(generate_case(bad), std::invalid_argument);
  bad = spec;
  bad.censor_rate_target = 0.0;
  CHECK_THROWS_AS(generate_case(bad), std::invalid_argument);
}

TEST_CASE("dataset validation") {
  Observation good{1.0, true, Eigen::VectorXd::Zero(2)};
  CHECK_THROWS_AS(SurvivalDataset({}, 2, "empty"), ValidationError);
  CHECK_THROWS_AS(
      SurvivalDataset({Observation{-1.0, true, Eigen::VectorXd::Zero(2)}}, 2, "neg"),
      ValidationError);
  CHECK_THROWS_AS(
      SurvivalDataset({Observation{1.0, true, Eigen::VectorXd::Zero(3)}}, 2, "dim"),
      ValidationError);
  CHECK_THROWS_AS(
      SurvivalDataset({Observation{1.0, false, Eigen::VectorXd::Zero(2)}}, 2,
                      "no-event"),
      ValidationError);
  Eigen::VectorXd nanv = Eigen::VectorXd::Zero(2);
  nanv[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(SurvivalDataset({Observation{1.0, true, nanv}}, 2, "nan"),
                  ValidationError);
  const SurvivalDataset ok({good}, 2, "ok");
  CHECK(ok.event_count() == 1);
}

TEST_CASE("CSV load and save") {
  const std::string good_path = temp_file("good.csv");
  {
    std::ofstream out(good_path);
    out << "time,event,x1,x2\n";
    out << "1.5,1,0.25,-1\n";
    out << "2.0,0,1,2\n";
    out << "0.5,1,-0.125,3\n";
  }
  const SurvivalDataset ds = load_dataset(good_path);
  CHECK(ds.size() == 3);
  CHECK(ds.p0() == 2);
  CHECK(ds.observations()[0].time == 1.5);
  CHECK(ds.observations()[1].event == false);
  CHECK(ds.observations()[2].covariates[0] == -0.125);

  // round trip is value-exact
  const std::string rt_path = temp_file("roundtrip.csv");
  save_dataset_csv(ds, rt_path);
  const SurvivalDataset ds2 = load_dataset(rt_path);
  REQUIRE(ds2.size() == ds.size());
  for (int i = 0; i < ds.size(); ++i) {
    CHECK(ds2.observations()[i].time == ds.observations()[i].time);
    CHECK(ds2.observations()[i].event == ds.observations()[i].event);
    CHECK(ds2.observations()[i].covariates == ds.observations()[i].covariates);
  }

  const std::string bad_event = temp_file("bad_event.csv");
  {
    std::ofstream out(bad_event);
    out << "time,event,x1\n1.0,2,0.5\n";
  }
  CHECK_THROWS_AS(load_dataset(bad_event), ValidationError);

  const std::string empty = temp_file("empty.csv");
  { std::ofstream out(empty); }
  CHECK_THROWS_AS(load_dataset(empty), ParseError);

  const std::string neg_time = temp_file("neg_time.csv");
  {
    std::ofstream out(neg_time);
    out << "time,event,x1\n-3,1,0.5\n";
  }
  CHECK_THROWS_AS(load_dataset(neg_time), ValidationError);

  const std::string malformed = temp_file("malformed.csv");
  {
    std::ofstream out(malformed);
    out << "time,event,x1\n1.0,1,0.5\nnot-a-number,1,0.5\n";
  }
  try {
    load_dataset(malformed);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  CHECK_THROWS_AS(load_dataset(temp_file("missing.csv")), ParseError);
}
