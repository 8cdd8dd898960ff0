#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "escox/rng.hpp"

namespace escox {

/// One right-censored subject: follow-up time T = min(event, censor),
/// event indicator, and baseline covariates.
struct Observation {
  double time = 0.0;
  bool event = false;
  Eigen::VectorXd covariates;
};

/// Immutable collection of observations sharing a covariate dimension.
/// Construction validates: finite nonnegative times, finite covariates of
/// length p0, and at least one observed event (the partial likelihood is
/// constant on fully censored data).
class SurvivalDataset {
 public:
  SurvivalDataset(std::vector<Observation> observations, int p0,
                  std::string name);

  const std::vector<Observation>& observations() const { return obs_; }
  int p0() const { return p0_; }
  const std::string& name() const { return name_; }
  int size() const { return static_cast<int>(obs_.size()); }
  int event_count() const { return event_count_; }

  Eigen::VectorXd times() const;
  std::vector<std::uint8_t> events() const;
  /// n x p0 matrix, one row per observation.
  Eigen::MatrixXd covariate_matrix() const;

  /// Dataset restricted to the given observation indices (kept in order).
  SurvivalDataset subset(const std::vector<std::int32_t>& indices,
                         std::string name) const;

 private:
  std::vector<Observation> obs_;
  int p0_ = 0;
  std::string name_;
  int event_count_ = 0;
};

/// Simulation settings for the three synthetic designs.
struct SimulationSpec {
  int case_id = 1;                  // 1, 2 or 3
  int n = 0;                        // sample size, >= 2
  double censor_rate_target = 0.30; // strictly inside (0,1)
  std::uint64_t seed = 0;
  void validate() const;
};

/// Covariate dimension of all three simulation cases.
inline constexpr int kSimDim = 10;

/// True log-risk g0 for the given case; depends only on x1..x3.
double true_risk(int case_id, const Eigen::VectorXd& x);

/// Inverse-transform event time for hazard 0.1 * t * exp(g): cumulative
/// hazard 0.05 t^2 e^g, so T = sqrt(-ln(u) / (0.05 e^g)) for u in (0,1).
double sample_event_time(double g_value, double rng_draw);

/// Fraction of a probe sample of n_probe simulated subjects whose
/// exponential(mu) censoring time precedes the event time. mu = 0 gives 0.
double censoring_fraction_probe(int case_id, int n_probe, double mu,
                                std::uint64_t seed);

/// Bisection on the exponential censoring rate over [1e-6, 1e3] until the
/// probe censoring fraction is within +-0.01 of target.
double calibrate_censoring_rate(int case_id, int n_probe, double target,
                                std::uint64_t seed);

/// Calibrated rate for (case, target) with a fixed internal probe seed and
/// n_probe = 1e5; memoized so every dataset of a case shares one rate.
double calibrated_censoring_rate(int case_id, double target);

/// Simulates a dataset: covariates N(0, I_10) truncated componentwise to
/// [-3,3] by rejection, event times from the case hazard, independent
/// exponential censoring at the calibrated rate. Deterministic given spec.
SurvivalDataset generate_case(const SimulationSpec& spec);

/// m fixed evaluation points drawn with the same truncated-normal scheme
/// as training covariates.
Eigen::MatrixXd draw_test_points(int m, int p0, std::uint64_t seed);

/// Reads the CSV schema `time,event,x1,...,xp` (UTF-8, comma separators,
/// dot decimal). Event entries must be 0 or 1.
SurvivalDataset load_dataset(const std::string& path);

/// Writes a dataset in the same CSV schema, round-trip exact via %.17g.
void save_dataset_csv(const SurvivalDataset& ds, const std::string& path);

}  // namespace escox
