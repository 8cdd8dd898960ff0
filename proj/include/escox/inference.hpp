#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "escox/dataset.hpp"
#include "escox/ensemble.hpp"

namespace escox {

/// Wald-type interval with degeneracy bookkeeping.
struct InferenceResult {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double level = 0.95;
  bool clamped = false;  // the underlying variance estimate was negative
};

struct VarianceEstimate {
  double value = 0.0;
  bool clamped = false;
};

/// Bias-corrected infinitesimal-jackknife covariance between two prediction
/// vectors over the same inclusion matrix:
///   Z_ji = (J_ji - Jbar_i)(pred_j - mean), V_i = B^{-1} sum_j Z_ji,
///   cov = n(n-1)/(n-r)^2 * { sum_i V_i^A V_i^B
///         - [B(B-1)]^{-1} sum_i sum_j (Z^A_ji - V^A_i)(Z^B_ji - V^B_i) }.
/// Unclamped; symmetric in (preds_a, preds_b). Needs B >= 2 and r < n.
double ij_cov_from_predictions(const InclusionMatrix& inclusion,
                               const Eigen::VectorXd& preds_a,
                               const Eigen::VectorXd& preds_b);

/// Pointwise IJ variance at x; negative raw values clamp to 0 with a flag.
VarianceEstimate ij_pointwise_variance(const EnsembleModel& model,
                                       const Eigen::VectorXd& x);

/// Cross-covariance between g_B(x1) and g_B(x2); unclamped, symmetric, and
/// exactly equal to the unclamped pointwise variance when x1 == x2.
double ij_cross_covariance(const EnsembleModel& model, const Eigen::VectorXd& x1,
                           const Eigen::VectorXd& x2);

/// Contrast variance sigma^2(x1) + sigma^2(x2) - 2 tau(x1,x2), combined from
/// unclamped components, then clamped at 0 with a flag.
VarianceEstimate contrast_variance(const EnsembleModel& model,
                                   const Eigen::VectorXd& x1,
                                   const Eigen::VectorXd& x2);

/// Standard normal quantile, Wichura's PPND16 rational approximation.
double normal_quantile(double p);

InferenceResult wald_interval(double estimate, double std_error, double level);

/// Componentwise exponential of a log-hazard-ratio interval.
std::pair<double, double> relative_risk_interval(const InferenceResult& contrast);

/// Trains on a dataset and evaluates the fitted log-risk at one point.
using PointEstimator = std::function<double(
    const SurvivalDataset& data, std::uint64_t seed, const Eigen::VectorXd& x)>;
/// Draws one i.i.d. observation.
using ObservationSampler = std::function<Observation(Rng& rng)>;

/// Monte Carlo estimate of the single-overlap covariance
///   Cov{ g_hat(x1; D1,...,Dr), g_hat(x2; D1,D2',...,Dr') }:
/// each rep shares D1 between two otherwise independent size-r samples,
/// trains both estimators, and the sample covariance across reps is returned.
double single_overlap_cov_mc(const PointEstimator& estimator,
                             const ObservationSampler& sampler, int p0, int r,
                             const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                             int reps, std::uint64_t seed, int n_threads = 1);

/// Composite-smoothness inputs for the subsample-exponent calculator.
struct RateParams {
  int q = 0;
  std::vector<int> t;        // length q+1
  std::vector<double> gamma; // length q+1
  double delta = 0.0;
  double xi = 0.0;           // in (0,1): bias attenuation exponent
  double nu = 1.0;           // single-overlap decay exponent
  void validate() const;
};

/// Derived quantities: effective smoothness and the admissible window of the
/// subsample exponent alpha, plus the admissible windows for delta and nu.
struct AlphaRange {
  double c_eff = 0.0;
  int i_eff = 0;
  std::vector<double> gamma_star;
  std::vector<double> level_rates;
  double eta = 0.0;
  double m0 = 0.0;
  double delta_lower = 0.0, delta_upper = 0.0;
  double nu_lower = 1.0, nu_upper = 1.0;
  double alpha_lower = 0.0, alpha_upper = 0.0;
  bool delta_in_window = false;
  bool nu_in_window = false;
  bool admissible = false;  // alpha_lower < alpha_upper
};

AlphaRange alpha_range(const RateParams& params);

/// Human-readable diagnostic, including the separate alpha > 1/2 requirement
/// for IJ variance consistency.
std::string alpha_range_report(const RateParams& params, const AlphaRange& range);

}  // namespace escox
