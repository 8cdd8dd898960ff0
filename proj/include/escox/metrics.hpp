#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "escox/trainer.hpp"

namespace escox {

/// One row of a simulation summary table (Bias/MAE/EmpSD/SE/CP/AIL).
struct MetricsRow {
  std::string label;
  double bias = 0.0;
  double mae = 0.0;
  std::optional<double> emp_sd;  // unavailable when R < 2
  double mean_se = 0.0;
  double coverage = 0.0;
  double avg_interval_length = 0.0;
  int replications = 0;
  int points = 0;
};

/// Per-point diagnostics backing the SE-vs-EmpSD scatter.
struct PointwiseDetail {
  Eigen::VectorXd emp_sd;
  Eigen::VectorXd mean_se;
};

/// Aggregates an R x m grid of estimates and standard errors against the m
/// truths: Bias/MAE over all cells, per-point EmpSD (sample SD across
/// replications) averaged over points, mean SE, Wald coverage at `level`,
/// and mean interval length.
MetricsRow evaluate_pointwise(const Eigen::MatrixXd& estimates,
                              const Eigen::MatrixXd& ses,
                              const Eigen::VectorXd& truths, double level,
                              const std::string& label,
                              PointwiseDetail* detail = nullptr);

/// Monte Carlo study grid: cases x sample sizes x subsample exponents.
struct StudyConfig {
  std::vector<int> cases{1};
  std::vector<int> ns{400};
  std::vector<double> alphas{0.9};
  int B = 200;
  int R = 100;
  int m = 20;
  double censor_target = 0.30;
  double level = 0.95;
  std::vector<int> hidden_widths{32, 16};
  TrainConfig train;
  // Contrast pair filter: both endpoints' g0 inside [band_lo, band_hi] and
  // |g0(xi) - g0(xj)| within gap_tol of gap; pairs scanned lexicographically
  // until quota is reached.
  double contrast_band_lo = -1.5;
  double contrast_band_hi = 2.0;
  double contrast_gap = 1.0;
  double contrast_gap_tol = 0.25;
  int contrast_quota = 10;
  std::uint64_t seed = 0;
  int n_threads = 1;
  std::string out_dir;    // empty: no files written
  bool write_raw = true;
  void validate() const;
};

struct CellResult {
  int case_id = 0;
  int n = 0;
  double alpha = 0.0;
  int r = 0;
  bool failed = false;
  std::string error;
  MetricsRow pointwise;
  PointwiseDetail pointwise_detail;
  std::optional<MetricsRow> contrast;
};

/// Contrast pairs passing the signal filter, scanned in lexicographic order.
std::vector<std::pair<int, int>> select_contrast_pairs(
    const Eigen::VectorXd& truths, const StudyConfig& cfg);

/// Runs the full grid: per cell, R replications of generate -> fit_ensemble
/// -> pointwise and contrast inference on a fixed test set, reduced to
/// metric rows. Cell failures are recorded and do not abort the grid. When
/// out_dir is set, writes metric tables, raw replication dumps, and
/// gnuplot-ready `x y` files for coverage-vs-alpha and SE-vs-EmpSD.
std::vector<CellResult> run_monte_carlo(const StudyConfig& cfg);

/// Writes the aggregated tables/plot data for results already in hand.
void write_study_outputs(const StudyConfig& cfg,
                         const std::vector<CellResult>& cells);

}  // namespace escox
