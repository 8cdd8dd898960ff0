#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "escox/dataset.hpp"
#include "escox/net.hpp"
#include "escox/trainer.hpp"

namespace escox {

/// B x n binary inclusion bookkeeping J[b][i] = 1 iff observation i entered
/// subsample b, stored as sorted member-index lists (each of length r).
struct InclusionMatrix {
  int n = 0;
  int r = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::int32_t>> rows;

  int B() const { return static_cast<int>(rows.size()); }
  bool contains(int b, int i) const;
  /// Column means J_bar_i = B^{-1} sum_b J[b][i].
  Eigen::VectorXd column_means() const;
};

/// B independent simple random samples of size r without replacement from
/// {0..n-1}; rows are drawn from per-row derived streams, so the matrix is
/// deterministic given (n, r, B, seed) and independent of evaluation order.
InclusionMatrix draw_subsamples(int n, int r, int B, std::uint64_t seed);

/// Trained subsample ensemble: B base networks plus the inclusion matrix
/// exactly as used (after any all-censored redraws).
struct EnsembleModel {
  std::vector<NetworkParams> base_params;
  InclusionMatrix inclusion;
  int n = 0;
  int r = 0;
  std::optional<double> alpha;  // set when r = floor(n^alpha) was requested
  NetworkConfig net_config;
  TrainConfig train_config;
  std::uint64_t seed = 0;

  int B() const { return static_cast<int>(base_params.size()); }
};

/// Trains one base learner per subsample with per-subsample derived seeds.
/// Rows whose subsample holds no event are redrawn (up to 100 attempts per
/// row) so every base likelihood is well defined and B stays fixed.
EnsembleModel fit_ensemble(const SurvivalDataset& dataset,
                           const NetworkConfig& net_config,
                           const TrainConfig& train_config, int r, int B,
                           std::uint64_t seed, int n_threads = 1);

/// Per-base predictions g_hat^b(x), in base order.
Eigen::VectorXd base_predictions(const EnsembleModel& model,
                                 const Eigen::VectorXd& x);

/// Ensemble estimate: arithmetic mean of the base predictions.
double ensemble_predict(const EnsembleModel& model, const Eigen::VectorXd& x);

/// Log-hazard-ratio estimate g_B(x1) - g_B(x2).
double contrast_estimate(const EnsembleModel& model, const Eigen::VectorXd& x1,
                         const Eigen::VectorXd& x2);

/// Model directory: metadata.json, inclusion.csv (0/1 rows), and one binary
/// parameter file per base learner.
void save_model(const EnsembleModel& model, const std::string& dir);
EnsembleModel load_model(const std::string& dir);

}  // namespace escox
