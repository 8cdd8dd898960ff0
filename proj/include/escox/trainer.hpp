#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "escox/dataset.hpp"
#include "escox/net.hpp"

namespace escox {

enum class Optimizer { PlainGd, AdaptiveMoments };

/// Full-batch training settings. Defaults follow the simulation setup:
/// learning rate 0.1, 500 epochs, weight decay 0.02, dropout 0.1.
struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 500;
  double weight_decay = 0.02;
  double dropout_rate = 0.1;
  Optimizer optimizer = Optimizer::AdaptiveMoments;
  std::uint64_t seed = 0;
  void validate() const;
};

struct TrainResult {
  NetworkParams params;
  std::vector<double> loss_trace;  // negative log partial likelihood per epoch
};

/// Minimizes the negative log partial likelihood over the network class by
/// exactly `epochs` full-batch gradient steps. Risk sets couple all samples,
/// so the batch is never split. Each epoch draws fresh per-sample dropout
/// masks (applied to both the x and the paired zero pass), computes scores
/// and the exact likelihood score, backpropagates, adds weight_decay * W to
/// the weight gradients (biases excluded), and applies the optimizer step.
/// Deterministic given (dataset, configs, seeds).
TrainResult train(const SurvivalDataset& dataset, NetworkConfig net_config,
                  const TrainConfig& config);

/// Practical stand-in for a bounded-optimization-gap contract: true iff the
/// final loss is within 1e-6 of the trace minimum and the decrease over the
/// last 10% of epochs is at most plateau_tol times the total decrease.
bool training_budget_check(const std::vector<double>& loss_trace,
                           double plateau_tol = 1.0);

/// CSV export `epoch,loss` (1-based epochs).
void write_loss_trace_csv(const std::vector<double>& trace,
                          const std::string& path);

}  // namespace escox
