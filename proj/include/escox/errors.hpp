#pragma once

#include <stdexcept>
#include <string>

namespace escox {

/// CSV/file syntax problems; message carries the offending line number.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structurally valid input whose values violate a dataset invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Censoring-rate bisection could not bracket or reach the target.
struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Partial likelihood requested on data with no observed events.
struct DegenerateLikelihoodError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite training loss; carries the 1-based epoch where it appeared.
struct TrainingDivergedError : std::runtime_error {
  explicit TrainingDivergedError(int epoch_idx)
      : std::runtime_error("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch_idx)),
        epoch(epoch_idx) {}
  int epoch;
};

/// Subsample redraw budget exhausted without finding an event.
struct DegenerateDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Monotone-likelihood divergence in the linear Cox fit.
struct SeparationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Singular/zero information matrix in the linear Cox fit.
struct DegenerateDesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Metric has no comparable pairs (concordance on fully tied data etc.).
struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace escox
