#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "escox/rng.hpp"

namespace escox {

/// Architecture and regularization settings of one ReLU network.
/// widths = (p0, p1, ..., pL, 1) with at least one hidden layer.
struct NetworkConfig {
  std::vector<int> widths;
  double dropout_rate = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  int input_dim() const { return widths.front(); }
  int hidden_layers() const { return static_cast<int>(widths.size()) - 2; }
  void validate() const;
};

/// Per-layer parameter gradients, shape-matched to NetworkParams.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  void set_zero();
};

/// Weights W_l (widths[l+1] x widths[l], l = 0..L) and hidden-layer biases
/// b_l (length widths[l+1], l = 0..L-1). The output layer carries no bias;
/// it would cancel in g(x) = f(x) - f(0) anyway.
struct NetworkParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  NetworkConfig config;

  Gradients zero_gradients() const;
};

/// Inverted-dropout keep mask for one forward pass of one sample:
/// per hidden layer, entries are 0 (dropped) or 1/(1-rate) (kept).
struct DropoutMask {
  std::vector<Eigen::VectorXd> scale;
};

/// Keep masks for a batch: per hidden layer an (n x width) matrix of
/// 0 or 1/(1-rate) entries, row i belonging to sample i.
struct BatchMasks {
  std::vector<Eigen::MatrixXd> scale;
  bool empty() const { return scale.empty(); }
};

/// He initialization: W entries ~ N(0, 2/fan_in), biases zero.
NetworkParams init_network(const NetworkConfig& config);

DropoutMask draw_dropout_mask(const NetworkConfig& config, double rate, Rng& rng);
BatchMasks draw_batch_masks(const NetworkConfig& config, double rate, int n, Rng& rng);

/// Raw network output f(x). With a mask, hidden activations are multiplied
/// by the mask entries (inverted dropout, no rescaling at inference).
double forward_raw(const NetworkParams& params, const Eigen::VectorXd& x,
                   const DropoutMask* mask = nullptr);

/// Identifiable log-risk g(x) = f(x) - f(0); exactly 0 at x = 0.
double predict_g(const NetworkParams& params, const Eigen::VectorXd& x);

/// Batched evaluation of g over the rows of X with shared storage for the
/// paired f(0) pass, retaining activations for backward. The zero pass of
/// sample i uses the same dropout mask as its x pass, so g(0) = 0 holds for
/// every masked subnetwork.
class BatchEvaluator {
 public:
  BatchEvaluator(const NetworkConfig& config, const Eigen::MatrixXd& x);

  /// Scores g(x_i); masks may be empty (no dropout).
  const Eigen::VectorXd& forward(const NetworkParams& params,
                                 const BatchMasks& masks);

  /// Gradient of sum_i dscores[i] * g(x_i) in the parameters, using the
  /// activations of the last forward() call.
  Gradients backward(const NetworkParams& params,
                     const Eigen::VectorXd& dscores);

 private:
  int n_ = 0;
  std::vector<Eigen::MatrixXd> acts_;     // acts_[0] = [X; 0], 2n rows
  std::vector<Eigen::MatrixXd> relu_on_;  // post-mask derivative factors
  Eigen::VectorXd f_all_;                 // raw outputs, 2n
  Eigen::VectorXd scores_;                // g, n
};

/// Sum over samples of score_grads[i] * dg(x_i)/dtheta. Masks, when given,
/// must be the ones used in the forward pass being differentiated.
Gradients backward(const NetworkParams& params,
                   const std::vector<Eigen::VectorXd>& inputs,
                   const Eigen::VectorXd& score_grads,
                   const BatchMasks* masks = nullptr);

/// Flat binary serialization (magic, widths, config scalars, row-major
/// weight matrices, bias vectors); 64-bit float exact round trip.
void save_network(const NetworkParams& params, const std::string& path);
NetworkParams load_network(const std::string& path);

}  // namespace escox
