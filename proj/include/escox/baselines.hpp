#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "escox/dataset.hpp"

namespace escox {

struct LinearCoxFit {
  Eigen::VectorXd beta;
  int iterations = 0;
  double grad_sup_norm = 0.0;
  double log_partial_likelihood = 0.0;
};

/// Mean log partial likelihood of the linear model g(x) = beta'x, Breslow
/// ties, max-shifted risk-set accumulation.
double linear_cox_log_likelihood(const SurvivalDataset& dataset,
                                 const Eigen::VectorXd& beta);

/// Newton-Raphson maximizer of the linear Cox partial likelihood with
/// analytic gradient/Hessian, step-halving when the objective does not
/// improve, and convergence when the gradient sup-norm drops below tol.
LinearCoxFit fit_linear_cox(const SurvivalDataset& dataset, int max_iter = 100,
                            double tol = 1e-8);

/// Harrell's concordance: among pairs with T_i < T_j and an event at T_i,
/// the fraction where score_i > score_j, score ties counting 1/2. Tied-time
/// pairs are incomparable. O(n log n) via rank counting.
double concordance_index(const Eigen::VectorXd& scores,
                         const Eigen::VectorXd& times,
                         const std::vector<std::uint8_t>& events);

}  // namespace escox
