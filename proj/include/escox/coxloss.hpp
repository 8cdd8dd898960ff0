#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

namespace escox {

/// Observation ordering reused across loss/score evaluations: indices sorted
/// by time descending, with tie groups marking runs of equal times (Breslow:
/// the whole tie group belongs to each member's risk set).
struct RiskOrder {
  std::vector<std::int32_t> order;              // descending time
  std::vector<std::uint8_t> event_flags;        // in `order` order
  std::vector<std::pair<std::int32_t, std::int32_t>> tie_groups;  // [begin,end) into order
  int n = 0;
  int n_events = 0;
};

RiskOrder make_risk_order(const Eigen::VectorXd& times,
                          const std::vector<std::uint8_t>& events);

/// Negative mean log partial likelihood,
///   -L = -(1/n) sum_{i: event} [ g_i - log sum_{j: T_j >= T_i} exp(g_j) ],
/// via one descending-time sweep with a running max-shifted log-sum-exp.
/// Finite for scores anywhere in [-700, 700].
double neg_log_partial_likelihood(const Eigen::VectorXd& scores,
                                  const RiskOrder& ro);
double neg_log_partial_likelihood(const Eigen::VectorXd& scores,
                                  const Eigen::VectorXd& times,
                                  const std::vector<std::uint8_t>& events);

/// Literal O(n^2) transcription of the same quantity with raw exponentials.
/// Reference oracle only; overflows outside moderate score ranges.
double brute_force_neg_log_partial_likelihood(
    const Eigen::VectorXd& scores, const Eigen::VectorXd& times,
    const std::vector<std::uint8_t>& events);

/// Exact gradient of neg_log_partial_likelihood in the scores:
///   d(-L)/dg_k = -(1/n) [ Delta_k - exp(g_k) * sum_{i: T_i <= T_k, event} 1/S_i ],
/// with S_i the risk-set sum at event i. Components sum to zero.
Eigen::VectorXd partial_likelihood_score(const Eigen::VectorXd& scores,
                                         const RiskOrder& ro);
Eigen::VectorXd partial_likelihood_score(const Eigen::VectorXd& scores,
                                         const Eigen::VectorXd& times,
                                         const std::vector<std::uint8_t>& events);

}  // namespace escox
