#include "escox/coxloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "escox/errors.hpp"

namespace escox {

namespace {

/// Streaming max-shifted log-sum-exp accumulator.
struct LogSumExp {
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;

  void add(double v, double weight = 1.0) {
    if (v <= max) {
      sum += weight * std::exp(v - max);
    } else {
      sum = sum * std::exp(max - v) + weight;
      max = v;
    }
  }
  bool empty() const { return sum == 0.0; }
  double log() const { return max + std::log(sum); }
};

void check_sizes(const Eigen::VectorXd& scores, const RiskOrder& ro) {
  if (static_cast<int>(scores.size()) != ro.n)
    throw std::invalid_argument("scores length does not match risk order");
  if (ro.n_events == 0)
    throw DegenerateLikelihoodError(
        "partial likelihood is degenerate: no observed events");
}

}  // namespace

RiskOrder make_risk_order(const Eigen::VectorXd& times,
                          const std::vector<std::uint8_t>& events) {
  const int n = static_cast<int>(times.size());
  if (static_cast<int>(events.size()) != n)
    throw std::invalid_argument("times and events lengths differ");
  RiskOrder ro;
  ro.n = n;
  ro.order.resize(n);
  std::iota(ro.order.begin(), ro.order.end(), 0);
  std::sort(ro.order.begin(), ro.order.end(), [&](std::int32_t a, std::int32_t b) {
    if (times[a] != times[b]) return times[a] > times[b];
    return a < b;  // canonical within ties
  });
  ro.event_flags.resize(n);
  for (int k = 0; k < n; ++k) {
    ro.event_flags[k] = events[ro.order[k]];
    if (ro.event_flags[k]) ++ro.n_events;
  }
  for (int k = 0; k < n;) {
    int e = k + 1;
    while (e < n && times[ro.order[e]] == times[ro.order[k]]) ++e;
    ro.tie_groups.emplace_back(k, e);
    k = e;
  }
  return ro;
}

double neg_log_partial_likelihood(const Eigen::VectorXd& scores,
                                  const RiskOrder& ro) {
  check_sizes(scores, ro);
  LogSumExp lse;
  double acc = 0.0;
  for (const auto& [begin, end] : ro.tie_groups) {
    for (int k = begin; k < end; ++k) lse.add(scores[ro.order[k]]);
    const double log_s = lse.log();
    for (int k = begin; k < end; ++k)
      if (ro.event_flags[k]) acc += scores[ro.order[k]] - log_s;
  }
  return -acc / static_cast<double>(ro.n);
}

double neg_log_partial_likelihood(const Eigen::VectorXd& scores,
                                  const Eigen::VectorXd& times,
                                  const std::vector<std::uint8_t>& events) {
  return neg_log_partial_likelihood(scores, make_risk_order(times, events));
}

double brute_force_neg_log_partial_likelihood(
    const Eigen::VectorXd& scores, const Eigen::VectorXd& times,
    const std::vector<std::uint8_t>& events) {
  const int n = static_cast<int>(scores.size());
  if (static_cast<int>(times.size()) != n ||
      static_cast<int>(events.size()) != n)
    throw std::invalid_argument("scores/times/events lengths differ");
  int n_events = 0;
  for (auto e : events) n_events += e ? 1 : 0;
  if (n_events == 0)
    throw DegenerateLikelihoodError(
        "partial likelihood is degenerate: no observed events");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!events[i]) continue;
    double risk_sum = 0.0;
    for (int j = 0; j < n; ++j)
      if (times[j] >= times[i]) risk_sum += std::exp(scores[j]);
    acc += scores[i] - std::log(risk_sum);
  }
  return -acc / static_cast<double>(n);
}

Eigen::VectorXd partial_likelihood_score(const Eigen::VectorXd& scores,
                                         const RiskOrder& ro) {
  check_sizes(scores, ro);
  const int n = ro.n;
  const int n_groups = static_cast<int>(ro.tie_groups.size());

  // Pass 1, descending time: log S for each tie group.
  std::vector<double> group_log_s(n_groups);
  {
    LogSumExp lse;
    for (int gidx = 0; gidx < n_groups; ++gidx) {
      const auto& [begin, end] = ro.tie_groups[gidx];
      for (int k = begin; k < end; ++k) lse.add(scores[ro.order[k]]);
      group_log_s[gidx] = lse.log();
    }
  }

  // Pass 2, ascending time: running log of W = sum over events so far of
  // 1/S_i. Each k's term is exp(g_k + log W), which stays <= n since
  // g_k <= log S_i whenever k is in risk set i.
  Eigen::VectorXd grad(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  LogSumExp logw;
  for (int gidx = n_groups - 1; gidx >= 0; --gidx) {
    const auto& [begin, end] = ro.tie_groups[gidx];
    int d = 0;
    for (int k = begin; k < end; ++k)
      if (ro.event_flags[k]) ++d;
    if (d > 0) logw.add(-group_log_s[gidx], static_cast<double>(d));
    for (int k = begin; k < end; ++k) {
      const int idx = ro.order[k];
      const double hazard_mass =
          logw.empty() ? 0.0 : std::exp(scores[idx] + logw.log());
      grad[idx] = -inv_n * ((ro.event_flags[k] ? 1.0 : 0.0) - hazard_mass);
    }
  }
  return grad;
}

Eigen::VectorXd partial_likelihood_score(const Eigen::VectorXd& scores,
                                         const Eigen::VectorXd& times,
                                         const std::vector<std::uint8_t>& events) {
  return partial_likelihood_score(scores, make_risk_order(times, events));
}

}  // namespace escox
