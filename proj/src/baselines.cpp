#include "escox/baselines.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "escox/coxloss.hpp"
#include "escox/errors.hpp"

namespace escox {

namespace {

struct CoxDerivatives {
  double log_lik = 0.0;
  Eigen::VectorXd grad;       // of the mean log partial likelihood
  Eigen::MatrixXd neg_hess;   // negative Hessian (positive semidefinite)
};

CoxDerivatives cox_derivatives(const Eigen::MatrixXd& x,
                               const Eigen::VectorXd& eta, const RiskOrder& ro,
                               bool with_hessian) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  CoxDerivatives out;
  out.grad = Eigen::VectorXd::Zero(p);
  out.neg_hess = Eigen::MatrixXd::Zero(p, p);

  const double shift = eta.maxCoeff();
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);

  for (const auto& [begin, end] : ro.tie_groups) {
    for (int k = begin; k < end; ++k) {
      const int j = ro.order[k];
      const double w = std::exp(eta[j] - shift);
      s0 += w;
      s1 += w * x.row(j).transpose();
      if (with_hessian)
        s2.selfadjointView<Eigen::Lower>().rankUpdate(x.row(j).transpose(), w);
    }
    for (int k = begin; k < end; ++k) {
      if (!ro.event_flags[k]) continue;
      const int i = ro.order[k];
      const Eigen::VectorXd mean_x = s1 / s0;
      out.log_lik += (eta[i] - shift) - std::log(s0);
      out.grad += x.row(i).transpose() - mean_x;
      if (with_hessian) {
        out.neg_hess += Eigen::MatrixXd(s2.selfadjointView<Eigen::Lower>()) / s0 -
                        mean_x * mean_x.transpose();
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.log_lik *= inv_n;
  out.grad *= inv_n;
  out.neg_hess *= inv_n;
  return out;
}

}  // namespace

double linear_cox_log_likelihood(const SurvivalDataset& dataset,
                                 const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd x = dataset.covariate_matrix();
  if (beta.size() != x.cols())
    throw std::invalid_argument("beta length does not match covariate dimension");
  const RiskOrder ro = make_risk_order(dataset.times(), dataset.events());
  return cox_derivatives(x, x * beta, ro, false).log_lik;
}

LinearCoxFit fit_linear_cox(const SurvivalDataset& dataset, int max_iter,
                            double tol) {
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  const Eigen::MatrixXd x = dataset.covariate_matrix();
  const int p = static_cast<int>(x.cols());
  const RiskOrder ro = make_risk_order(dataset.times(), dataset.events());

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  CoxDerivatives cur = cox_derivatives(x, x * beta, ro, true);

  LinearCoxFit fit;
  for (int iter = 1; iter <= max_iter; ++iter) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.neg_hess);
    const Eigen::VectorXd d = ldlt.vectorD();
    if (!(d.maxCoeff() > 0.0) || d.minCoeff() <= 1e-12 * d.maxCoeff())
      throw DegenerateDesignError(
          "information matrix is singular; design has no usable variation");

    fit.grad_sup_norm = cur.grad.lpNorm<Eigen::Infinity>();
    if (fit.grad_sup_norm < tol) {
      fit.beta = beta;
      fit.iterations = iter - 1;
      fit.log_partial_likelihood = cur.log_lik;
      return fit;
    }

    Eigen::VectorXd step = ldlt.solve(cur.grad);
    if (!step.allFinite())
      throw DegenerateDesignError("Newton step is non-finite");

    // Step-halving until the likelihood does not decrease.
    CoxDerivatives next;
    bool improved = false;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd candidate = beta + step;
      next = cox_derivatives(x, x * candidate, ro, true);
      if (next.log_lik >= cur.log_lik) {
        beta = candidate;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved)
      throw std::runtime_error(
          "linear Cox fit stalled: likelihood not improvable along Newton direction");
    cur = next;
    if (beta.lpNorm<Eigen::Infinity>() > 1e3)
      throw SeparationError(
          "linear Cox fit diverged (|beta| > 1e3); data may be separated");
  }
  fit.grad_sup_norm = cur.grad.lpNorm<Eigen::Infinity>();
  if (fit.grad_sup_norm < tol) {
    fit.beta = beta;
    fit.iterations = max_iter;
    fit.log_partial_likelihood = cur.log_lik;
    return fit;
  }
  throw std::runtime_error("linear Cox fit did not converge within max_iter");
}

namespace {

class Fenwick {
 public:
  explicit Fenwick(int n) : tree_(n + 1, 0) {}
  void add(int idx) {  // 1-based
    for (; idx < static_cast<int>(tree_.size()); idx += idx & -idx) ++tree_[idx];
  }
  long long prefix(int idx) const {  // count of entries <= idx
    long long s = 0;
    for (; idx > 0; idx -= idx & -idx) s += tree_[idx];
    return s;
  }

 private:
  std::vector<long long> tree_;
};

}  // namespace

double concordance_index(const Eigen::VectorXd& scores,
                         const Eigen::VectorXd& times,
                         const std::vector<std::uint8_t>& events) {
  const int n = static_cast<int>(scores.size());
  if (static_cast<int>(times.size()) != n ||
      static_cast<int>(events.size()) != n)
    throw std::invalid_argument("scores/times/events lengths differ");

  // Dense score ranks (1-based) for the Fenwick tree.
  std::vector<int> by_score(n);
  std::iota(by_score.begin(), by_score.end(), 0);
  std::sort(by_score.begin(), by_score.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });
  std::vector<int> rank(n);
  int n_ranks = 0;
  for (int k = 0; k < n; ++k) {
    if (k == 0 || scores[by_score[k]] != scores[by_score[k - 1]]) ++n_ranks;
    rank[by_score[k]] = n_ranks;
  }

  std::vector<int> by_time(n);
  std::iota(by_time.begin(), by_time.end(), 0);
  std::sort(by_time.begin(), by_time.end(), [&](int a, int b) {
    if (times[a] != times[b]) return times[a] > times[b];
    return a < b;
  });

  Fenwick tree(n_ranks);
  long long inserted = 0;
  double concordant = 0.0;
  long long comparable = 0;
  for (int k = 0; k < n;) {
    int e = k + 1;
    while (e < n && times[by_time[e]] == times[by_time[k]]) ++e;
    // Query before inserting the tie group: only strictly later times count.
    for (int a = k; a < e; ++a) {
      const int i = by_time[a];
      if (!events[i]) continue;
      const long long le = tree.prefix(rank[i] - 1);
      const long long le_eq = tree.prefix(rank[i]);
      concordant += static_cast<double>(le) + 0.5 * static_cast<double>(le_eq - le);
      comparable += inserted;
    }
    for (int a = k; a < e; ++a) {
      tree.add(rank[by_time[a]]);
      ++inserted;
    }
    k = e;
  }
  if (comparable == 0)
    throw UndefinedMetricError("concordance undefined: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

}  // namespace escox
