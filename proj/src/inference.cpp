#include "escox/inference.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "escox/errors.hpp"
#include "escox/parallel.hpp"

namespace escox {

double ij_cov_from_predictions(const InclusionMatrix& inclusion,
                               const Eigen::VectorXd& preds_a,
                               const Eigen::VectorXd& preds_b) {
  const int B = inclusion.B();
  const int n = inclusion.n;
  const int r = inclusion.r;
  if (B < 2) throw std::invalid_argument("IJ estimator needs B >= 2");
  if (r >= n)
    throw std::invalid_argument("IJ estimator needs subsample size r < n");
  if (preds_a.size() != B || preds_b.size() != B)
    throw std::invalid_argument("prediction vector length must equal B");

  const Eigen::VectorXd c = preds_a.array() - preds_a.mean();
  const Eigen::VectorXd d = preds_b.array() - preds_b.mean();
  const double c_tot = c.sum();
  const double d_tot = d.sum();
  const double q_tot = c.dot(d);

  // Per-column accumulations over members only; the complement enters
  // through the exact algebraic identities below (J in {0,1}).
  Eigen::VectorXd tc = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd td = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n);
  for (int b = 0; b < B; ++b) {
    const double cb = c[b], db = d[b];
    for (std::int32_t i : inclusion.rows[b]) {
      tc[i] += cb;
      td[i] += db;
      u[i] += cb * db;
      count[i] += 1.0;
    }
  }

  const double inv_b = 1.0 / static_cast<double>(B);
  double sum_vv = 0.0;
  double sum_corr = 0.0;
  for (int i = 0; i < n; ++i) {
    const double jbar = count[i] * inv_b;
    const double v1 = (tc[i] - jbar * c_tot) * inv_b;
    const double v2 = (td[i] - jbar * d_tot) * inv_b;
    const double vv = v1 * v2;  // commutative product keeps tau symmetric
    sum_vv += vv;
    // sum_j Z1_ji Z2_ji with (J - jbar)^2 = J(1-2 jbar) + jbar^2.
    const double sz = (1.0 - 2.0 * jbar) * u[i] + jbar * jbar * q_tot;
    sum_corr += sz - static_cast<double>(B) * vv;
  }

  const double scale = static_cast<double>(n) * (n - 1.0) /
                       ((static_cast<double>(n) - r) * (static_cast<double>(n) - r));
  const double mc_correction =
      sum_corr / (static_cast<double>(B) * (static_cast<double>(B) - 1.0));
  return scale * (sum_vv - mc_correction);
}

VarianceEstimate ij_pointwise_variance(const EnsembleModel& model,
                                       const Eigen::VectorXd& x) {
  const Eigen::VectorXd preds = base_predictions(model, x);
  const double raw = ij_cov_from_predictions(model.inclusion, preds, preds);
  if (raw < 0.0) return {0.0, true};
  return {raw, false};
}

double ij_cross_covariance(const EnsembleModel& model, const Eigen::VectorXd& x1,
                           const Eigen::VectorXd& x2) {
  const Eigen::VectorXd preds1 = base_predictions(model, x1);
  const Eigen::VectorXd preds2 = base_predictions(model, x2);
  return ij_cov_from_predictions(model.inclusion, preds1, preds2);
}

VarianceEstimate contrast_variance(const EnsembleModel& model,
                                   const Eigen::VectorXd& x1,
                                   const Eigen::VectorXd& x2) {
  const Eigen::VectorXd preds1 = base_predictions(model, x1);
  const Eigen::VectorXd preds2 = base_predictions(model, x2);
  const double var1 = ij_cov_from_predictions(model.inclusion, preds1, preds1);
  const double var2 = ij_cov_from_predictions(model.inclusion, preds2, preds2);
  const double tau = ij_cov_from_predictions(model.inclusion, preds1, preds2);
  const double raw = var1 + var2 - 2.0 * tau;
  if (raw < 0.0) return {0.0, true};
  return {raw, false};
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile needs p strictly in (0,1)");
  // Wichura (1988), algorithm AS 241, PPND16.
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
              6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
            1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
          1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
    const double den =
        (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
              3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
            5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
          4.2313330701600911252e+1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    const double num =
        (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
              2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
            3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
          4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
    const double den =
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
              1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
            6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
          2.05319162663775882187e+0) * r + 1.0);
    value = num / den;
  } else {
    r -= 5.0;
    const double num =
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
            2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
          5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
    const double den =
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
              1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
            1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
          5.99832206555887937690e-1) * r + 1.0);
    value = num / den;
  }
  return q < 0.0 ? -value : value;
}

InferenceResult wald_interval(double estimate, double std_error, double level) {
  if (std_error < 0.0)
    throw std::invalid_argument("std_error must be nonnegative");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("confidence level must lie strictly in (0,1)");
  const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  InferenceResult res;
  res.estimate = estimate;
  res.std_error = std_error;
  res.ci_lower = estimate - z * std_error;
  res.ci_upper = estimate + z * std_error;
  res.level = level;
  res.clamped = false;
  return res;
}

std::pair<double, double> relative_risk_interval(const InferenceResult& contrast) {
  return {std::exp(contrast.ci_lower), std::exp(contrast.ci_upper)};
}

namespace {

SurvivalDataset draw_overlap_sample(const Observation& shared,
                                    const ObservationSampler& sampler, int p0,
                                    int r, Rng& rng, const char* label) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<Observation> obs;
    obs.reserve(r);
    obs.push_back(shared);
    for (int i = 1; i < r; ++i) obs.push_back(sampler(rng));
    bool any_event = false;
    for (const auto& o : obs) any_event |= o.event;
    if (any_event) return SurvivalDataset(std::move(obs), p0, label);
  }
  throw DegenerateDataError(
      "single-overlap sampling: 100 consecutive draws contained no events");
}

}  // namespace

double single_overlap_cov_mc(const PointEstimator& estimator,
                             const ObservationSampler& sampler, int p0, int r,
                             const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                             int reps, std::uint64_t seed, int n_threads) {
  if (reps < 2) throw std::invalid_argument("single_overlap_cov_mc needs reps >= 2");
  if (r < 1) throw std::invalid_argument("subsample size r must be positive");

  Eigen::VectorXd first(reps), second(reps);
  parallel_for(reps, n_threads, [&](int k) {
    Rng rng(derive_seed(seed, rng_tag::kOverlapRep, static_cast<std::uint64_t>(k)));
    const Observation shared = sampler(rng);
    const SurvivalDataset da =
        draw_overlap_sample(shared, sampler, p0, r, rng, "overlap-a");
    const SurvivalDataset db =
        draw_overlap_sample(shared, sampler, p0, r, rng, "overlap-b");
    first[k] = estimator(da, derive_seed(seed, rng_tag::kOverlapRep, k, 1), x1);
    second[k] = estimator(db, derive_seed(seed, rng_tag::kOverlapRep, k, 2), x2);
  });

  const double mean_a = first.mean();
  const double mean_b = second.mean();
  double acc = 0.0;
  for (int k = 0; k < reps; ++k)
    acc += (first[k] - mean_a) * (second[k] - mean_b);
  return acc / (static_cast<double>(reps) - 1.0);
}

void RateParams::validate() const {
  if (q < 0) throw std::invalid_argument("q must be >= 0");
  if (static_cast<int>(t.size()) != q + 1 ||
      static_cast<int>(gamma.size()) != q + 1)
    throw std::invalid_argument("t and gamma must both have length q+1");
  for (int ti : t)
    if (ti <= 0) throw std::invalid_argument("all t_i must be positive");
  for (double gi : gamma)
    if (!(gi > 0.0)) throw std::invalid_argument("all gamma_i must be positive");
  if (delta < 0.0) throw std::invalid_argument("delta must be nonnegative");
  if (!(xi > 0.0 && xi < 1.0))
    throw std::invalid_argument("xi must lie strictly in (0,1)");
}

AlphaRange alpha_range(const RateParams& params) {
  params.validate();
  const int q = params.q;
  AlphaRange out;
  out.gamma_star.resize(q + 1);
  out.level_rates.resize(q + 1);
  // gamma_i^* = gamma_i * prod_{l>i} (gamma_l ^ 1), attenuation through the
  // later composition levels.
  double attenuation = 1.0;
  for (int i = q; i >= 0; --i) {
    out.gamma_star[i] = params.gamma[i] * attenuation;
    attenuation *= std::min(params.gamma[i], 1.0);
  }
  for (int i = 0; i <= q; ++i)
    out.level_rates[i] =
        2.0 * out.gamma_star[i] / (2.0 * out.gamma_star[i] + params.t[i]);
  out.i_eff = 0;
  out.c_eff = out.level_rates[0];
  for (int i = 1; i <= q; ++i) {
    if (out.level_rates[i] < out.c_eff) {  // ties keep the smallest index
      out.c_eff = out.level_rates[i];
      out.i_eff = i;
    }
  }
  out.eta = 2.0 * params.delta * out.gamma_star[out.i_eff] /
            (params.t[out.i_eff] * out.c_eff);
  out.m0 = out.c_eff * (1.0 + out.eta) * (1.0 - params.xi);
  out.delta_lower = out.c_eff * (1.0 - out.c_eff) / (2.0 - out.c_eff);
  out.delta_upper = out.c_eff;
  out.nu_lower = 1.0;
  out.nu_upper = 1.0 + out.m0 / 2.0;
  out.alpha_lower = 1.0 / (2.0 - params.nu + out.m0);
  out.alpha_upper = 1.0 / (params.nu + out.c_eff - params.delta);
  out.delta_in_window =
      params.delta > out.delta_lower && params.delta < out.delta_upper;
  out.nu_in_window = params.nu > out.nu_lower && params.nu < out.nu_upper;
  out.admissible = out.alpha_lower < out.alpha_upper;
  return out;
}

std::string alpha_range_report(const RateParams& params, const AlphaRange& range) {
  std::ostringstream os;
  os << "subsample exponent diagnostics\n";
  os << "  levels (i, t_i, gamma_i, gamma_i*, rate_i):\n";
  for (int i = 0; i <= params.q; ++i)
    os << "    " << i << "  t=" << params.t[i] << "  gamma=" << params.gamma[i]
       << "  gamma*=" << range.gamma_star[i] << "  rate=" << range.level_rates[i]
       << "\n";
  os << "  c_eff = " << range.c_eff << " (bottleneck level i_eff = " << range.i_eff
     << ")\n";
  os << "  eta = " << range.eta << ", m0 = " << range.m0 << "\n";
  os << "  delta = " << params.delta << ", admissible window ("
     << range.delta_lower << ", " << range.delta_upper << ")"
     << (range.delta_in_window ? "" : "  [outside]") << "\n";
  os << "  nu = " << params.nu << ", admissible window (" << range.nu_lower
     << ", " << range.nu_upper << ")" << (range.nu_in_window ? "" : "  [outside]")
     << "\n";
  os << "  normality window: alpha in (" << range.alpha_lower << ", "
     << range.alpha_upper << ")"
     << (range.admissible ? "" : "  [empty]") << "\n";
  os << "  IJ variance consistency additionally needs alpha > 0.5\n";
  return os.str();
}

}  // namespace escox
