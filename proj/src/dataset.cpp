#include "escox/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "escox/errors.hpp"

namespace escox {

SurvivalDataset::SurvivalDataset(std::vector<Observation> observations, int p0,
                                 std::string name)
    : obs_(std::move(observations)), p0_(p0), name_(std::move(name)) {
  if (p0_ <= 0) throw ValidationError("dataset covariate dimension must be positive");
  if (obs_.empty()) throw ValidationError("dataset is empty");
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    const Observation& o = obs_[i];
    if (!std::isfinite(o.time) || o.time < 0.0)
      throw ValidationError("observation " + std::to_string(i) +
                            ": time must be finite and nonnegative");
    if (o.covariates.size() != p0_)
      throw ValidationError("observation " + std::to_string(i) +
                            ": covariate length does not match p0");
    if (!o.covariates.allFinite())
      throw ValidationError("observation " + std::to_string(i) +
                            ": covariates contain NaN or infinity");
    if (o.event) ++event_count_;
  }
  if (event_count_ == 0)
    throw ValidationError("dataset has no observed events; partial likelihood is constant");
}

Eigen::VectorXd SurvivalDataset::times() const {
  Eigen::VectorXd t(size());
  for (int i = 0; i < size(); ++i) t[i] = obs_[i].time;
  return t;
}

std::vector<std::uint8_t> SurvivalDataset::events() const {
  std::vector<std::uint8_t> e(obs_.size());
  for (std::size_t i = 0; i < obs_.size(); ++i) e[i] = obs_[i].event ? 1 : 0;
  return e;
}

Eigen::MatrixXd SurvivalDataset::covariate_matrix() const {
  Eigen::MatrixXd x(size(), p0_);
  for (int i = 0; i < size(); ++i) x.row(i) = obs_[i].covariates.transpose();
  return x;
}

SurvivalDataset SurvivalDataset::subset(const std::vector<std::int32_t>& indices,
                                        std::string name) const {
  std::vector<Observation> sub;
  sub.reserve(indices.size());
  for (std::int32_t idx : indices) {
    if (idx < 0 || idx >= size())
      throw std::invalid_argument("subset index out of range");
    sub.push_back(obs_[idx]);
  }
  return SurvivalDataset(std::move(sub), p0_, std::move(name));
}

void SimulationSpec::validate() const {
  if (case_id < 1 || case_id > 3)
    throw std::invalid_argument("case_id must be 1, 2 or 3");
  if (n < 2) throw std::invalid_argument("simulation needs n >= 2");
  if (!(censor_rate_target > 0.0 && censor_rate_target < 1.0))
    throw std::invalid_argument("censor_rate_target must lie strictly in (0,1)");
}

double true_risk(int case_id, const Eigen::VectorXd& x) {
  if (x.size() != kSimDim)
    throw std::invalid_argument("true_risk expects a covariate vector of length 10");
  const double x1 = x[0], x2 = x[1], x3 = x[2];
  switch (case_id) {
    case 1:
      return x1 - 1.2 * x2 + 0.8 * x3;
    case 2:
      return 0.7 * x1 - 0.5 * x3 + 0.4 * x2 * x2 + 0.3 * x1 * x2;
    case 3:
      return 0.7 * x1 - 0.8 * x3 + 0.5 * x2 * x2 + std::sin(0.5 * x1 * x2) +
             1.2 * std::exp(-0.25 * (x1 - 1.0) * (x1 - 1.0) -
                            0.25 * (x2 + 1.0) * (x2 + 1.0)) -
             1.2 * std::exp(-0.5);
    default:
      throw std::invalid_argument("unknown case_id " + std::to_string(case_id));
  }
}

double sample_event_time(double g_value, double rng_draw) {
  if (!(rng_draw > 0.0 && rng_draw < 1.0))
    throw std::invalid_argument("rng_draw must lie strictly in (0,1)");
  return std::sqrt(-std::log(rng_draw) / (0.05 * std::exp(g_value)));
}

namespace {

struct ProbeSample {
  std::vector<double> event_times;
  std::vector<double> censor_u;  // uniforms reused across rates: T_C = -ln(u)/mu
};

ProbeSample make_probe(int case_id, int n_probe, std::uint64_t seed) {
  ProbeSample probe;
  probe.event_times.resize(n_probe);
  probe.censor_u.resize(n_probe);
  Rng rng(derive_seed(seed, rng_tag::kCensorProbe, static_cast<std::uint64_t>(case_id)));
  Eigen::VectorXd x(kSimDim);
  for (int i = 0; i < n_probe; ++i) {
    for (int j = 0; j < kSimDim; ++j) x[j] = rng.truncated_normal(3.0);
    const double g = true_risk(case_id, x);
    probe.event_times[i] = sample_event_time(g, rng.uniform_open01());
    probe.censor_u[i] = rng.uniform_open01();
  }
  return probe;
}

double probe_fraction(const ProbeSample& probe, double mu) {
  if (mu <= 0.0) return 0.0;  // infinite censoring times
  int censored = 0;
  for (std::size_t i = 0; i < probe.event_times.size(); ++i) {
    const double tc = -std::log(probe.censor_u[i]) / mu;
    if (tc < probe.event_times[i]) ++censored;
  }
  return static_cast<double>(censored) / static_cast<double>(probe.event_times.size());
}

}  // namespace

double censoring_fraction_probe(int case_id, int n_probe, double mu,
                                std::uint64_t seed) {
  if (n_probe < 1) throw std::invalid_argument("n_probe must be positive");
  return probe_fraction(make_probe(case_id, n_probe, seed), mu);
}

double calibrate_censoring_rate(int case_id, int n_probe, double target,
                                std::uint64_t seed) {
  if (!(target > 0.0 && target < 1.0))
    throw std::invalid_argument("censoring target must lie strictly in (0,1)");
  if (n_probe < 10000)
    throw std::invalid_argument("calibration probe needs n_probe >= 1e4");

  const ProbeSample probe = make_probe(case_id, n_probe, seed);
  double lo = 1e-6, hi = 1e3;
  const double f_lo = probe_fraction(probe, lo);
  const double f_hi = probe_fraction(probe, hi);
  if (f_lo > target || f_hi < target) {
    std::ostringstream msg;
    msg << "censoring calibration failed to bracket target " << target
        << ": fraction(" << lo << ")=" << f_lo << ", fraction(" << hi << ")=" << f_hi;
    throw CalibrationError(msg.str());
  }
  double mid = lo;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double f = probe_fraction(probe, mid);
    if (std::abs(f - target) <= 0.01) return mid;
    if (f < target)
      lo = mid;
    else
      hi = mid;
  }
  std::ostringstream msg;
  msg << "censoring calibration did not converge; last rate " << mid
      << " gives fraction " << probe_fraction(probe, mid);
  throw CalibrationError(msg.str());
}

double calibrated_censoring_rate(int case_id, double target) {
  // Fixed probe seed: the rate is a per-(case,target) constant, so datasets
  // differing only in seed share the same censoring distribution.
  static std::mutex mutex;
  static std::map<std::pair<int, std::int64_t>, double> cache;
  const std::int64_t key_bits = std::bit_cast<std::int64_t>(target);
  const auto key = std::make_pair(case_id, key_bits);
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  const double rate = calibrate_censoring_rate(
      case_id, 100000, target, derive_seed(0x5EED5EEDull, key_bits));
  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(key, rate);
  return rate;
}

SurvivalDataset generate_case(const SimulationSpec& spec) {
  spec.validate();
  const double mu = calibrated_censoring_rate(spec.case_id, spec.censor_rate_target);
  Rng rng(derive_seed(spec.seed, rng_tag::kDataGen, static_cast<std::uint64_t>(spec.case_id)));
  std::vector<Observation> obs(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    Eigen::VectorXd x(kSimDim);
    for (int j = 0; j < kSimDim; ++j) x[j] = rng.truncated_normal(3.0);
    const double g = true_risk(spec.case_id, x);
    const double t_event = sample_event_time(g, rng.uniform_open01());
    const double t_censor = rng.exponential(mu);
    obs[i].time = std::min(t_event, t_censor);
    obs[i].event = t_event <= t_censor;
    obs[i].covariates = std::move(x);
  }
  std::ostringstream name;
  name << "case" << spec.case_id << "_n" << spec.n << "_seed" << spec.seed;
  return SurvivalDataset(std::move(obs), kSimDim, name.str());
}

Eigen::MatrixXd draw_test_points(int m, int p0, std::uint64_t seed) {
  if (m < 1 || p0 < 1) throw std::invalid_argument("need m >= 1 and p0 >= 1");
  Rng rng(derive_seed(seed, rng_tag::kTestPoints));
  Eigen::MatrixXd x(m, p0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < p0; ++j) x(i, j) = rng.truncated_normal(3.0);
  return x;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse " +
                     what + " from '" + s + "'");
  }
}

}  // namespace

SurvivalDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  std::string header;
  if (!std::getline(in, header))
    throw ParseError(path + ": empty file (missing header)");
  const auto cols = split_csv_line(header);
  if (cols.size() < 3 || cols[0] != "time" || cols[1] != "event")
    throw ParseError(path + ": header must start with time,event,x1,...");
  const int p0 = static_cast<int>(cols.size()) - 2;
  for (int j = 0; j < p0; ++j) {
    if (cols[2 + j] != "x" + std::to_string(j + 1))
      throw ParseError(path + ": covariate column " + std::to_string(j + 3) +
                       " must be named x" + std::to_string(j + 1));
  }

  std::vector<Observation> obs;
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != p0 + 2)
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(p0 + 2) + " fields, got " +
                       std::to_string(fields.size()));
    Observation o;
    o.time = parse_double(fields[0], line_no, "time");
    const double ev = parse_double(fields[1], line_no, "event");
    if (ev != 0.0 && ev != 1.0)
      throw ValidationError("line " + std::to_string(line_no) +
                            ": event must be 0 or 1");
    o.event = ev == 1.0;
    if (!std::isfinite(o.time) || o.time < 0.0)
      throw ValidationError("line " + std::to_string(line_no) +
                            ": time must be finite and nonnegative");
    o.covariates.resize(p0);
    for (int j = 0; j < p0; ++j)
      o.covariates[j] = parse_double(fields[2 + j], line_no, "covariate");
    obs.push_back(std::move(o));
  }
  if (obs.empty()) throw ParseError(path + ": no data rows");
  return SurvivalDataset(std::move(obs), p0, path);
}

void save_dataset_csv(const SurvivalDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << "time,event";
  for (int j = 1; j <= ds.p0(); ++j) out << ",x" << j;
  out << "\n";
  char buf[64];
  for (const Observation& o : ds.observations()) {
    std::snprintf(buf, sizeof(buf), "%.17g", o.time);
    out << buf << ',' << (o.event ? 1 : 0);
    for (int j = 0; j < ds.p0(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", o.covariates[j]);
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace escox
