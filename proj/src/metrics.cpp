#include "escox/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "escox/dataset.hpp"
#include "escox/ensemble.hpp"
#include "escox/errors.hpp"
#include "escox/inference.hpp"
#include "escox/parallel.hpp"

namespace escox {

namespace fs = std::filesystem;

namespace {

/// Pairwise (cascade) summation: associative reduction whose result does not
/// depend on how work was distributed.
double pairwise_sum(const double* data, int n) {
  if (n <= 8) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const int half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

double pairwise_mean(const std::vector<double>& v) {
  return pairwise_sum(v.data(), static_cast<int>(v.size())) /
         static_cast<double>(v.size());
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

MetricsRow evaluate_pointwise(const Eigen::MatrixXd& estimates,
                              const Eigen::MatrixXd& ses,
                              const Eigen::VectorXd& truths, double level,
                              const std::string& label,
                              PointwiseDetail* detail) {
  const int reps = static_cast<int>(estimates.rows());
  const int m = static_cast<int>(estimates.cols());
  if (reps < 1 || m < 1)
    throw std::invalid_argument("metrics need at least one replication and point");
  if (ses.rows() != reps || ses.cols() != m || truths.size() != m)
    throw std::invalid_argument("estimates/ses/truths shapes are inconsistent");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("confidence level must lie strictly in (0,1)");

  const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  std::vector<double> errs, abs_errs, se_all, covered, widths;
  errs.reserve(reps * m);
  abs_errs.reserve(reps * m);
  se_all.reserve(reps * m);
  covered.reserve(reps * m);
  widths.reserve(reps * m);
  for (int k = 0; k < reps; ++k)
    for (int j = 0; j < m; ++j) {
      const double e = estimates(k, j) - truths[j];
      errs.push_back(e);
      abs_errs.push_back(std::abs(e));
      se_all.push_back(ses(k, j));
      covered.push_back(std::abs(e) <= z * ses(k, j) ? 1.0 : 0.0);
      widths.push_back(2.0 * z * ses(k, j));
    }

  MetricsRow row;
  row.label = label;
  row.replications = reps;
  row.points = m;
  row.bias = pairwise_mean(errs);
  row.mae = pairwise_mean(abs_errs);
  row.mean_se = pairwise_mean(se_all);
  row.coverage = pairwise_mean(covered);
  row.avg_interval_length = pairwise_mean(widths);

  Eigen::VectorXd point_sd(m), point_se(m);
  for (int j = 0; j < m; ++j) {
    std::vector<double> col(reps);
    for (int k = 0; k < reps; ++k) col[k] = ses(k, j);
    point_se[j] = pairwise_mean(col);
    if (reps >= 2) {
      for (int k = 0; k < reps; ++k) col[k] = estimates(k, j);
      const double mean = pairwise_mean(col);
      for (int k = 0; k < reps; ++k) col[k] = (col[k] - mean) * (col[k] - mean);
      point_sd[j] =
          std::sqrt(pairwise_sum(col.data(), reps) / static_cast<double>(reps - 1));
    } else {
      point_sd[j] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (reps >= 2) {
    std::vector<double> sds(point_sd.data(), point_sd.data() + m);
    row.emp_sd = pairwise_mean(sds);  // average of per-point SDs
  }
  if (detail) {
    detail->emp_sd = point_sd;
    detail->mean_se = point_se;
  }
  return row;
}

void StudyConfig::validate() const {
  if (cases.empty() || ns.empty() || alphas.empty())
    throw std::invalid_argument("study grid must be nonempty");
  for (int c : cases)
    if (c < 1 || c > 3) throw std::invalid_argument("cases must be in {1,2,3}");
  for (int n : ns)
    if (n < 4) throw std::invalid_argument("study sample sizes must be >= 4");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0))
      throw std::invalid_argument("alphas must lie strictly in (0,1)");
  if (B < 2) throw std::invalid_argument("study needs B >= 2");
  if (R < 1) throw std::invalid_argument("study needs R >= 1");
  if (m < 1) throw std::invalid_argument("study needs m >= 1");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("level must lie strictly in (0,1)");
}

std::vector<std::pair<int, int>> select_contrast_pairs(
    const Eigen::VectorXd& truths, const StudyConfig& cfg) {
  std::vector<std::pair<int, int>> pairs;
  const int m = static_cast<int>(truths.size());
  for (int i = 0; i < m && static_cast<int>(pairs.size()) < cfg.contrast_quota; ++i) {
    for (int j = i + 1; j < m && static_cast<int>(pairs.size()) < cfg.contrast_quota;
         ++j) {
      const double gi = truths[i], gj = truths[j];
      if (gi < cfg.contrast_band_lo || gi > cfg.contrast_band_hi) continue;
      if (gj < cfg.contrast_band_lo || gj > cfg.contrast_band_hi) continue;
      if (std::abs(std::abs(gi - gj) - cfg.contrast_gap) > cfg.contrast_gap_tol)
        continue;
      pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

namespace {

struct RawRecord {
  int rep;
  int idx_a;
  int idx_b;  // -1 for pointwise rows
  double truth;
  double estimate;
  double se;
  double ci_lo;
  double ci_hi;
  bool covered;
  bool clamped;
};

std::string cell_suffix(const CellResult& cell) {
  std::ostringstream os;
  os << "case" << cell.case_id << "_n" << cell.n << "_alpha";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", cell.alpha);
  os << buf;
  return os.str();
}

void write_raw_csv(const std::string& path, const std::vector<RawRecord>& rows,
                   bool contrast) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << (contrast ? "rep,i,j,truth,estimate,se,ci_lo,ci_hi,covered,clamped\n"
                   : "rep,point,truth,estimate,se,ci_lo,ci_hi,covered,clamped\n");
  for (const auto& r : rows) {
    out << r.rep << ',' << r.idx_a;
    if (contrast) out << ',' << r.idx_b;
    out << ',' << format_double(r.truth) << ',' << format_double(r.estimate)
        << ',' << format_double(r.se) << ',' << format_double(r.ci_lo) << ','
        << format_double(r.ci_hi) << ',' << (r.covered ? 1 : 0) << ','
        << (r.clamped ? 1 : 0) << "\n";
  }
}

CellResult run_cell(const StudyConfig& cfg, int case_id, int n, double alpha) {
  CellResult cell;
  cell.case_id = case_id;
  cell.n = n;
  cell.alpha = alpha;
  cell.r = static_cast<int>(std::floor(std::pow(static_cast<double>(n), alpha)));
  if (cell.r < 1 || cell.r >= n)
    throw std::invalid_argument("alpha yields subsample size outside [1, n)");

  // Fixed test set, held fixed across replications of this case.
  const Eigen::MatrixXd test_x = draw_test_points(
      cfg.m, kSimDim, derive_seed(cfg.seed, rng_tag::kTestPoints, case_id));
  Eigen::VectorXd truths(cfg.m);
  for (int j = 0; j < cfg.m; ++j)
    truths[j] = true_risk(case_id, test_x.row(j).transpose());
  const auto pairs = select_contrast_pairs(truths, cfg);
  const int n_pairs = static_cast<int>(pairs.size());
  Eigen::VectorXd pair_truths(n_pairs);
  for (int q = 0; q < n_pairs; ++q)
    pair_truths[q] = truths[pairs[q].first] - truths[pairs[q].second];

  NetworkConfig net;
  net.widths.push_back(kSimDim);
  for (int w : cfg.hidden_widths) net.widths.push_back(w);
  net.widths.push_back(1);
  net.dropout_rate = cfg.train.dropout_rate;
  net.weight_decay = cfg.train.weight_decay;

  Eigen::MatrixXd est(cfg.R, cfg.m), se(cfg.R, cfg.m);
  Eigen::MatrixXd est_c(cfg.R, n_pairs), se_c(cfg.R, n_pairs);
  Eigen::MatrixXd clamped(cfg.R, cfg.m), clamped_c(cfg.R, n_pairs);

  const std::uint64_t cell_key =
      derive_seed(cfg.seed, rng_tag::kReplication,
                  static_cast<std::uint64_t>(case_id) * 1000003ull + n,
                  std::bit_cast<std::uint64_t>(alpha));
  parallel_for(cfg.R, cfg.n_threads, [&](int k) {
    SimulationSpec spec;
    spec.case_id = case_id;
    spec.n = n;
    spec.censor_rate_target = cfg.censor_target;
    spec.seed = derive_seed(cell_key, 1, k);
    const SurvivalDataset data = generate_case(spec);
    const EnsembleModel model = fit_ensemble(data, net, cfg.train, cell.r, cfg.B,
                                             derive_seed(cell_key, 2, k), 1);
    // One prediction vector per test point serves estimate and IJ variance.
    std::vector<Eigen::VectorXd> preds(cfg.m);
    for (int j = 0; j < cfg.m; ++j) {
      preds[j] = base_predictions(model, test_x.row(j).transpose());
      est(k, j) = preds[j].mean();
      const double raw = ij_cov_from_predictions(model.inclusion, preds[j], preds[j]);
      clamped(k, j) = raw < 0.0 ? 1.0 : 0.0;
      se(k, j) = std::sqrt(std::max(raw, 0.0));
    }
    for (int q = 0; q < n_pairs; ++q) {
      const auto& [i, j] = pairs[q];
      est_c(k, q) = est(k, i) - est(k, j);
      const double v1 = ij_cov_from_predictions(model.inclusion, preds[i], preds[i]);
      const double v2 = ij_cov_from_predictions(model.inclusion, preds[j], preds[j]);
      const double tau = ij_cov_from_predictions(model.inclusion, preds[i], preds[j]);
      const double raw = v1 + v2 - 2.0 * tau;
      clamped_c(k, q) = raw < 0.0 ? 1.0 : 0.0;
      se_c(k, q) = std::sqrt(std::max(raw, 0.0));
    }
  });

  std::ostringstream label;
  label << "case" << case_id << ",n=" << n << ",alpha=" << alpha;
  cell.pointwise = evaluate_pointwise(est, se, truths, cfg.level,
                                      label.str(), &cell.pointwise_detail);
  if (n_pairs > 0)
    cell.contrast =
        evaluate_pointwise(est_c, se_c, pair_truths, cfg.level, label.str());

  if (!cfg.out_dir.empty() && cfg.write_raw) {
    const double z = normal_quantile(1.0 - (1.0 - cfg.level) / 2.0);
    std::vector<RawRecord> rows;
    rows.reserve(cfg.R * cfg.m);
    for (int k = 0; k < cfg.R; ++k)
      for (int j = 0; j < cfg.m; ++j) {
        RawRecord rec{k, j, -1, truths[j], est(k, j), se(k, j),
                      est(k, j) - z * se(k, j), est(k, j) + z * se(k, j),
                      std::abs(est(k, j) - truths[j]) <= z * se(k, j),
                      clamped(k, j) > 0.0};
        rows.push_back(rec);
      }
    write_raw_csv((fs::path(cfg.out_dir) /
                   ("raw_pointwise_" + cell_suffix(cell) + ".csv")).string(),
                  rows, false);
    rows.clear();
    for (int k = 0; k < cfg.R; ++k)
      for (int q = 0; q < n_pairs; ++q) {
        RawRecord rec{k, pairs[q].first, pairs[q].second, pair_truths[q],
                      est_c(k, q), se_c(k, q), est_c(k, q) - z * se_c(k, q),
                      est_c(k, q) + z * se_c(k, q),
                      std::abs(est_c(k, q) - pair_truths[q]) <= z * se_c(k, q),
                      clamped_c(k, q) > 0.0};
        rows.push_back(rec);
      }
    write_raw_csv((fs::path(cfg.out_dir) /
                   ("raw_contrast_" + cell_suffix(cell) + ".csv")).string(),
                  rows, true);
  }
  return cell;
}

void write_metrics_table(const std::string& path,
                         const std::vector<CellResult>& cells, bool contrast) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "case,n,alpha,r,B_points,replications,bias,mae,emp_sd,se,cp,ail,status\n";
  for (const auto& cell : cells) {
    const MetricsRow* row = nullptr;
    if (!cell.failed) {
      if (contrast)
        row = cell.contrast ? &*cell.contrast : nullptr;
      else
        row = &cell.pointwise;
    }
    out << cell.case_id << ',' << cell.n << ',' << format_double(cell.alpha)
        << ',' << cell.r << ',';
    if (row) {
      out << row->points << ',' << row->replications << ','
          << format_double(row->bias) << ',' << format_double(row->mae) << ','
          << (row->emp_sd ? format_double(*row->emp_sd) : std::string("NA"))
          << ',' << format_double(row->mean_se) << ','
          << format_double(row->coverage) << ','
          << format_double(row->avg_interval_length) << ",ok\n";
    } else {
      out << ",,,,,,,," << (cell.failed ? "failed:" + cell.error : "no-pairs")
          << "\n";
    }
  }
}

}  // namespace

void write_study_outputs(const StudyConfig& cfg,
                         const std::vector<CellResult>& cells) {
  if (cfg.out_dir.empty()) return;
  fs::create_directories(cfg.out_dir);
  write_metrics_table((fs::path(cfg.out_dir) / "metrics_pointwise.csv").string(),
                      cells, false);
  write_metrics_table((fs::path(cfg.out_dir) / "metrics_contrast.csv").string(),
                      cells, true);

  // Coverage vs alpha, one file per (case, n), gnuplot `x y` format.
  for (const auto& cell : cells) {
    if (cell.failed) continue;
    std::ostringstream name;
    name << "coverage_vs_alpha_case" << cell.case_id << "_n" << cell.n << ".dat";
    const fs::path path = fs::path(cfg.out_dir) / name.str();
    std::ofstream out(path, std::ios::app);
    out << format_double(cell.alpha) << ' '
        << format_double(cell.pointwise.coverage) << "\n";
  }
  // SE vs EmpSD scatter per cell.
  for (const auto& cell : cells) {
    if (cell.failed || !cell.pointwise.emp_sd) continue;
    std::ostringstream name;
    name << "se_vs_empsd_" << cell_suffix(cell) << ".dat";
    std::ofstream out(fs::path(cfg.out_dir) / name.str());
    for (int j = 0; j < cell.pointwise_detail.emp_sd.size(); ++j)
      out << format_double(cell.pointwise_detail.emp_sd[j]) << ' '
          << format_double(cell.pointwise_detail.mean_se[j]) << "\n";
  }
}

std::vector<CellResult> run_monte_carlo(const StudyConfig& cfg) {
  cfg.validate();
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    // coverage files are appended; clear stale copies first
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
      const std::string fname = entry.path().filename().string();
      if (fname.rfind("coverage_vs_alpha_", 0) == 0) fs::remove(entry.path());
    }
  }
  std::vector<CellResult> cells;
  for (int case_id : cfg.cases)
    for (int n : cfg.ns)
      for (double alpha : cfg.alphas) {
        CellResult cell;
        try {
          cell = run_cell(cfg, case_id, n, alpha);
        } catch (const std::exception& e) {
          cell.case_id = case_id;
          cell.n = n;
          cell.alpha = alpha;
          cell.failed = true;
          cell.error = e.what();
          std::cerr << "escox: cell case " << case_id << " n " << n << " alpha "
                    << alpha << " failed: " << e.what() << "\n";
        }
        cells.push_back(std::move(cell));
        std::cerr << "escox: finished cell case " << cells.back().case_id
                  << " n " << cells.back().n << " alpha " << cells.back().alpha
                  << (cells.back().failed ? " (failed)" : "") << "\n";
      }
  write_study_outputs(cfg, cells);
  return cells;
}

}  // namespace escox
