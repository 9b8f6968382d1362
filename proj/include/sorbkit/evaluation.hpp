#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"

// Model evaluation: accuracy metrics, residual normality and
// heteroscedasticity diagnostics, paired significance tests, uncertainty
// calibration and physics-consistency scoring.

namespace sorbkit::eval {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct MetricSet {
  double r2 = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent
  double pearson = 0.0;
  double spearman = 0.0;
  std::size_t mape_skipped = 0;  // zero-target entries excluded from MAPE
  bool r2_defined = true;        // false when y_true is constant
};

inline MetricSet metrics(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size()) throw invalid_input("metrics: length mismatch");
  if (y_true.empty()) throw invalid_input("metrics: empty input");
  const std::size_t n = y_true.size();
  MetricSet m;
  double mean_y = 0.0;
  for (double v : y_true) mean_y += v;
  mean_y /= n;
  double sse = 0.0, sst = 0.0, abs_sum = 0.0, ape_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double e = y_true[i] - y_pred[i];
    sse += e * e;
    sst += (y_true[i] - mean_y) * (y_true[i] - mean_y);
    abs_sum += std::abs(e);
    if (y_true[i] != 0.0)
      ape_sum += std::abs(e / y_true[i]);
    else
      ++m.mape_skipped;
  }
  m.rmse = std::sqrt(sse / n);
  m.mae = abs_sum / n;
  std::size_t mape_n = n - m.mape_skipped;
  m.mape = mape_n ? 100.0 * ape_sum / mape_n : std::nan("");
  if (sst <= 0.0) {
    m.r2 = std::nan("");
    m.r2_defined = false;
  } else {
    m.r2 = 1.0 - sse / sst;
  }
  m.pearson = pearson_corr(y_true, y_pred);
  m.spearman = spearman_corr(y_true, y_pred);
  return m;
}

// ---------------------------------------------------------------------------
// Residual diagnostics

struct ResidualTests {
  double jarque_bera_stat = 0.0, jarque_bera_p = 1.0;
  double lilliefors_stat = 0.0, lilliefors_p = 1.0;
  double breusch_pagan_stat = 0.0, breusch_pagan_p = 1.0;
  bool has_breusch_pagan = false;
};

inline std::pair<double, double> jarque_bera(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 8) throw invalid_input("jarque_bera: need n >= 8");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 <= 0.0) return {0.0, 1.0};
  double skew = m3 / std::pow(m2, 1.5);
  double kurt = m4 / (m2 * m2);
  double jb = n / 6.0 * (skew * skew + 0.25 * (kurt - 3.0) * (kurt - 3.0));
  return {jb, chi2_sf(jb, 2)};
}

namespace detail {

// KS distance of a sample against N(mean, sd) estimated from the sample.
inline double lilliefors_statistic(std::vector<double> x) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= (n - 1);
  double sd = std::sqrt(std::max(var, 1e-300));
  std::sort(x.begin(), x.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = normal_cdf((x[i] - mean) / sd);
    double d_plus = (i + 1.0) / n - f;
    double d_minus = f - static_cast<double>(i) / n;
    d = std::max({d, d_plus, d_minus});
  }
  return d;
}

// Null distribution of the Lilliefors statistic, Monte Carlo with a fixed
// seed, cached per sample size.
inline const std::vector<double>& lilliefors_null_table(std::size_t n) {
  static std::map<std::size_t, std::vector<double>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const int n_draws = 10000;
  std::vector<double> table(n_draws);
  auto rng = make_rng(split_seed(0x6c696c, n));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> sample(n);
  for (int k = 0; k < n_draws; ++k) {
    for (auto& v : sample) v = gauss(rng);
    table[k] = lilliefors_statistic(sample);
  }
  std::sort(table.begin(), table.end());
  return cache.emplace(n, std::move(table)).first->second;
}

}  // namespace detail

inline std::pair<double, double> lilliefors(const std::vector<double>& x) {
  if (x.size() < 8) throw invalid_input("lilliefors: need n >= 8");
  double d = detail::lilliefors_statistic(x);
  const auto& table = detail::lilliefors_null_table(x.size());
  auto it = std::lower_bound(table.begin(), table.end(), d);
  double p = 1.0 - static_cast<double>(it - table.begin()) / static_cast<double>(table.size());
  return {d, p};
}

// n*R^2 of the squared-residual auxiliary regression on the given regressors.
inline std::pair<double, double> breusch_pagan(const std::vector<double>& residuals,
                                               const Mat& regressors) {
  const std::size_t n = residuals.size();
  if (n < 8) throw invalid_input("breusch_pagan: need n >= 8");
  if (static_cast<std::size_t>(regressors.rows()) != n)
    throw invalid_input("breusch_pagan: regressor row mismatch");
  const Eigen::Index k = regressors.cols();
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) y(i) = residuals[i] * residuals[i];
  Mat x(n, k + 1);
  x.col(0).setOnes();
  x.rightCols(k) = regressors;
  Vec beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  Vec fitted = x * beta;
  double sse = (y - fitted).squaredNorm();
  double sst = (y.array() - y.mean()).square().sum();
  double r2 = sst > 0 ? 1.0 - sse / sst : 0.0;
  double stat = static_cast<double>(n) * std::max(r2, 0.0);
  return {stat, chi2_sf(stat, static_cast<int>(k))};
}

inline ResidualTests residual_tests(const std::vector<double>& residuals,
                                    const Mat* regressors = nullptr) {
  if (residuals.size() < 8) throw invalid_input("residual_tests: need n >= 8");
  ResidualTests out;
  std::tie(out.jarque_bera_stat, out.jarque_bera_p) = jarque_bera(residuals);
  std::tie(out.lilliefors_stat, out.lilliefors_p) = lilliefors(residuals);
  if (regressors && regressors->cols() > 0) {
    std::tie(out.breusch_pagan_stat, out.breusch_pagan_p) =
        breusch_pagan(residuals, *regressors);
    out.has_breusch_pagan = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paired tests

struct WilcoxonResult {
  double w_signed = 0.0;  // signed rank-sum statistic (W+ - W-)
  double z = 0.0;
  double p = 1.0;
  std::size_t n_effective = 0;
  bool degenerate = false;  // all differences zero
};

// Signed-rank test with zero exclusion, tie-corrected normal approximation
// and continuity correction.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  if (a.size() != b.size()) throw invalid_input("wilcoxon: length mismatch");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult res;
  res.n_effective = diffs.size();
  if (diffs.empty()) {
    res.degenerate = true;
    return res;
  }
  if (diffs.size() < 6) throw invalid_input("wilcoxon: need >= 6 nonzero pairs");
  std::vector<double> absd(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) absd[i] = std::abs(diffs[i]);
  std::vector<double> ranks = average_ranks(absd);
  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i)
    (diffs[i] > 0 ? w_plus : w_minus) += ranks[i];
  const double n = static_cast<double>(diffs.size());
  double mean = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  // tie correction: subtract sum(t^3 - t)/48 over tie groups
  std::vector<double> sorted_abs(absd);
  std::sort(sorted_abs.begin(), sorted_abs.end());
  std::size_t i = 0;
  while (i < sorted_abs.size()) {
    std::size_t j = i;
    while (j < sorted_abs.size() && sorted_abs[j] == sorted_abs[i]) ++j;
    double t = static_cast<double>(j - i);
    if (t > 1) var -= (t * t * t - t) / 48.0;
    i = j;
  }
  double w = std::min(w_plus, w_minus);
  double num = w - mean;
  double cc = num < 0 ? 0.5 : (num > 0 ? -0.5 : 0.0);
  res.w_signed = w_plus - w_minus;
  res.z = var > 0 ? (num + cc) / std::sqrt(var) : 0.0;
  res.p = std::min(1.0, 2.0 * normal_cdf(-std::abs(res.z)));
  return res;
}

struct FriedmanResult {
  double statistic = 0.0;
  double p = 1.0;
  int df = 0;
};

// Friedman chi-square over per-sample ranks of k >= 3 paired error vectors.
inline FriedmanResult friedman(const std::vector<std::vector<double>>& errors) {
  const std::size_t k = errors.size();
  if (k < 3) throw invalid_input("friedman: need >= 3 models");
  const std::size_t n = errors[0].size();
  for (const auto& e : errors)
    if (e.size() != n) throw invalid_input("friedman: length mismatch");
  if (n < 2) throw invalid_input("friedman: need >= 2 samples");
  std::vector<double> rank_sums(k, 0.0);
  std::vector<double> row(k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) row[j] = errors[j][i];
    std::vector<double> r = average_ranks(row);
    for (std::size_t j = 0; j < k; ++j) rank_sums[j] += r[j];
  }
  double s = 0.0;
  for (double rs : rank_sums) s += rs * rs;
  double dn = static_cast<double>(n), dk = static_cast<double>(k);
  FriedmanResult res;
  res.statistic = 12.0 / (dn * dk * (dk + 1.0)) * s - 3.0 * dn * (dk + 1.0);
  res.statistic = std::max(res.statistic, 0.0);
  res.df = static_cast<int>(k) - 1;
  res.p = chi2_sf(res.statistic, res.df);
  return res;
}

struct PairedTests {
  WilcoxonResult wilcoxon;
  FriedmanResult friedman_test;
  bool has_friedman = false;
};

inline PairedTests paired_tests(const std::vector<std::vector<double>>& errors) {
  if (errors.size() < 2) throw invalid_input("paired_tests: need >= 2 models");
  PairedTests out;
  out.wilcoxon = wilcoxon_signed_rank(errors[0], errors[1]);
  if (errors.size() >= 3) {
    out.friedman_test = friedman(errors);
    out.has_friedman = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationReport {
  std::vector<double> nominal = {0.68, 0.95, 0.99};
  std::vector<double> z_levels = {1.0, 1.96, 2.576};
  std::vector<double> coverage;
  double sigma_error_spearman = 0.0;  // Spearman(sigma, |residual|)
};

inline CalibrationReport calibration(const std::vector<double>& y_true,
                                     const std::vector<double>& mean,
                                     const std::vector<double>& sigma_total) {
  const std::size_t n = y_true.size();
  if (mean.size() != n || sigma_total.size() != n)
    throw invalid_input("calibration: length mismatch");
  if (n == 0) throw invalid_input("calibration: empty input");
  for (double s : sigma_total)
    if (!(s >= 0.0)) throw invalid_input("calibration: negative sigma");
  CalibrationReport rep;
  std::vector<double> abs_resid(n);
  for (std::size_t i = 0; i < n; ++i) abs_resid[i] = std::abs(y_true[i] - mean[i]);
  for (double z : rep.z_levels) {
    std::size_t inside = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (abs_resid[i] <= z * sigma_total[i]) ++inside;
    rep.coverage.push_back(static_cast<double>(inside) / static_cast<double>(n));
  }
  rep.sigma_error_spearman = spearman_corr(sigma_total, abs_resid);
  return rep;
}

// ---------------------------------------------------------------------------
// Physics-consistency sweep

struct SweepSpec {
  std::vector<double> pressures;     // bar, strictly increasing
  std::vector<double> temperatures;  // K
  // a decrease only counts as a monotonicity violation when it exceeds this
  // fraction of the local magnitude; filters float-level wiggle on plateaus
  double mono_rel_tol = 1e-3;
};

struct ConsistencyReport {
  double monotonicity_violation_rate = 0.0;  // fraction of adjacent pressure pairs decreasing
  double negativity_rate = 0.0;              // fraction of grid points with q < 0
  double saturation_breach_rate = 0.0;       // fraction exceeding the given cap (if any)
  double score = 1.0;                        // 1 - mean violation rate
};

// `model(p_bar, T_K) -> uptake`; `q_cap` < 0 disables the saturation check.
inline ConsistencyReport physics_consistency(
    const std::function<double(double, double)>& model, const SweepSpec& sweep,
    double q_cap = -1.0) {
  if (sweep.pressures.size() < 2 || sweep.temperatures.empty())
    throw invalid_input("physics_consistency: need >= 2 pressures and >= 1 temperature");
  for (std::size_t i = 1; i < sweep.pressures.size(); ++i)
    if (sweep.pressures[i] <= sweep.pressures[i - 1])
      throw invalid_input("physics_consistency: pressures must increase");
  std::size_t mono_checks = 0, mono_bad = 0, points = 0, neg = 0, sat = 0;
  for (double T : sweep.temperatures) {
    double prev = model(sweep.pressures[0], T);
    ++points;
    if (prev < 0) ++neg;
    if (q_cap >= 0 && prev > q_cap) ++sat;
    for (std::size_t i = 1; i < sweep.pressures.size(); ++i) {
      double q = model(sweep.pressures[i], T);
      ++points;
      if (q < 0) ++neg;
      if (q_cap >= 0 && q > q_cap) ++sat;
      ++mono_checks;
      double tol = sweep.mono_rel_tol * std::max({std::abs(prev), std::abs(q), 1e-12});
      if (q < prev - tol) ++mono_bad;
      prev = q;
    }
  }
  ConsistencyReport rep;
  rep.monotonicity_violation_rate = static_cast<double>(mono_bad) / mono_checks;
  rep.negativity_rate = static_cast<double>(neg) / points;
  rep.saturation_breach_rate = q_cap >= 0 ? static_cast<double>(sat) / points : 0.0;
  double mean_rate = (rep.monotonicity_violation_rate + rep.negativity_rate +
                      (q_cap >= 0 ? rep.saturation_breach_rate : 0.0)) /
                     (q_cap >= 0 ? 3.0 : 2.0);
  rep.score = 1.0 - mean_rate;
  return rep;
}

}  // namespace sorbkit::eval
