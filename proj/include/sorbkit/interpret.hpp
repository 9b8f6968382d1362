#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sorbkit/common.hpp"

// Post-hoc interpretability: kernel SHAP attributions with the efficiency
// constraint enforced exactly, first-order accumulated local effects, and
// pairwise H-squared interaction statistics.

namespace sorbkit::interp {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Black-box model: batch of rows in, one scalar prediction per row out.
using Model = std::function<Vec(const Mat&)>;

struct ShapResult {
  double base_value = 0.0;
  Mat values;                             // n_samples x n_features
  std::vector<double> global_importance;  // mean |value| per feature
  bool used_ridge_fallback = false;
};

namespace detail {

inline double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double kernel_weight(int d, int s) {
  return (d - 1.0) / (binom(d, s) * s * (d - s));
}

}  // namespace detail

// Shapley attributions by weighted least squares over feature coalitions.
// Masked features are replaced by background means (interventional). For
// d <= 12 all 2^d coalitions are enumerated (exact Shapley values); above
// that, coalitions are sampled proportionally to the Shapley kernel. The
// efficiency identity sum(phi) = f(x) - base is enforced by substitution.
inline ShapResult kernel_shap(const Model& model, const Mat& x_explain, const Mat& background,
                              int n_coalitions = 2048, std::uint64_t seed = 0) {
  const int d = static_cast<int>(x_explain.cols());
  const Eigen::Index n = x_explain.rows();
  if (d < 1) throw invalid_input("kernel_shap: need >= 1 feature");
  if (background.rows() == 0 || background.cols() != d)
    throw invalid_input("kernel_shap: bad background");

  Vec bg_mean = background.colwise().mean();
  ShapResult res;
  res.base_value = model(bg_mean.transpose())(0);
  res.values = Mat::Zero(n, d);

  if (d == 1) {
    Vec fx = model(x_explain);
    for (Eigen::Index i = 0; i < n; ++i) res.values(i, 0) = fx(i) - res.base_value;
    res.global_importance.assign(1, res.values.col(0).cwiseAbs().mean());
    return res;
  }

  // coalition masks (proper subsets only; empty/full handled by constraint)
  std::vector<std::uint32_t> masks;
  std::vector<double> weights;
  const bool exact = d <= 12;
  if (exact) {
    for (std::uint32_t m = 1; m + 1 < (1u << d); ++m) {
      int s = __builtin_popcount(m);
      masks.push_back(m);
      weights.push_back(detail::kernel_weight(d, s));
    }
  } else {
    std::vector<double> size_p(d - 1);
    for (int s = 1; s < d; ++s) size_p[s - 1] = (d - 1.0) / (s * (d - s));
    std::discrete_distribution<int> pick_size(size_p.begin(), size_p.end());
    auto rng = make_rng(split_seed(seed, 0x736870));
    std::vector<int> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    for (int c = 0; c < n_coalitions; ++c) {
      int s = pick_size(rng) + 1;
      std::shuffle(perm.begin(), perm.end(), rng);
      std::uint32_t m = 0;
      for (int j = 0; j < s; ++j) m |= (1u << perm[j]);
      masks.push_back(m);
      weights.push_back(1.0);  // sampling already follows the kernel
    }
  }
  const std::size_t nc = masks.size();

  // design with phi_d substituted out: row_j = z_j - z_d for j < d
  Mat a(nc, d - 1);
  Vec w(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    double zd = (masks[c] >> (d - 1)) & 1u ? 1.0 : 0.0;
    for (int j = 0; j < d - 1; ++j)
      a(c, j) = (((masks[c] >> j) & 1u) ? 1.0 : 0.0) - zd;
    w(c) = weights[c];
  }
  Mat atwa = a.transpose() * (w.asDiagonal() * a);
  Eigen::FullPivLU<Mat> lu(atwa);
  if (!lu.isInvertible()) {
    atwa.diagonal().array() += 1e-10;
    res.used_ridge_fallback = true;
  }
  Eigen::LDLT<Mat> solver(atwa);

  Vec fx_all = model(x_explain);
  for (Eigen::Index i = 0; i < n; ++i) {
    double delta = fx_all(i) - res.base_value;
    Mat masked(nc, d);
    for (std::size_t c = 0; c < nc; ++c)
      for (int j = 0; j < d; ++j)
        masked(c, j) = ((masks[c] >> j) & 1u) ? x_explain(i, j) : bg_mean(j);
    Vec fz = model(masked);
    Vec y(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      double zd = (masks[c] >> (d - 1)) & 1u ? 1.0 : 0.0;
      y(c) = fz(c) - res.base_value - zd * delta;
    }
    Vec phi_free = solver.solve(a.transpose() * (w.asDiagonal() * y));
    double phi_last = delta - phi_free.sum();
    for (int j = 0; j < d - 1; ++j) res.values(i, j) = phi_free(j);
    res.values(i, d - 1) = phi_last;
  }
  res.global_importance.resize(d);
  for (int j = 0; j < d; ++j) res.global_importance[j] = res.values.col(j).cwiseAbs().mean();
  return res;
}

// ---------------------------------------------------------------------------
// Accumulated local effects

struct AleCurve {
  std::string feature;
  std::vector<double> bin_edges;  // quantile edges, size = n_effective_bins + 1
  std::vector<double> effects;    // centered accumulated effect per bin
  std::vector<std::size_t> bin_counts;
  double monotonicity = 1.0;      // max(frac non-decreasing, frac non-increasing)
  double effect_strength = 0.0;   // count-weighted std of the centered curve
};

inline AleCurve ale(const Model& model, const Mat& x, int feature, int n_bins = 20,
                    const std::string& name = "") {
  if (feature < 0 || feature >= x.cols()) throw invalid_input("ale: feature index out of range");
  if (n_bins < 2) throw invalid_input("ale: need n_bins >= 2");
  std::vector<double> col(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) col[i] = x(i, feature);
  std::vector<double> edges;
  for (int b = 0; b <= n_bins; ++b) {
    double e = quantile_of(col, static_cast<double>(b) / n_bins);
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }
  if (edges.size() < 2) throw invalid_input("ale: constant feature");
  const std::size_t nb = edges.size() - 1;

  // per-bin mean prediction difference between the bin's upper and lower edge
  std::vector<double> delta_sum(nb, 0.0);
  std::vector<std::size_t> counts(nb, 0);
  std::vector<int> bin_of(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double v = col[i];
    std::size_t b = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
    b = b == 0 ? 0 : std::min(b - 1, nb - 1);
    bin_of[i] = static_cast<int>(b);
    ++counts[b];
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (counts[b] == 0) continue;
    Mat lo(counts[b], x.cols()), hi(counts[b], x.cols());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (bin_of[i] != static_cast<int>(b)) continue;
      lo.row(r) = x.row(i);
      hi.row(r) = x.row(i);
      lo(r, feature) = edges[b];
      hi(r, feature) = edges[b + 1];
      ++r;
    }
    delta_sum[b] = (model(hi) - model(lo)).sum();
  }

  AleCurve curve;
  curve.feature = name.empty() ? "feature_" + std::to_string(feature) : name;
  curve.bin_edges = edges;
  curve.bin_counts = counts;
  curve.effects.resize(nb);
  double acc = 0.0;
  std::size_t total = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    acc += counts[b] ? delta_sum[b] / counts[b] : 0.0;
    curve.effects[b] = acc;
    total += counts[b];
  }
  double wmean = 0.0;
  for (std::size_t b = 0; b < nb; ++b) wmean += curve.effects[b] * counts[b];
  wmean /= total;
  for (double& e : curve.effects) e -= wmean;
  double wvar = 0.0;
  for (std::size_t b = 0; b < nb; ++b)
    wvar += counts[b] * curve.effects[b] * curve.effects[b];
  curve.effect_strength = std::sqrt(wvar / total);

  if (nb >= 2) {
    std::size_t nondec = 0, noninc = 0;
    for (std::size_t b = 1; b < nb; ++b) {
      double d = curve.effects[b] - curve.effects[b - 1];
      if (d >= 0) ++nondec;
      if (d <= 0) ++noninc;
    }
    curve.monotonicity = static_cast<double>(std::max(nondec, noninc)) / (nb - 1);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Friedman's H-squared interaction statistic

enum class InteractionBand { Negligible, Weak, Moderate, Strong, VeryStrong };

inline InteractionBand classify_interaction(double h2) {
  if (h2 < 0.05) return InteractionBand::Negligible;
  if (h2 < 0.1) return InteractionBand::Weak;
  if (h2 < 0.3) return InteractionBand::Moderate;
  if (h2 < 0.5) return InteractionBand::Strong;
  return InteractionBand::VeryStrong;
}

inline const char* interaction_band_name(InteractionBand b) {
  switch (b) {
    case InteractionBand::Negligible: return "negligible";
    case InteractionBand::Weak: return "weak";
    case InteractionBand::Moderate: return "moderate";
    case InteractionBand::Strong: return "strong";
    case InteractionBand::VeryStrong: return "very_strong";
  }
  return "?";
}

namespace detail {

// Partial dependence of the model over the listed features, evaluated with
// those features taken from `points` row r and the rest marginalized over x.
inline Vec partial_dependence(const Model& model, const Mat& x, const std::vector<int>& features,
                              const Mat& points) {
  Vec out(points.rows());
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    Mat grid = x;
    for (int f : features) grid.col(f).setConstant(points(r, f));
    out(r) = model(grid).mean();
  }
  return out;
}

}  // namespace detail

// H^2 for the feature pair (j, k): the variance fraction of the centered
// two-feature partial dependence not explained by the two one-feature
// partial dependences. Evaluated at up to grid_size sample rows.
inline double h_statistic(const Model& model, const Mat& x, int j, int k, int grid_size = 30,
                          std::uint64_t seed = 0) {
  if (j == k) throw invalid_input("h_statistic: need distinct features");
  if (j < 0 || k < 0 || j >= x.cols() || k >= x.cols())
    throw invalid_input("h_statistic: feature index out of range");
  for (int f : {j, k}) {
    double lo = x.col(f).minCoeff(), hi = x.col(f).maxCoeff();
    if (lo == hi) throw invalid_input("h_statistic: constant feature");
  }
  Mat points;
  if (x.rows() <= grid_size) {
    points = x;
  } else {
    std::vector<int> idx(x.rows());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(split_seed(seed, 0x6832));
    std::shuffle(idx.begin(), idx.end(), rng);
    points.resize(grid_size, x.cols());
    for (int r = 0; r < grid_size; ++r) points.row(r) = x.row(idx[r]);
  }
  Vec pd_jk = detail::partial_dependence(model, x, {j, k}, points);
  Vec pd_j = detail::partial_dependence(model, x, {j}, points);
  Vec pd_k = detail::partial_dependence(model, x, {k}, points);
  pd_jk.array() -= pd_jk.mean();
  pd_j.array() -= pd_j.mean();
  pd_k.array() -= pd_k.mean();
  double denom = pd_jk.squaredNorm();
  if (denom < 1e-12) return 0.0;
  return (pd_jk - pd_j - pd_k).squaredNorm() / denom;
}

struct HMatrix {
  std::map<std::pair<int, int>, double> pairs;  // key: (min,max) feature index

  double at(int a, int b) const {
    auto it = pairs.find({std::min(a, b), std::max(a, b)});
    if (it == pairs.end()) throw invalid_input("HMatrix: pair not computed");
    return it->second;
  }
};

inline HMatrix h_matrix(const Model& model, const Mat& x,
                        const std::vector<std::pair<int, int>>& feature_pairs, int grid_size = 30,
                        std::uint64_t seed = 0) {
  HMatrix out;
  for (auto [a, b] : feature_pairs)
    out.pairs[{std::min(a, b), std::max(a, b)}] = h_statistic(model, x, a, b, grid_size, seed);
  return out;
}

}  // namespace sorbkit::interp
