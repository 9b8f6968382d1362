#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "sorbkit/common.hpp"

// Random-forest regressor used for ensemble feature ranking: variance
// splits, bootstrap sampling, sqrt(d) feature subsampling, and
// mean-decrease-in-impurity importances.

namespace sorbkit::feat {

class RandomForestRegressor {
 public:
  struct Config {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 2;
    std::uint64_t seed = 0;
  };

  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Config& cfg) {
    const int n = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    mtry_ = std::max(1, static_cast<int>(std::round(std::sqrt(static_cast<double>(d)))));
    importance_.assign(d, 0.0);
    trees_.clear();
    for (int t = 0; t < cfg.n_trees; ++t) {
      auto rng = make_rng(split_seed(cfg.seed, 0x7266 + t));
      std::uniform_int_distribution<int> pick(0, n - 1);
      std::vector<int> idx(n);
      for (int i = 0; i < n; ++i) idx[i] = pick(rng);
      trees_.push_back(build(x, y, idx, 0, cfg, rng));
    }
    double total = std::accumulate(importance_.begin(), importance_.end(), 0.0);
    if (total > 0)
      for (double& v : importance_) v /= total;
  }

  double predict(const Eigen::RowVectorXd& row) const {
    double s = 0.0;
    for (const auto& t : trees_) s += predict_one(*t, row);
    return s / trees_.size();
  }

  const std::vector<double>& importance() const { return importance_; }

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;
    std::unique_ptr<Node> left, right;
    bool leaf() const { return !left; }
  };

  static double variance_times_n(const Eigen::VectorXd& y, const std::vector<int>& idx) {
    if (idx.empty()) return 0.0;
    double m = 0.0;
    for (int i : idx) m += y(i);
    m /= idx.size();
    double s = 0.0;
    for (int i : idx) s += (y(i) - m) * (y(i) - m);
    return s;
  }

  std::unique_ptr<Node> build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const std::vector<int>& idx, int depth, const Config& cfg,
                              std::mt19937_64& rng) {
    auto node = std::make_unique<Node>();
    double mean = 0.0;
    for (int i : idx) mean += y(i);
    node->value = mean / idx.size();
    if (depth >= cfg.max_depth || static_cast<int>(idx.size()) < 2 * cfg.min_leaf)
      return node;

    double parent_imp = variance_times_n(y, idx);
    if (parent_imp <= 1e-15) return node;

    std::vector<int> feats(x.cols());
    std::iota(feats.begin(), feats.end(), 0);
    std::shuffle(feats.begin(), feats.end(), rng);
    feats.resize(mtry_);

    int best_f = -1;
    double best_thr = 0.0, best_gain = 0.0;
    std::vector<int> sorted(idx);
    for (int f : feats) {
      std::sort(sorted.begin(), sorted.end(),
                [&](int a, int b) { return x(a, f) < x(b, f); });
      // prefix sums over the sorted order
      double sum_l = 0.0, sumsq_l = 0.0;
      double sum_t = 0.0, sumsq_t = 0.0;
      for (int i : sorted) {
        sum_t += y(i);
        sumsq_t += y(i) * y(i);
      }
      const int m = static_cast<int>(sorted.size());
      for (int s = 0; s < m - 1; ++s) {
        double yi = y(sorted[s]);
        sum_l += yi;
        sumsq_l += yi * yi;
        if (x(sorted[s + 1], f) <= x(sorted[s], f)) continue;
        int nl = s + 1, nr = m - nl;
        if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
        double imp_l = sumsq_l - sum_l * sum_l / nl;
        double sum_r = sum_t - sum_l, sumsq_r = sumsq_t - sumsq_l;
        double imp_r = sumsq_r - sum_r * sum_r / nr;
        double gain = parent_imp - imp_l - imp_r;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = f;
          best_thr = 0.5 * (x(sorted[s], f) + x(sorted[s + 1], f));
        }
      }
    }
    if (best_f < 0) return node;

    importance_[best_f] += best_gain;
    std::vector<int> li, ri;
    for (int i : idx)
      (x(i, best_f) <= best_thr ? li : ri).push_back(i);
    node->feature = best_f;
    node->threshold = best_thr;
    node->left = build(x, y, li, depth + 1, cfg, rng);
    node->right = build(x, y, ri, depth + 1, cfg, rng);
    return node;
  }

  static double predict_one(const Node& n, const Eigen::RowVectorXd& row) {
    if (n.leaf()) return n.value;
    if (row(n.feature) <= n.threshold) return predict_one(*n.left, row);
    return predict_one(*n.right, row);
  }

  std::vector<std::unique_ptr<Node>> trees_;
  std::vector<double> importance_;
  int mtry_ = 1;
};

}  // namespace sorbkit::feat
