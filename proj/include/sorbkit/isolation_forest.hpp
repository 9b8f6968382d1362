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

// Isolation forest anomaly scorer: random axis-aligned splits, subsampled
// trees, average path length normalized by c(n).

namespace sorbkit::feat {

class IsolationForest {
 public:
  struct Config {
    int n_trees = 100;
    int max_subsample = 256;
    std::uint64_t seed = 0;
  };

  static double c_factor(std::size_t n) {
    if (n <= 1) return 0.0;
    double h = std::log(static_cast<double>(n - 1)) + 0.5772156649015329;
    return 2.0 * h - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
  }

  void fit(const Eigen::MatrixXd& x, const Config& cfg) {
    const std::size_t n = static_cast<std::size_t>(x.rows());
    subsample_ = std::min<std::size_t>(cfg.max_subsample, n);
    height_limit_ = static_cast<int>(std::ceil(std::log2(std::max<std::size_t>(subsample_, 2))));
    trees_.clear();
    for (int t = 0; t < cfg.n_trees; ++t) {
      auto rng = make_rng(split_seed(cfg.seed, 0x69666f + t));
      std::vector<int> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(subsample_);
      trees_.push_back(build(x, idx, 0, rng));
    }
  }

  // Anomaly score in (0,1]; higher is more anomalous.
  double score(const Eigen::RowVectorXd& row) const {
    double mean_path = 0.0;
    for (const auto& t : trees_) mean_path += path_length(*t, row, 0);
    mean_path /= trees_.size();
    return std::pow(2.0, -mean_path / c_factor(subsample_));
  }

  std::vector<double> scores(const Eigen::MatrixXd& x) const {
    std::vector<double> s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) s[i] = score(x.row(i));
    return s;
  }

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    std::size_t size = 0;  // external node size
    std::unique_ptr<Node> left, right;
    bool leaf() const { return !left; }
  };

  std::unique_ptr<Node> build(const Eigen::MatrixXd& x, const std::vector<int>& idx,
                              int depth, std::mt19937_64& rng) const {
    auto node = std::make_unique<Node>();
    if (idx.size() <= 1 || depth >= height_limit_) {
      node->size = idx.size();
      return node;
    }
    // pick a feature with spread; bail out if all columns are constant
    std::uniform_int_distribution<int> pickf(0, static_cast<int>(x.cols()) - 1);
    int feature = -1;
    double lo = 0, hi = 0;
    for (int attempt = 0; attempt < 8 * x.cols(); ++attempt) {
      int f = pickf(rng);
      lo = hi = x(idx[0], f);
      for (int i : idx) {
        lo = std::min(lo, x(i, f));
        hi = std::max(hi, x(i, f));
      }
      if (hi > lo) {
        feature = f;
        break;
      }
    }
    if (feature < 0) {
      node->size = idx.size();
      return node;
    }
    std::uniform_real_distribution<double> unif(lo, hi);
    double thr = unif(rng);
    std::vector<int> left_idx, right_idx;
    for (int i : idx)
      (x(i, feature) < thr ? left_idx : right_idx).push_back(i);
    if (left_idx.empty() || right_idx.empty()) {
      node->size = idx.size();
      return node;
    }
    node->feature = feature;
    node->threshold = thr;
    node->left = build(x, left_idx, depth + 1, rng);
    node->right = build(x, right_idx, depth + 1, rng);
    return node;
  }

  double path_length(const Node& node, const Eigen::RowVectorXd& row, int depth) const {
    if (node.leaf()) return depth + c_factor(std::max<std::size_t>(node.size, 1));
    if (row(node.feature) < node.threshold) return path_length(*node.left, row, depth + 1);
    return path_length(*node.right, row, depth + 1);
  }

  std::vector<std::unique_ptr<Node>> trees_;
  std::size_t subsample_ = 256;
  int height_limit_ = 8;
};

}  // namespace sorbkit::feat
