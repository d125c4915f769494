#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mpv/common.hpp"

namespace mpv {

/// Row-major table of byte-valued features, one row per sample.
struct SampleMatrix {
  int features = 0;
  std::vector<std::uint8_t> data;

  SampleMatrix() = default;
  explicit SampleMatrix(int feature_count) : features(feature_count) {}

  std::size_t rows() const { return features == 0 ? 0 : data.size() / features; }
  std::span<const std::uint8_t> row(std::size_t i) const {
    return {data.data() + i * features, static_cast<std::size_t>(features)};
  }
  void add(std::span<const std::uint8_t> x) {
    detail::require(static_cast<int>(x.size()) == features, "SampleMatrix: wrong row length");
    data.insert(data.end(), x.begin(), x.end());
  }
};

/// Node of a regression tree; a leaf has feature < 0. Samples with
/// x[feature] <= threshold go left.
struct TreeNode {
  int feature = -1;
  int threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool operator==(const TreeNode&) const = default;
};

/// Weak classifier: a depth-limited regression tree and its weight.
struct RegressionTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root
  double weight = 1.0;

  double eval(std::span<const std::uint8_t> x) const {
    int n = 0;
    while (nodes[n].feature >= 0)
      n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
    return weight * nodes[n].value;
  }

  int depth() const { return depth_from(0); }

  bool operator==(const RegressionTree&) const = default;

 private:
  int depth_from(int n) const {
    if (nodes[n].feature < 0) return 0;
    return 1 + std::max(depth_from(nodes[n].left), depth_from(nodes[n].right));
  }
};

/// Incremental Gentle AdaBoost. Each round fits a weighted least-squares
/// tree to the labels, adds it to the running score F and reweights by
/// exp(-y h(x)).
class GentleBooster {
 public:
  GentleBooster(const SampleMatrix& x, std::vector<int> labels, std::vector<double> weights,
                int max_depth, int threads = 1, int min_leaf = 1)
      : x_(x), y_(std::move(labels)), w0_(std::move(weights)), max_depth_(max_depth),
        threads_(threads), min_leaf_(min_leaf) {
    const std::size_t n = x.rows();
    detail::require(n > 0 && y_.size() == n && w0_.size() == n,
                    "GentleBooster: labels and weights must match the samples");
    detail::require(max_depth >= 1, "GentleBooster: max_depth must be >= 1");
    detail::require(min_leaf >= 1, "GentleBooster: min_leaf must be >= 1");
    bool pos = false, neg = false;
    for (int v : y_) {
      detail::require(v == 1 || v == -1, "GentleBooster: labels must be +1 or -1");
      (v > 0 ? pos : neg) = true;
    }
    if (!pos || !neg) throw InvalidArgument("GentleBooster: both classes are required");
    double sum = 0.0;
    for (double v : w0_) {
      detail::require(v > 0.0 && std::isfinite(v), "GentleBooster: weights must be positive");
      sum += v;
    }
    for (double& v : w0_) v /= sum;
    w_ = w0_;
    score_.assign(n, 0.0);

    // feature-major copy for cache-friendly split search
    const int f = x.features;
    columns_.resize(static_cast<std::size_t>(f) * n);
    bins_.assign(f, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < f; ++j) {
        const std::uint8_t v = x.data[i * f + j];
        columns_[static_cast<std::size_t>(j) * n + i] = v;
        bins_[j] = std::max(bins_[j], v + 1);
      }
    loss_.push_back(1.0);
  }

  /// Fits and appends one tree; returns it.
  const RegressionTree& add_round() {
    std::vector<std::uint32_t> all(x_.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    RegressionTree tree;
    grow(tree, all, 0);
    double z = 0.0, loss = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      const double h = tree.eval(x_.row(i));
      score_[i] += h;
      w_[i] *= std::exp(-y_[i] * h);
      z += w_[i];
      loss += w0_[i] * std::exp(-y_[i] * score_[i]);
    }
    for (double& v : w_) v /= z;
    // leaf values lie between 0 and the per-leaf loss minimiser, so the
    // exponential loss cannot grow
    if (loss > loss_.back() * (1.0 + 1e-12))
      throw std::logic_error("GentleBooster: exponential loss increased");
    loss_.push_back(loss);
    trees_.push_back(std::move(tree));
    return trees_.back();
  }

  const std::vector<RegressionTree>& trees() const { return trees_; }
  const std::vector<double>& scores() const { return score_; }
  /// Exponential loss sum(w0 * exp(-y F)) after each round; entry 0 is 1.
  const std::vector<double>& loss_history() const { return loss_; }

  /// Weighted misclassification of sign(F) under the initial weights.
  double training_error() const {
    double e = 0.0;
    for (std::size_t i = 0; i < score_.size(); ++i)
      if ((score_[i] >= 0.0 ? 1 : -1) != y_[i]) e += w0_[i];
    return e;
  }

 private:
  struct Split {
    double gain = 0.0;
    int feature = -1;
    int threshold = 0;
  };

  int grow(RegressionTree& tree, const std::vector<std::uint32_t>& idx, int depth) {
    const int node = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sw = 0.0, swy = 0.0;
    for (std::uint32_t i : idx) {
      sw += w_[i];
      swy += w_[i] * y_[i];
    }
    tree.nodes[node].value = sw > 0.0 ? swy / sw : 0.0;
    if (depth >= max_depth_ || idx.size() < 2 * static_cast<std::size_t>(min_leaf_)) return node;
    const Split s = best_split(idx, sw, swy);
    if (s.feature < 0) return node;
    std::vector<std::uint32_t> l, r;
    const std::uint8_t* col = columns_.data() + static_cast<std::size_t>(s.feature) * x_.rows();
    for (std::uint32_t i : idx) (col[i] <= s.threshold ? l : r).push_back(i);
    tree.nodes[node].feature = s.feature;
    tree.nodes[node].threshold = s.threshold;
    const int a = grow(tree, l, depth + 1);
    tree.nodes[node].left = a;
    const int b = grow(tree, r, depth + 1);
    tree.nodes[node].right = b;
    return node;
  }

  // Reduction of weighted squared error; ties keep the lowest feature,
  // then the lowest threshold.
  Split best_split(const std::vector<std::uint32_t>& idx, double sw, double swy) const {
    const int f = x_.features;
    const std::size_t n = x_.rows();
    const double base = swy * swy / sw;
    std::vector<Split> per(f);
    parallel_for(static_cast<std::size_t>(f), threads_, [&](std::size_t j) {
      const int nb = bins_[j];
      if (nb < 2) return;
      std::vector<double> hw(nb, 0.0), hwy(nb, 0.0);
      std::vector<int> hc(nb, 0);
      const std::uint8_t* col = columns_.data() + j * n;
      for (std::uint32_t i : idx) {
        hw[col[i]] += w_[i];
        hwy[col[i]] += w_[i] * y_[i];
        ++hc[col[i]];
      }
      double lw = 0.0, lwy = 0.0;
      int lc = 0;
      const int total = static_cast<int>(idx.size());
      Split best;
      for (int t = 0; t + 1 < nb; ++t) {
        lw += hw[t];
        lwy += hwy[t];
        lc += hc[t];
        const double rw = sw - lw, rwy = swy - lwy;
        if (hc[t] == 0 || lc < min_leaf_ || total - lc < min_leaf_) continue;
        if (lw <= 0.0 || rw <= sw * 1e-15) continue;
        const double gain = lwy * lwy / lw + rwy * rwy / rw - base;
        if (gain > best.gain) best = {gain, static_cast<int>(j), t};
      }
      per[j] = best;
    });
    Split best;
    const double eps = 1e-12 * sw;
    for (const Split& s : per)
      if (s.feature >= 0 && s.gain > best.gain + eps) best = s;
    return best;
  }

  const SampleMatrix& x_;
  std::vector<int> y_;
  std::vector<double> w0_, w_, score_, loss_;
  int max_depth_;
  int threads_;
  int min_leaf_;
  std::vector<std::uint8_t> columns_;
  std::vector<int> bins_;
  std::vector<RegressionTree> trees_;
};

struct BoostResult {
  std::vector<RegressionTree> trees;
  std::vector<double> loss;  ///< exponential loss after each round
  double training_error = 0.0;
};

inline BoostResult train_gentle_adaboost(const SampleMatrix& x, const std::vector<int>& labels,
                                         const std::vector<double>& weights, int max_depth,
                                         int rounds, int threads = 1, int min_leaf = 1) {
  detail::require(rounds >= 0, "train_gentle_adaboost: rounds must be >= 0");
  GentleBooster b(x, labels, weights, max_depth, threads, min_leaf);
  for (int t = 0; t < rounds; ++t) b.add_round();
  return {b.trees(), b.loss_history(), b.training_error()};
}

}  // namespace mpv
