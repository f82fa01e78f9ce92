#pragma once

// Random forest of CART classification trees: Gini impurity splits on
// bootstrap samples, hard majority vote across trees.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ddosguard/common.hpp"

namespace ddosguard {

/// 1 - sum p_i^2 over class proportions.
inline double gini(std::span<const double> proportions) {
  if (proportions.empty()) throw InvalidArgument("gini: no classes");
  double total = 0.0, sq = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw InvalidArgument("gini: negative proportion");
    total += p;
    sq += p * p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("gini: proportions do not sum to 1");
  return 1.0 - sq;
}

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double weighted_impurity = 0.0;
};

namespace detail {

__extension__ typedef __int128 wide_int;

// Weighted child Gini is (n - SL/nL - SR/nR) / n with S = sum of squared class
// counts, so minimizing impurity maximizes SL/nL + SR/nR. Candidates are
// compared as exact rationals to keep tie-breaks platform independent.
struct SplitScore {
  wide_int num = 0;  // SL*nR + SR*nL
  wide_int den = 1;  // nL*nR

  friend int compare(const SplitScore& a, const SplitScore& b) {
    const wide_int lhs = a.num * b.den;
    const wide_int rhs = b.num * a.den;
    return lhs > rhs ? 1 : (lhs < rhs ? -1 : 0);
  }
};

inline double split_midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

}  // namespace detail

/// Best Gini split of `rows` (duplicates allowed: they act as weights) over
/// the candidate features. Thresholds are midpoints between consecutive
/// distinct values and a row goes left when x <= threshold. Ties prefer the
/// smaller threshold, then the smaller feature index. Returns nullopt when no
/// split strictly lowers the node impurity.
inline std::optional<Split> best_split(const Matrix& X, std::span<const int> y, std::span<const std::size_t> rows,
                                       std::span<const std::size_t> candidate_features, std::size_t class_count) {
  const std::size_t n = rows.size();
  if (n < 2) return std::nullopt;

  std::vector<std::int64_t> node_counts(class_count, 0);
  for (auto r : rows) ++node_counts[static_cast<std::size_t>(y[r])];
  std::int64_t parent_sq = 0;
  for (auto c : node_counts) parent_sq += c * c;
  if (parent_sq == static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n)) return std::nullopt;  // pure

  std::optional<Split> best;
  detail::SplitScore best_score;
  std::vector<std::pair<double, int>> column(n);
  std::vector<std::int64_t> left(class_count), right(class_count);

  for (auto feature : candidate_features) {
    for (std::size_t i = 0; i < n; ++i) column[i] = {X(rows[i], feature), y[rows[i]]};
    std::sort(column.begin(), column.end());
    std::fill(left.begin(), left.end(), 0);
    right = node_counts;
    std::int64_t sl = 0, sr = parent_sq;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto c = static_cast<std::size_t>(column[i].second);
      sl += 2 * left[c] + 1;
      ++left[c];
      sr -= 2 * right[c] - 1;
      --right[c];
      if (!(column[i].first < column[i + 1].first)) continue;
      const auto nl = static_cast<std::int64_t>(i + 1);
      const auto nr = static_cast<std::int64_t>(n) - nl;
      const detail::SplitScore score{static_cast<detail::wide_int>(sl) * nr + static_cast<detail::wide_int>(sr) * nl,
                                     static_cast<detail::wide_int>(nl) * nr};
      const double threshold = detail::split_midpoint(column[i].first, column[i + 1].first);
      bool take = !best;
      if (!take) {
        const int cmp = compare(score, best_score);
        take = cmp > 0 || (cmp == 0 && (threshold < best->threshold ||
                                        (threshold == best->threshold && feature < best->feature)));
      }
      if (take) {
        const double nd = static_cast<double>(n);
        best = Split{feature, threshold,
                     (nd - static_cast<double>(sl) / static_cast<double>(nl) -
                      static_cast<double>(sr) / static_cast<double>(nr)) / nd};
        best_score = score;
      }
    }
  }
  if (!best) return std::nullopt;
  const detail::SplitScore parent{parent_sq, static_cast<detail::wide_int>(n)};
  if (compare(best_score, parent) <= 0) return std::nullopt;
  return best;
}

// ---------------------------------------------------------------------------
// trees
// ---------------------------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int class_id = 0;  // majority class of the node's training rows

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  /// counts holds class_count entries per node, node-major.
  DecisionTree(std::vector<TreeNode> nodes, std::vector<std::uint32_t> counts, std::size_t class_count)
      : nodes_(std::move(nodes)), counts_(std::move(counts)), class_count_(class_count) {
    if (nodes_.empty() || counts_.size() != nodes_.size() * class_count_) {
      throw InvalidArgument("tree: malformed node arrays");
    }
    const auto size = static_cast<int>(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& nd = nodes_[i];
      if (nd.class_id < 0 || static_cast<std::size_t>(nd.class_id) >= class_count_) {
        throw InvalidArgument("tree: class id out of range");
      }
      if (nd.is_leaf()) continue;
      if (nd.left <= static_cast<int>(i) || nd.right <= static_cast<int>(i) || nd.left >= size ||
          nd.right >= size || !std::isfinite(nd.threshold)) {
        throw InvalidArgument("tree: malformed internal node");
      }
    }
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::vector<std::uint32_t>& counts() const noexcept { return counts_; }
  std::size_t class_count() const noexcept { return class_count_; }

  std::span<const std::uint32_t> node_counts(std::size_t node) const noexcept {
    return {counts_.data() + node * class_count_, class_count_};
  }

  int predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& nd = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    }
    return nodes_[i].class_id;
  }

  /// Root has depth 0.
  std::size_t depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      deepest = std::max(deepest, d);
      if (!nodes_[i].is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].right), d + 1);
      }
    }
    return deepest;
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> counts_;
  std::size_t class_count_ = 0;
};

struct ForestConfig {
  std::size_t tree_count = 100;
  std::optional<std::size_t> max_depth;  // nullopt: grow until pure
  std::size_t min_samples_split = 2;
  std::size_t features_per_split = 0;  // 0: ceil(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 42;

  std::size_t resolved_features(std::size_t d) const {
    if (features_per_split != 0) return features_per_split;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d)))));
  }

  void validate(std::size_t d) const {
    if (tree_count < 1) throw InvalidArgument("forest: tree_count must be >= 1");
    if (max_depth && *max_depth < 1) throw InvalidArgument("forest: max_depth must be >= 1");
    if (min_samples_split < 2) throw InvalidArgument("forest: min_samples_split must be >= 2");
    const auto m = resolved_features(d);
    if (m < 1 || m > d) throw InvalidArgument("forest: features_per_split must lie in [1, d]");
  }

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const Matrix& X, std::span<const int> y, std::size_t class_count, const ForestConfig& cfg, Rng& rng)
      : X_(X), y_(y), C_(class_count), cfg_(cfg), rng_(rng), m_(cfg.resolved_features(X.cols())),
        feature_pool_(iota_indices(X.cols())) {}

  DecisionTree grow(std::vector<std::size_t> rows) {
    build(rows, 0);
    return {std::move(nodes_), std::move(counts_), C_};
  }

 private:
  int build(std::span<std::size_t> rows, std::size_t depth) {
    const auto id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t base = counts_.size();
    counts_.resize(base + C_, 0);
    for (auto r : rows) ++counts_[base + static_cast<std::size_t>(y_[r])];
    nodes_.back().class_id =
        static_cast<int>(argmax(std::span<const std::uint32_t>(counts_.data() + base, C_)));

    const bool depth_capped = cfg_.max_depth && depth >= *cfg_.max_depth;
    if (depth_capped || rows.size() < cfg_.min_samples_split) return id;

    const auto split = best_split(X_, y_, rows, draw_features(), C_);
    if (!split) return id;

    auto mid = std::partition(rows.begin(), rows.end(),
                              [&](std::size_t r) { return X_(r, split->feature) <= split->threshold; });
    const auto n_left = static_cast<std::size_t>(mid - rows.begin());
    const int left = build(rows.subspan(0, n_left), depth + 1);
    const int right = build(rows.subspan(n_left), depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(split->feature);
    node.threshold = split->threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  // m features without replacement (partial Fisher-Yates), ascending.
  std::vector<std::size_t> draw_features() {
    const std::size_t d = feature_pool_.size();
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t j = i + rng_.below(d - i);
      std::swap(feature_pool_[i], feature_pool_[j]);
    }
    std::vector<std::size_t> chosen(feature_pool_.begin(), feature_pool_.begin() + static_cast<std::ptrdiff_t>(m_));
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  const Matrix& X_;
  std::span<const int> y_;
  std::size_t C_;
  const ForestConfig& cfg_;
  Rng& rng_;
  std::size_t m_;
  std::vector<std::size_t> feature_pool_;
  std::vector<TreeNode> nodes_;
  std::vector<std::uint32_t> counts_;
};

}  // namespace detail

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<DecisionTree> trees, ForestConfig config, std::size_t class_count,
              std::size_t feature_count)
      : trees_(std::move(trees)), config_(config), class_count_(class_count), feature_count_(feature_count) {
    if (trees_.size() != config_.tree_count) throw InvalidArgument("forest: tree count does not match config");
    for (const auto& t : trees_) {
      if (t.class_count() != class_count_) throw InvalidArgument("forest: tree class count mismatch");
      for (const auto& nd : t.nodes()) {
        if (!nd.is_leaf() && static_cast<std::size_t>(nd.feature) >= feature_count_) {
          throw InvalidArgument("forest: split feature out of range");
        }
      }
    }
  }

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const ForestConfig& config() const noexcept { return config_; }
  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t feature_count() const noexcept { return feature_count_; }

  friend bool operator==(const ForestModel&, const ForestModel&) = default;

 private:
  std::vector<DecisionTree> trees_;
  ForestConfig config_;
  std::size_t class_count_ = 0;
  std::size_t feature_count_ = 0;
};

/// Tree t draws its bootstrap sample and per-node feature subsets from
/// Rng(derive_seed(config.seed, t)), so trees can be grown in any order.
inline ForestModel fit_forest(const Matrix& X, std::span<const int> y, std::size_t class_count,
                              const ForestConfig& config) {
  const std::size_t n = X.rows();
  if (n < 2) throw InvalidArgument("forest: need at least 2 rows");
  if (y.size() != n) throw InvalidArgument("forest: label count does not match rows");
  config.validate(X.cols());
  std::vector<bool> present(class_count, false);
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_count) throw InvalidArgument("forest: label out of range");
    present[static_cast<std::size_t>(label)] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) throw InvalidArgument("forest: need >= 2 classes");

  std::vector<DecisionTree> trees(config.tree_count);
  parallel_for(config.tree_count, [&](std::size_t t) {
    Rng rng(derive_seed(config.seed, t));
    std::vector<std::size_t> rows(n);
    if (config.bootstrap) {
      for (auto& r : rows) r = rng.below(n);
    } else {
      rows = iota_indices(n);
    }
    trees[t] = detail::TreeGrower(X, y, class_count, config, rng).grow(std::move(rows));
  });
  return {std::move(trees), config, class_count, X.cols()};
}

inline std::vector<std::size_t> forest_votes(const ForestModel& model, std::span<const double> x) {
  if (x.size() != model.feature_count()) throw InvalidArgument("forest: feature dimension mismatch");
  std::vector<std::size_t> votes(model.class_count(), 0);
  for (const auto& t : model.trees()) ++votes[static_cast<std::size_t>(t.predict(x))];
  return votes;
}

/// Majority vote; ties go to the smallest class id.
inline std::vector<int> predict_forest(const ForestModel& model, const Matrix& X) {
  if (X.cols() != model.feature_count()) throw InvalidArgument("forest: feature dimension mismatch");
  std::vector<int> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto votes = forest_votes(model, X.row(i));
    out[i] = static_cast<int>(argmax(std::span<const std::size_t>(votes)));
  }
  return out;
}

/// Fraction of trees voting for each class.
inline Matrix predict_proba_forest(const ForestModel& model, const Matrix& X) {
  if (X.cols() != model.feature_count()) throw InvalidArgument("forest: feature dimension mismatch");
  Matrix out(X.rows(), model.class_count());
  const auto trees = static_cast<double>(model.trees().size());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto votes = forest_votes(model, X.row(i));
    for (std::size_t c = 0; c < votes.size(); ++c) out(i, c) = static_cast<double>(votes[c]) / trees;
  }
  return out;
}

}  // namespace ddosguard
