#pragma once

// Train/test splitting, z-score standardization, and the sequence layout the
// conv extractor consumes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ddosguard/common.hpp"

namespace ddosguard {

struct SplitIndices {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  std::uint64_t seed = 0;
  double ratio = 0.0;
};

inline std::size_t train_size_for(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
}

namespace detail {
inline void check_split_args(std::size_t n, double ratio) {
  if (n < 2) throw InvalidArgument("split: need at least 2 rows");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split: ratio must lie in (0, 1)");
}
}  // namespace detail

/// Fisher-Yates permutation of 0..n-1 (Rng seeded with `seed`); the first
/// floor(ratio*n) entries are the training rows.
inline SplitIndices train_test_split(std::size_t n, double ratio, std::uint64_t seed) {
  detail::check_split_args(n, ratio);
  auto perm = iota_indices(n);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  const auto cut = static_cast<std::ptrdiff_t>(train_size_for(n, ratio));
  return {{perm.begin(), perm.begin() + cut}, {perm.begin() + cut, perm.end()}, seed, ratio};
}

/// Same total train size as train_test_split, but each class contributes its
/// proportional share (largest remainder, ties to the smaller class id).
/// Within a class, rows are taken in the order of the seeded permutation.
inline SplitIndices stratified_train_test_split(std::span<const int> labels, double ratio, std::uint64_t seed) {
  const std::size_t n = labels.size();
  detail::check_split_args(n, ratio);
  const int C = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> counts(static_cast<std::size_t>(C), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];

  const std::size_t target = train_size_for(n, ratio);
  std::vector<std::size_t> quota(counts.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = ratio * static_cast<double>(counts[c]);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::stable_sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < target; i = (i + 1) % remainders.size()) {
    const auto c = remainders[i].second;
    if (quota[c] < counts[c]) {
      ++quota[c];
      ++assigned;
    }
  }

  auto perm = iota_indices(n);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  SplitIndices split{{}, {}, seed, ratio};
  std::vector<std::size_t> taken(counts.size(), 0);
  for (auto i : perm) {
    const auto c = static_cast<std::size_t>(labels[i]);
    if (taken[c] < quota[c]) {
      ++taken[c];
      split.train_idx.push_back(i);
    } else {
      split.test_idx.push_back(i);
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Standardizer
// ---------------------------------------------------------------------------

/// Per-column mean and population standard deviation, frozen at fit time.
class Standardizer {
 public:
  Standardizer(std::vector<double> means, std::vector<double> stds, std::size_t fitted_on)
      : means_(std::move(means)), stds_(std::move(stds)), fitted_on_(fitted_on) {
    if (means_.size() != stds_.size()) throw InvalidArgument("standardizer: means/stds length mismatch");
    for (double s : stds_) {
      if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("standardizer: invalid std");
    }
  }

  std::size_t dim() const noexcept { return means_.size(); }
  const std::vector<double>& means() const noexcept { return means_; }
  const std::vector<double>& stds() const noexcept { return stds_; }
  std::size_t fitted_on() const noexcept { return fitted_on_; }
  bool is_constant(std::size_t col) const { return stds_.at(col) == 0.0; }

  /// z-score of one row into `out` (same length).
  void apply(std::span<const double> row, std::span<double> out) const {
    if (row.size() != dim() || out.size() != dim()) throw InvalidArgument("standardizer: dimension mismatch");
    for (std::size_t j = 0; j < row.size(); ++j) {
      out[j] = stds_[j] == 0.0 ? 0.0 : (row[j] - means_[j]) / stds_[j];
    }
  }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;

 private:
  std::vector<double> means_;
  std::vector<double> stds_;
  std::size_t fitted_on_;
};

inline Standardizer fit_standardizer(const Matrix& train) {
  if (train.rows() == 0 || train.cols() == 0) throw InvalidArgument("standardizer: empty matrix");
  const std::size_t n = train.rows();
  const std::size_t d = train.cols();
  std::vector<double> means(d, 0.0), stds(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double first = train(0, j);
    bool constant = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum += train(i, j);
      constant = constant && train(i, j) == first;
    }
    if (constant) {
      // Exactly zero spread; summation rounding must not fake a tiny std.
      means[j] = first;
      continue;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dev = train(i, j) - mean;
      ss += dev * dev;
    }
    means[j] = mean;
    stds[j] = std::sqrt(ss / static_cast<double>(n));
  }
  return {std::move(means), std::move(stds), n};
}

inline Matrix transform(const Standardizer& s, const Matrix& features) {
  if (features.cols() != s.dim()) throw InvalidArgument("transform: column count does not match fit");
  Matrix out(features.rows(), features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i) s.apply(features.row(i), out.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// conv layout
// ---------------------------------------------------------------------------

/// n single-channel sequences of equal length, stored contiguously.
class SequenceBatch {
 public:
  SequenceBatch() = default;
  SequenceBatch(std::size_t count, std::size_t length, std::vector<double> values)
      : count_(count), length_(length), values_(std::move(values)) {
    if (values_.size() != count_ * length_) throw InvalidArgument("sequence batch: size mismatch");
  }

  std::size_t count() const noexcept { return count_; }
  std::size_t length() const noexcept { return length_; }
  static constexpr std::size_t channels() noexcept { return 1; }

  std::span<const double> sequence(std::size_t i) const noexcept {
    return {values_.data() + i * length_, length_};
  }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::size_t count_ = 0;
  std::size_t length_ = 0;
  std::vector<double> values_;
};

/// Each row becomes one length-d sequence; values are copied unchanged.
inline SequenceBatch reshape_for_conv(const Matrix& features, std::size_t kernel_size) {
  if (features.cols() < kernel_size) {
    throw InvalidArgument("reshape: feature count " + std::to_string(features.cols()) +
                          " is smaller than kernel size " + std::to_string(kernel_size));
  }
  return {features.rows(), features.cols(), features.data()};
}

inline Matrix flatten(const SequenceBatch& batch) {
  return {batch.count(), batch.length(), batch.values()};
}

}  // namespace ddosguard
