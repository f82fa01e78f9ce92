#pragma once

// k-fold partitions shared by stacking and cross-validation.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddosguard/common.hpp"

namespace ddosguard {

/// Fold id per row. Stratified dealing: classes are visited in id order; each
/// class's row indices (ascending) are shuffled with one Rng(seed) stream and
/// dealt round-robin, continuing the dealer position from the previous class.
/// Per-class counts therefore differ by at most one across folds, and the
/// assignment depends only on the label vector and the seed.
inline std::vector<std::size_t> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("kfold: k must be >= 2");
  if (labels.size() < k) throw InvalidArgument("kfold: fewer rows than folds");
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw InvalidArgument("kfold: negative label");
    max_label = std::max(max_label, y);
  }
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (!members[c].empty() && members[c].size() < k) {
      throw InvalidArgument("kfold: class " + std::to_string(c) + " has " + std::to_string(members[c].size()) +
                            " rows, fewer than k=" + std::to_string(k));
    }
  }
  Rng rng(seed);
  std::vector<std::size_t> fold(labels.size());
  std::size_t dealer = 0;
  for (auto& m : members) {
    rng.shuffle(std::span<std::size_t>(m));
    for (auto row : m) fold[row] = dealer++ % k;
  }
  return fold;
}

/// Unstratified variant: one seeded shuffle of all rows, dealt round-robin.
inline std::vector<std::size_t> plain_kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("kfold: k must be >= 2");
  if (n < k) throw InvalidArgument("kfold: fewer rows than folds");
  auto perm = iota_indices(n);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::size_t> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = i % k;
  return fold;
}

struct FoldRows {
  std::vector<std::size_t> train;
  std::vector<std::size_t> held_out;
};

inline FoldRows fold_rows(std::span<const std::size_t> fold_of_row, std::size_t fold) {
  FoldRows out;
  for (std::size_t i = 0; i < fold_of_row.size(); ++i) {
    (fold_of_row[i] == fold ? out.held_out : out.train).push_back(i);
  }
  return out;
}

/// Passed to per-fold trainers. train_rows index the caller's full matrix.
struct FoldContext {
  std::size_t fold = 0;
  std::span<const std::size_t> train_rows;
};

}  // namespace ddosguard
