#pragma once

// Independent reference implementations used as test oracles, plus small
// fixtures. Nothing here calls the library routine it is meant to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "ddosguard/ddosguard.hpp"

namespace oracle {

/// Exact non-negative rational with 64-bit parts, always reduced.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Fraction(std::int64_t n = 0, std::int64_t d = 1) : num(n), den(d) {
    const auto g = std::gcd(num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
  friend Fraction operator+(const Fraction& a, const Fraction& b) {
    const auto l = std::lcm(a.den, b.den);
    return {a.num * (l / a.den) + b.num * (l / b.den), l};
  }
  friend Fraction operator*(const Fraction& a, const Fraction& b) { return {a.num * b.num, a.den * b.den}; }
  friend bool operator<(const Fraction& a, const Fraction& b) {
    return a.num * b.den < b.num * a.den;
  }
  friend bool operator==(const Fraction& a, const Fraction& b) { return a.num == b.num && a.den == b.den; }
};

/// Gini impurity of a count vector as an exact fraction: 1 - sum (c/n)^2.
inline Fraction gini_exact(const std::vector<std::int64_t>& counts) {
  std::int64_t n = 0, sq = 0;
  for (auto c : counts) {
    n += c;
    sq += c * c;
  }
  return {n * n - sq, n * n};
}

struct SplitAnswer {
  std::size_t feature;
  double threshold;
  Fraction impurity;
};

/// Exhaustive split search: every candidate feature, every midpoint between
/// consecutive distinct values, children counted directly. Smallest weighted
/// impurity wins; ties go to the smaller threshold, then the smaller feature.
inline std::optional<SplitAnswer> exhaustive_split(const ddosguard::Matrix& X, const std::vector<int>& y,
                                                   const std::vector<std::size_t>& rows,
                                                   const std::vector<std::size_t>& features, std::size_t C) {
  const auto n = static_cast<std::int64_t>(rows.size());
  if (n < 2) return std::nullopt;
  std::vector<std::int64_t> parent(C, 0);
  for (auto r : rows) ++parent[static_cast<std::size_t>(y[r])];
  const Fraction parent_gini = gini_exact(parent);
  std::optional<SplitAnswer> best;
  for (auto f : features) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(X(r, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
      const double lo = values[k], hi = values[k + 1];
      double t = lo + (hi - lo) / 2.0;
      if (!(t < hi)) t = lo;
      std::vector<std::int64_t> left(C, 0), right(C, 0);
      std::int64_t nl = 0, nr = 0;
      for (auto r : rows) {
        if (X(r, f) <= t) {
          ++left[static_cast<std::size_t>(y[r])];
          ++nl;
        } else {
          ++right[static_cast<std::size_t>(y[r])];
          ++nr;
        }
      }
      const Fraction w = Fraction(nl, n) * gini_exact(left) + Fraction(nr, n) * gini_exact(right);
      bool take = !best;
      if (!take) {
        take = w < best->impurity ||
               (w == best->impurity && (t < best->threshold || (t == best->threshold && f < best->feature)));
      }
      if (take) best = SplitAnswer{f, t, w};
    }
  }
  if (!best || !(best->impurity < parent_gini)) return std::nullopt;
  return best;
}

/// Conv (valid cross-correlation) + ReLU + mean, written as plain loops over
/// raw arrays: sample i, filter f, position p, tap j.
inline std::vector<std::vector<double>> conv_relu_gap(const std::vector<std::vector<double>>& samples,
                                                      const std::vector<std::vector<double>>& W,
                                                      const std::vector<double>& b) {
  std::vector<std::vector<double>> out;
  for (const auto& x : samples) {
    std::vector<double> feats;
    for (std::size_t f = 0; f < W.size(); ++f) {
      const std::size_t N = W[f].size();
      const std::size_t positions = x.size() - N + 1;
      double total = 0.0;
      for (std::size_t p = 0; p < positions; ++p) {
        double v = b[f];
        for (std::size_t j = 0; j < N; ++j) v += x[p + j] * W[f][j];
        total += v > 0.0 ? v : 0.0;
      }
      feats.push_back(total / static_cast<double>(positions));
    }
    out.push_back(feats);
  }
  return out;
}

struct PerClass {
  double precision, recall, f1;
  std::uint64_t support;
};

/// Metrics counted sample by sample, without building a matrix.
inline std::vector<PerClass> per_sample_metrics(const std::vector<int>& truth, const std::vector<int>& pred,
                                                std::size_t C, double* accuracy) {
  std::vector<PerClass> out;
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  *accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  for (std::size_t c = 0; c < C; ++c) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == static_cast<int>(c), p = pred[i] == static_cast<int>(c);
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    const double pre = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = pre + rec > 0.0 ? 2.0 * pre * rec / (pre + rec) : 0.0;
    out.push_back({pre, rec, f1, tp + fn});
  }
  return out;
}

}  // namespace oracle

namespace fixture {

/// Small synthetic table plus a light configuration that trains in seconds.
inline ddosguard::HybridConfig light_config() {
  ddosguard::HybridConfig c;
  c.extractor.filters = 16;
  c.forest.tree_count = 15;
  c.mlp.hidden = {24};
  c.mlp.epochs = 30;
  c.mlp.learning_rate = 0.05;
  c.mlp.batch_size = 32;
  c.stack.folds = 3;
  c.stack.meta_epochs = 200;
  return c;
}

inline ddosguard::FlowTable blobs(std::size_t n = 400, std::size_t d = 8, std::size_t C = 3, std::uint64_t seed = 7) {
  ddosguard::SynthSpec s;
  s.n = n;
  s.d = d;
  s.classes = C;
  s.seed = seed;
  return ddosguard::synth_table(s);
}

inline ddosguard::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  ddosguard::Rng rng(seed);
  ddosguard::Matrix m(rows, cols);
  for (auto& v : m.data()) v = scale * rng.normal();
  return m;
}

}  // namespace fixture
