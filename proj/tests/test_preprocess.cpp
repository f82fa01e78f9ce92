#include <gtest/gtest.h>

#include <set>

#include "ddosguard/preprocess.hpp"
#include "support.hpp"

using namespace ddosguard;

namespace {

void expect_partition(const SplitIndices& s, std::size_t n, double ratio) {
  std::set<std::size_t> all(s.train_idx.begin(), s.train_idx.end());
  for (auto i : s.test_idx) EXPECT_TRUE(all.insert(i).second) << "index " << i << " in both halves";
  EXPECT_EQ(all.size(), n);
  if (!all.empty()) {
    EXPECT_EQ(*all.rbegin(), n - 1);
  }
  EXPECT_EQ(s.train_idx.size(), static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n))));
}

}  // namespace

TEST(TrainTestSplit, TenRows) {
  const auto s = train_test_split(10, 0.8, 42);
  EXPECT_EQ(s.train_idx.size(), 8u);
  EXPECT_EQ(s.test_idx.size(), 2u);
  expect_partition(s, 10, 0.8);
}

TEST(TrainTestSplit, FiveRowsFloorRule) {
  const auto s = train_test_split(5, 0.8, 42);
  EXPECT_EQ(s.train_idx.size(), 4u);
  EXPECT_EQ(s.test_idx.size(), 1u);
}

TEST(TrainTestSplit, Deterministic) {
  const auto a = train_test_split(1000, 0.8, 42);
  const auto b = train_test_split(1000, 0.8, 42);
  EXPECT_EQ(a.train_idx, b.train_idx);
  EXPECT_EQ(a.test_idx, b.test_idx);
  EXPECT_NE(train_test_split(1000, 0.8, 43).train_idx, a.train_idx);
}

TEST(TrainTestSplit, ReferencePermutation) {
  // Fisher-Yates from the top with the documented generator, re-derived here.
  std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Rng rng(42);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  const auto s = train_test_split(10, 0.8, 42);
  EXPECT_EQ(s.train_idx, std::vector<std::size_t>(perm.begin(), perm.begin() + 8));
}

TEST(TrainTestSplit, PartitionPropertyRandomized) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(300);
    const double ratio = 0.05 + 0.9 * rng.uniform();
    const auto s = train_test_split(n, ratio, rng.next());
    expect_partition(s, n, ratio);
  }
}

TEST(TrainTestSplit, RejectsBadArguments) {
  EXPECT_THROW(train_test_split(1, 0.8, 1), InvalidArgument);
  EXPECT_THROW(train_test_split(10, 0.0, 1), InvalidArgument);
  EXPECT_THROW(train_test_split(10, 1.0, 1), InvalidArgument);
}

TEST(StratifiedSplit, ProportionalPerClass) {
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i < 70 ? 0 : (i < 90 ? 1 : 2));
  const auto s = stratified_train_test_split(labels, 0.8, 3);
  expect_partition(s, 100, 0.8);
  std::vector<int> counts(3, 0);
  for (auto i : s.train_idx) ++counts[static_cast<std::size_t>(labels[i])];
  EXPECT_EQ(counts, (std::vector<int>{56, 16, 8}));
}

TEST(Standardizer, ColumnOneTwoThree) {
  const auto s = fit_standardizer(Matrix(3, 1, std::vector<double>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(s.means()[0], 2.0);
  EXPECT_NEAR(s.stds()[0], 0.816497, 1e-6);
  EXPECT_DOUBLE_EQ(s.stds()[0], std::sqrt(2.0 / 3.0));
  const auto z = transform(s, Matrix(3, 1, std::vector<double>{1, 2, 3}));
  EXPECT_NEAR(z(0, 0), -1.224745, 1e-6);
  EXPECT_EQ(z(1, 0), 0.0);
  EXPECT_NEAR(z(2, 0), 1.224745, 1e-6);
}

TEST(Standardizer, ConstantColumn) {
  const auto s = fit_standardizer(Matrix(3, 1, std::vector<double>{5, 5, 5}));
  EXPECT_EQ(s.means()[0], 5.0);
  EXPECT_EQ(s.stds()[0], 0.0);
  EXPECT_TRUE(s.is_constant(0));
  const auto z = transform(s, Matrix(2, 1, std::vector<double>{5, 123}));
  EXPECT_EQ(z(0, 0), 0.0);
  EXPECT_EQ(z(1, 0), 0.0);
}

TEST(Standardizer, ConstantColumnOfAwkwardValueHasZeroStd) {
  const auto s = fit_standardizer(Matrix(7, 1, 0.1));
  EXPECT_EQ(s.stds()[0], 0.0);
}

TEST(Standardizer, ColumnOrderAndShape) {
  const auto s = fit_standardizer(Matrix(2, 2, std::vector<double>{1, 10, 3, 30}));
  EXPECT_EQ(s.dim(), 2u);
  EXPECT_EQ(s.means(), (std::vector<double>{2, 20}));
  EXPECT_EQ(s.stds(), (std::vector<double>{1, 10}));
  EXPECT_EQ(s.fitted_on(), 2u);
}

TEST(Standardizer, TrainingMatrixBecomesZeroMeanUnitStd) {
  const Matrix X = fixture::random_matrix(500, 6, 9, 7.0);
  const auto z = transform(fit_standardizer(X), X);
  for (std::size_t j = 0; j < 6; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 500; ++i) m += z(i, j);
    m /= 500;
    for (std::size_t i = 0; i < 500; ++i) v += (z(i, j) - m) * (z(i, j) - m);
    EXPECT_LT(std::abs(m), 1e-9);
    EXPECT_LT(std::abs(std::sqrt(v / 500) - 1.0), 1e-9);
  }
}

TEST(Standardizer, TransformDoesNotRefit) {
  const Matrix train = fixture::random_matrix(50, 3, 1);
  const auto s = fit_standardizer(train);
  const auto copy = s;
  (void)transform(s, fixture::random_matrix(80, 3, 2, 100.0));
  EXPECT_EQ(s, copy);
}

TEST(Standardizer, TransformIsAffine) {
  const Matrix X = fixture::random_matrix(40, 3, 4);
  const auto s = fit_standardizer(X);
  Matrix Y = X;
  const double a = 2.5, b = -1.75;
  for (auto& v : Y.data()) v = a * v + b;
  const auto zx = transform(s, X), zy = transform(s, Y);
  // z(a x + b) = a z(x) + (a - 1) mean / std + b / std
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double expected = a * zx(i, j) + ((a - 1.0) * s.means()[j] + b) / s.stds()[j];
      EXPECT_NEAR(zy(i, j), expected, 1e-9);
    }
  }
}

TEST(Standardizer, Errors) {
  EXPECT_THROW(fit_standardizer(Matrix()), InvalidArgument);
  const auto s = fit_standardizer(Matrix(2, 2, 1.0));
  EXPECT_THROW(transform(s, Matrix(2, 3)), InvalidArgument);
}

TEST(ReshapeForConv, LayoutAndRoundTrip) {
  const Matrix X(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  const auto b = reshape_for_conv(X, 3);
  EXPECT_EQ(b.count(), 2u);
  EXPECT_EQ(b.length(), 3u);
  EXPECT_EQ(b.channels(), 1u);
  EXPECT_EQ(b.sequence(1)[0], 4.0);
  EXPECT_EQ(flatten(b), X);
}

TEST(ReshapeForConv, TooFewFeatures) {
  EXPECT_THROW(reshape_for_conv(Matrix(4, 1), 3), InvalidArgument);
}
