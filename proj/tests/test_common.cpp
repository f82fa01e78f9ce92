#include <gtest/gtest.h>

#include <atomic>
#include <set>

#include "ddosguard/common.hpp"

using namespace ddosguard;

TEST(Matrix, ShapeAndAccess) {
  Matrix m(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.row(1)[0], 4.0);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), InvalidArgument);
}

TEST(Matrix, SelectRowsAndConcat) {
  Matrix m(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> idx{2, 0, 2};
  const Matrix s = m.select_rows(idx);
  EXPECT_EQ(s, Matrix(3, 2, std::vector<double>{5, 6, 1, 2, 5, 6}));

  const Matrix blocks[] = {Matrix(2, 1, std::vector<double>{1, 2}), Matrix(2, 2, std::vector<double>{3, 4, 5, 6})};
  EXPECT_EQ(hconcat(blocks), Matrix(2, 3, std::vector<double>{1, 3, 4, 2, 5, 6}));
  const Matrix bad[] = {Matrix(2, 1), Matrix(3, 1)};
  EXPECT_THROW(hconcat(bad), InvalidArgument);
}

TEST(Argmax, TiesGoToSmallestIndex) {
  const std::vector<double> v{0.2, 0.5, 0.5, 0.1};
  EXPECT_EQ(argmax<double>(v), 1u);
  const std::vector<double> flat{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(argmax<double>(flat), 0u);
}

TEST(Rng, SplitMixReferenceValue) {
  // First output of the reference SplitMix64 generator seeded with 0.
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, XorshiftStarStepMatchesHandComputation) {
  Rng rng(0);
  std::uint64_t s = splitmix64(0);
  s ^= s >> 12;
  s ^= s << 25;
  s ^= s >> 27;
  EXPECT_EQ(rng.next(), s * 0x2545F4914F6CDD1DULL);
}

TEST(Rng, DeterministicAndSeedSensitive) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng rng(5);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, UniformAndNormalMoments) {
  Rng rng(11);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(3);
  auto v = iota_indices(50);
  rng.shuffle(std::span<std::size_t>(v));
  EXPECT_NE(v, iota_indices(50));
  std::sort(v.begin(), v.end());
  EXPECT_EQ(v, iota_indices(50));
}

TEST(DeriveSeed, DistinctPerIndex) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(42, i));
  EXPECT_EQ(seeds.size(), 1000u);
  EXPECT_EQ(derive_seed(42, 3), derive_seed(42, 3));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; }, 4);
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(
                   100,
                   [](std::size_t i) {
                     if (i == 37) throw InvalidArgument("boom");
                   },
                   4),
               InvalidArgument);
}
