#include <gtest/gtest.h>

#include "ddosguard/cnn_extractor.hpp"
#include "support.hpp"

using namespace ddosguard;

TEST(InitExtractor, DeterministicShapeAndRange) {
  const auto a = init_extractor(42, 64, 3);
  const auto b = init_extractor(42, 64, 3);
  EXPECT_EQ(a.weights(), b.weights());
  EXPECT_EQ(a.weights().size(), 64u * 3u);
  EXPECT_EQ(a.biases().size(), 64u);
  for (double bias : a.biases()) EXPECT_EQ(bias, 0.0);
  for (double w : a.weights()) EXPECT_LE(std::abs(w), std::sqrt(1.0 / 3.0));
  EXPECT_NE(init_extractor(43, 64, 3).weights(), a.weights());
  EXPECT_EQ(a.init_seed(), 42u);
}

TEST(InitExtractor, RejectsEmptyShapes) {
  EXPECT_THROW(init_extractor(1, 0, 3), InvalidArgument);
  EXPECT_THROW(init_extractor(1, 4, 0), InvalidArgument);
  EXPECT_THROW(ConvExtractor(2, 3, std::vector<double>(5), std::vector<double>(2), 0), InvalidArgument);
}

TEST(Conv1d, WorkedExample) {
  const std::vector<double> x{3, 1, 4, 1, 5}, w{1, 0, -1};
  EXPECT_EQ(conv1d_valid(x, w, 0.0), (std::vector<double>{-1, 0, -1}));
}

TEST(Conv1d, IdentityKernel) {
  const std::vector<double> x{0.5, -2, 7};
  const std::vector<double> w{1};
  EXPECT_EQ(conv1d_valid(x, w, 0.0), x);
}

TEST(Conv1d, BiasIsAdded) {
  const std::vector<double> x{1, 1, 1}, w{1, 1, 1};
  EXPECT_EQ(conv1d_valid(x, w, 0.5), (std::vector<double>{3.5}));
}

TEST(Conv1d, OutputLengthAndErrors) {
  Rng rng(2);
  for (std::size_t L = 1; L < 12; ++L) {
    for (std::size_t N = 1; N <= L; ++N) {
      std::vector<double> x(L), w(N);
      for (auto& v : x) v = rng.normal();
      for (auto& v : w) v = rng.normal();
      EXPECT_EQ(conv1d_valid(x, w, 0.0).size(), L - N + 1);
    }
  }
  const std::vector<double> x{1, 2}, w{1, 2, 3};
  EXPECT_THROW(conv1d_valid(x, w, 0.0), InvalidArgument);
}

TEST(Conv1d, LinearWithoutBias) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(9), w(3);
    for (auto& v : x) v = rng.normal();
    for (auto& v : w) v = rng.normal();
    const double alpha = rng.uniform(-5, 5);
    std::vector<double> ax(x);
    for (auto& v : ax) v *= alpha;
    const auto y = conv1d_valid(x, w, 0.0), ay = conv1d_valid(ax, w, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      EXPECT_NEAR(ay[i], alpha * y[i], 1e-12 * std::max(1.0, std::abs(ay[i])));
    }
  }
}

TEST(Relu, DefinitionAndIdempotence) {
  const std::vector<double> v{-1, 0, 2};
  EXPECT_EQ(relu(v), (std::vector<double>{0, 0, 2}));
  const std::vector<double> pos{0, 1.5, 3};
  EXPECT_EQ(relu(pos), pos);
  Rng rng(4);
  std::vector<double> r(50);
  for (auto& x : r) x = rng.normal();
  EXPECT_EQ(relu(relu(r)), relu(r));
}

TEST(GlobalAvgPool, MeansInFilterOrder) {
  const std::vector<std::vector<double>> seqs{{2, 4, 6}, {7, 7, 7, 7}, {-1, 1}};
  EXPECT_EQ(global_avg_pool(seqs), (std::vector<double>{4, 7, 0}));
  const std::vector<std::vector<double>> empty{{}};
  EXPECT_THROW(global_avg_pool(empty), InvalidArgument);
}

TEST(ExtractFeatures, IdentityFilterGivesRowMean) {
  const ConvExtractor ex(1, 1, {1.0}, {0.0}, 0);
  const Matrix X(1, 4, std::vector<double>{1, 2, 3, 6});
  const auto f = extract_features(ex, reshape_for_conv(X, 1));
  EXPECT_EQ(f(0, 0), 3.0);
}

TEST(ExtractFeatures, EmptyBatch) {
  const auto ex = init_extractor(1, 5, 3);
  const auto f = extract_features(ex, SequenceBatch(0, 8, {}));
  EXPECT_EQ(f.rows(), 0u);
  EXPECT_EQ(f.cols(), 5u);
}

TEST(ExtractFeatures, IdenticalRowsIdenticalFeatures) {
  const auto ex = init_extractor(9, 8, 3);
  Matrix X = fixture::random_matrix(2, 10, 1);
  std::copy(X.row(0).begin(), X.row(0).end(), X.row(1).begin());
  const auto f = extract_features(ex, reshape_for_conv(X, 3));
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(f(0, j), f(1, j));
}

TEST(ExtractFeatures, MatchesTripleLoopOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> samples(5, std::vector<double>(8));
    for (auto& s : samples)
      for (auto& v : s) v = rng.normal();
    std::vector<std::vector<double>> W(2, std::vector<double>(3));
    for (auto& k : W)
      for (auto& v : k) v = rng.normal();
    const std::vector<double> b{rng.normal(), rng.normal()};

    std::vector<double> flat_x, flat_w;
    for (const auto& s : samples) flat_x.insert(flat_x.end(), s.begin(), s.end());
    for (const auto& k : W) flat_w.insert(flat_w.end(), k.begin(), k.end());
    const ConvExtractor ex(2, 3, flat_w, b, 0);
    const auto got = extract_features(ex, SequenceBatch(5, 8, flat_x));
    const auto want = oracle::conv_relu_gap(samples, W, b);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t f = 0; f < 2; ++f) EXPECT_NEAR(got(i, f), want[i][f], 1e-12);
    }
  }
}

TEST(ExtractFeatures, FrozenUnderDownstreamUse) {
  const auto ex = init_extractor(5, 4, 3);
  const Matrix X = fixture::random_matrix(20, 6, 2);
  const auto before = extract_features(ex, reshape_for_conv(X, 3));
  const auto weights = ex.weights();
  (void)extract_features(ex, reshape_for_conv(fixture::random_matrix(100, 6, 3), 3));
  EXPECT_EQ(ex.weights(), weights);
  EXPECT_EQ(extract_features(ex, reshape_for_conv(X, 3)), before);
}
