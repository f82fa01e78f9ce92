#include <gtest/gtest.h>

#include <map>
#include <mutex>
#include <set>

#include "ddosguard/hybrid_stack.hpp"
#include "support.hpp"

using namespace ddosguard;

namespace {

// One column holding the row id, so trainers and predictors can tell which
// rows they were shown.
Matrix id_column(std::size_t n) {
  Matrix X(n, 1);
  for (std::size_t i = 0; i < n; ++i) X(i, 0) = static_cast<double>(i);
  return X;
}

std::vector<int> random_labels(std::size_t n, std::size_t C, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(C));
  return y;
}

// Remembers the training labels by id; for an unseen id it answers with the
// label of the nearest remembered id, which carries no information about the
// unseen row's own label.
BaseTrainer memorizer(std::size_t C) {
  return [C](const Matrix& X, std::span<const int> y, const FoldContext&) {
    auto seen = std::make_shared<std::map<double, int>>();
    for (std::size_t i = 0; i < X.rows(); ++i) (*seen)[X(i, 0)] = y[i];
    return ProbaPredictor([seen, C](const Matrix& Q) {
      Matrix P(Q.rows(), C);
      for (std::size_t i = 0; i < Q.rows(); ++i) {
        auto it = seen->lower_bound(Q(i, 0));
        if (it == seen->end()) --it;
        P(i, static_cast<std::size_t>(it->second)) = 1.0;
      }
      return P;
    });
  };
}

BaseTrainer prior_trainer(std::size_t C) {
  return [C](const Matrix&, std::span<const int> y, const FoldContext&) {
    std::vector<double> prior(C, 0.0);
    for (int v : y) prior[static_cast<std::size_t>(v)] += 1.0 / static_cast<double>(y.size());
    return ProbaPredictor([prior, C](const Matrix& Q) {
      Matrix P(Q.rows(), C);
      for (std::size_t i = 0; i < Q.rows(); ++i) std::copy(prior.begin(), prior.end(), P.row(i).begin());
      return P;
    });
  };
}

const FlowTable& small_table() {
  static const FlowTable t = fixture::blobs(300, 8, 3, 11);
  return t;
}

const HybridModel& small_model() {
  static const HybridModel m = fit_hybrid_rows(small_table().features, small_table().labels, small_table().codec,
                                               small_table().column_spec, fixture::light_config());
  return m;
}

}  // namespace

TEST(Oof, NoRowIsPredictedByAModelThatSawIt) {
  const std::size_t n = 200, C = 3, k = 5;
  const Matrix X = id_column(n);
  const auto y = random_labels(n, C, 1);
  std::mutex mu;
  std::vector<int> predicted_times(n, 0);
  bool leaked = false;
  const BaseTrainer spy = [&](const Matrix& Xt, std::span<const int>, const FoldContext& ctx) {
    std::set<double> trained_on;
    for (std::size_t i = 0; i < Xt.rows(); ++i) trained_on.insert(Xt(i, 0));
    {
      std::lock_guard lock(mu);
      for (auto r : ctx.train_rows) leaked |= !trained_on.count(static_cast<double>(r));
    }
    return ProbaPredictor([&, trained_on](const Matrix& Q) {
      std::lock_guard lock(mu);
      for (std::size_t i = 0; i < Q.rows(); ++i) {
        leaked |= trained_on.count(Q(i, 0)) > 0;
        ++predicted_times[static_cast<std::size_t>(Q(i, 0))];
      }
      return Matrix(Q.rows(), C);
    });
  };
  const BaseTrainer trainers[] = {spy};
  const auto r = oof_meta_features(X, y, C, trainers, k, 9);
  EXPECT_FALSE(leaked);
  for (int times : predicted_times) EXPECT_EQ(times, 1);
  EXPECT_EQ(r.fold_of_row.size(), n);
}

TEST(Oof, MemorizerStaysAtChanceOnShuffledLabels) {
  const std::size_t n = 600, C = 3;
  const Matrix X = id_column(n);
  const auto y = random_labels(n, C, 2);
  const BaseTrainer trainers[] = {memorizer(C)};
  const auto oof = oof_meta_features(X, y, C, trainers, 5, 3);
  StackConfig sc;
  const auto meta = fit_meta_learner(oof.meta, y, C, sc);
  const auto pred = argmax_rows(meta.predict_proba(oof.meta));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += pred[i] == y[i];
  const double acc = static_cast<double>(correct) / n;
  const double p = 1.0 / C, sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_LT(std::abs(acc - p), 3 * sigma) << "meta accuracy " << acc;

  // the same memorizer scored on its own training rows is perfect
  const auto seen = memorizer(C)(X, y, FoldContext{})(X);
  EXPECT_EQ(argmax_rows(seen), y);
}

TEST(Oof, ShapeAndBlockOrder) {
  const std::size_t n = 100, C = 4;
  const Matrix X = id_column(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % C);
  const BaseTrainer trainers[] = {prior_trainer(C), memorizer(C)};
  const auto r = oof_meta_features(X, y, C, trainers, 5, 1);
  EXPECT_EQ(r.meta.rows(), 100u);
  EXPECT_EQ(r.meta.cols(), 8u);
  // balanced classes and folds: each training prior is exactly uniform
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c) EXPECT_DOUBLE_EQ(r.meta(i, c), 0.25);
  }
}

TEST(Oof, WrongShapedPredictorIsRejected) {
  const Matrix X = id_column(20);
  const auto y = random_labels(20, 2, 1);
  const BaseTrainer bad = [](const Matrix&, std::span<const int>, const FoldContext&) {
    return ProbaPredictor([](const Matrix& Q) { return Matrix(Q.rows(), 5); });
  };
  const BaseTrainer trainers[] = {bad};
  EXPECT_THROW(oof_meta_features(X, y, 2, trainers, 2, 1), InvalidArgument);
}

TEST(StratifiedKfold, BalancedFolds) {
  std::vector<int> y;
  for (int i = 0; i < 103; ++i) y.push_back(i < 50 ? 0 : (i < 80 ? 1 : 2));
  const std::size_t k = 5;
  const auto folds = stratified_kfold(y, k, 4);
  std::vector<std::vector<int>> counts(k, std::vector<int>(3, 0));
  std::vector<int> sizes(k, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    ++counts[folds[i]][static_cast<std::size_t>(y[i])];
    ++sizes[folds[i]];
  }
  EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1);
  for (std::size_t c = 0; c < 3; ++c) {
    int lo = 1 << 30, hi = 0;
    for (std::size_t f = 0; f < k; ++f) {
      lo = std::min(lo, counts[f][c]);
      hi = std::max(hi, counts[f][c]);
    }
    EXPECT_LE(hi - lo, 1);
  }
  EXPECT_EQ(stratified_kfold(y, k, 4), folds);
  const std::vector<int> tiny{0, 0, 1};
  EXPECT_THROW(stratified_kfold(tiny, 2, 1), InvalidArgument);
}

TEST(MetaLearner, ZeroWeightsGiveUniformOutput) {
  const std::size_t C = 3;
  const MetaLearner meta(MlpModel({LayerParams{Matrix(C, 2 * C), std::vector<double>(C, 0.0), Activation::Softmax}}));
  const auto& m = small_model();
  const HybridModel zeroed(m.codec(), m.columns(), m.config(), m.standardizer(), m.extractor(), m.forest(), m.mlp(),
                           meta);
  const auto [classes, proba] = predict_hybrid(zeroed, small_table().features);
  for (std::size_t i = 0; i < proba.rows(); ++i) {
    EXPECT_EQ(classes[i], 0);
    for (std::size_t c = 0; c < C; ++c) EXPECT_NEAR(proba(i, c), 1.0 / 3.0, 1e-15);
  }
}

TEST(Hybrid, PredictionIsTheDocumentedComposition) {
  const auto& m = small_model();
  const Matrix& raw = small_table().features;
  const Matrix z = transform(m.standardizer(), raw);
  const Matrix feats = extract_features(m.extractor(), reshape_for_conv(z, m.extractor().kernel_size()));
  const Matrix blocks[] = {predict_proba_forest(m.forest(), feats), predict_proba_mlp(m.mlp(), feats)};
  const Matrix expected = m.meta().predict_proba(hconcat(blocks));
  const auto got = predict_hybrid_detailed(m, raw);
  EXPECT_EQ(got.probabilities, expected);
  EXPECT_EQ(got.classes, argmax_rows(expected));
  EXPECT_EQ(got.forest_proba, blocks[0]);
}

TEST(Hybrid, MetaInputBlockOrderMatters) {
  const auto& m = small_model();
  const auto p = predict_hybrid_detailed(m, small_table().features);
  const Matrix swapped_blocks[] = {p.mlp_proba, p.forest_proba};
  EXPECT_FALSE(m.meta().predict_proba(hconcat(swapped_blocks)) == p.probabilities);
}

TEST(Hybrid, LearnsBlobsAndBeatsNothingWorse) {
  const auto t = fixture::blobs(500, 8, 3, 21);
  const auto fit = fit_hybrid(t, fixture::light_config());
  const Matrix Xt = t.features.select_rows(fit.split.test_idx);
  const auto yt = select<int>(t.labels, fit.split.test_idx);
  const auto pred = predict_hybrid(fit.model, Xt).first;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < yt.size(); ++i) ok += pred[i] == yt[i];
  EXPECT_GE(static_cast<double>(ok) / static_cast<double>(yt.size()), 0.95);
}

TEST(Hybrid, DeterministicForFixedSeeds) {
  const auto& t = small_table();
  const auto a = fit_hybrid_rows(t.features, t.labels, t.codec, t.column_spec, fixture::light_config());
  EXPECT_EQ(a, small_model());
}

TEST(Hybrid, PassthroughWidensMetaInput) {
  auto cfg = fixture::light_config();
  cfg.stack.passthrough = true;
  const auto& t = small_table();
  const auto m = fit_hybrid_rows(t.features, t.labels, t.codec, t.column_spec, cfg);
  EXPECT_EQ(m.meta().input_width(), 2 * 3 + cfg.extractor.filters);
  EXPECT_EQ(predict_hybrid(m, t.features).second.cols(), 3u);
}

TEST(Hybrid, SingleClassTrainingIsAnError) {
  const auto& t = small_table();
  const std::vector<int> zeros(t.size(), 0);
  EXPECT_THROW(fit_hybrid_rows(t.features, zeros, t.codec, t.column_spec, fixture::light_config()),
               InvalidArgument);
}

TEST(Hybrid, RejectsWrongWidthOrNonFiniteInput) {
  const auto& m = small_model();
  EXPECT_THROW(predict_hybrid(m, Matrix(1, 7)), InvalidArgument);
  Matrix bad(1, 8);
  bad(0, 3) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(predict_hybrid(m, bad), InvalidArgument);
}
