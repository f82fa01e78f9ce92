#pragma once

// The hybrid detector: standardize -> conv features -> {random forest, MLP}
// -> softmax-regression meta-learner trained on out-of-fold base
// probabilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ddosguard/cnn_extractor.hpp"
#include "ddosguard/common.hpp"
#include "ddosguard/dataset_ingest.hpp"
#include "ddosguard/folds.hpp"
#include "ddosguard/mlp.hpp"
#include "ddosguard/preprocess.hpp"
#include "ddosguard/random_forest.hpp"

namespace ddosguard {

struct SplitConfig {
  double ratio = 0.8;
  std::uint64_t seed = 42;
  bool stratify = false;
  friend bool operator==(const SplitConfig&, const SplitConfig&) = default;
};

struct ExtractorConfig {
  std::size_t filters = 64;
  std::size_t kernel = 3;
  std::uint64_t seed = 42;
  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

struct StackConfig {
  std::size_t folds = 5;
  std::uint64_t seed = 42;
  double meta_learning_rate = 0.5;
  std::size_t meta_epochs = 500;
  bool passthrough = false;  // also feed the conv features to the meta-learner

  void validate() const {
    if (folds < 2) throw InvalidArgument("stack: folds must be >= 2");
    if (!(meta_learning_rate > 0.0)) throw InvalidArgument("stack: meta learning rate must be > 0");
    if (meta_epochs < 1) throw InvalidArgument("stack: meta epochs must be >= 1");
  }
  friend bool operator==(const StackConfig&, const StackConfig&) = default;
};

struct HybridConfig {
  SplitConfig split;
  ExtractorConfig extractor;
  ForestConfig forest;
  MlpConfig mlp;
  StackConfig stack;
  friend bool operator==(const HybridConfig&, const HybridConfig&) = default;
};

// ---------------------------------------------------------------------------
// out-of-fold meta-features
// ---------------------------------------------------------------------------

using ProbaPredictor = std::function<Matrix(const Matrix&)>;
using BaseTrainer =
    std::function<ProbaPredictor(const Matrix& X, std::span<const int> y, const FoldContext& ctx)>;

struct OofResult {
  Matrix meta;                           // n x (trainers * C), trainer blocks in order
  std::vector<std::size_t> fold_of_row;  // which fold's models produced each row
};

/// Every row's meta-features come from base models trained on the other k-1
/// stratified folds. Folds run in parallel; each writes only its own rows.
inline OofResult oof_meta_features(const Matrix& X, std::span<const int> y, std::size_t class_count,
                                   std::span<const BaseTrainer> trainers, std::size_t k, std::uint64_t seed) {
  if (y.size() != X.rows()) throw InvalidArgument("oof: label count does not match rows");
  if (k > X.rows()) throw InvalidArgument("oof: more folds than rows");
  OofResult out{Matrix(X.rows(), trainers.size() * class_count), stratified_kfold(y, k, seed)};
  parallel_for(k, [&](std::size_t fold) {
    const auto rows = fold_rows(out.fold_of_row, fold);
    const Matrix X_train = X.select_rows(rows.train);
    const auto y_train = select<int>(y, rows.train);
    const Matrix X_held = X.select_rows(rows.held_out);
    const FoldContext ctx{fold, rows.train};
    for (std::size_t t = 0; t < trainers.size(); ++t) {
      const auto predictor = trainers[t](X_train, y_train, ctx);
      const Matrix P = predictor(X_held);
      if (P.rows() != rows.held_out.size() || P.cols() != class_count) {
        throw InvalidArgument("oof: base predictor returned the wrong shape");
      }
      for (std::size_t i = 0; i < rows.held_out.size(); ++i) {
        std::copy(P.row(i).begin(), P.row(i).end(), out.meta.row(rows.held_out[i]).begin() + t * class_count);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// meta-learner
// ---------------------------------------------------------------------------

/// Multinomial logistic regression over concatenated base probabilities.
class MetaLearner {
 public:
  MetaLearner() = default;
  explicit MetaLearner(MlpModel softmax_layer) : model_(std::move(softmax_layer)) {
    if (model_.layers().size() != 1) throw InvalidArgument("meta: expected a single softmax layer");
  }

  std::size_t input_width() const { return model_.input_dim(); }
  std::size_t class_count() const { return model_.class_count(); }
  const Matrix& weights() const { return model_.layers().front().weights; }
  const std::vector<double>& biases() const { return model_.layers().front().biases; }
  const MlpModel& model() const noexcept { return model_; }

  Matrix predict_proba(const Matrix& meta_features) const { return predict_proba_mlp(model_, meta_features); }

  friend bool operator==(const MetaLearner&, const MetaLearner&) = default;

 private:
  MlpModel model_;
};

/// Full-batch gradient descent on mean cross-entropy, seeded init.
inline MetaLearner fit_meta_learner(const Matrix& meta_features, std::span<const int> y, std::size_t class_count,
                                    const StackConfig& cfg) {
  cfg.validate();
  MlpConfig mc;
  mc.hidden = {};
  mc.learning_rate = cfg.meta_learning_rate;
  mc.epochs = cfg.meta_epochs;
  mc.batch_size = meta_features.rows();
  mc.seed = cfg.seed;
  mc.shuffle = false;
  return MetaLearner(fit_mlp(meta_features, y, class_count, mc));
}

// ---------------------------------------------------------------------------
// the assembled model
// ---------------------------------------------------------------------------

class HybridModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  HybridModel(LabelCodec codec, ColumnSpec columns, HybridConfig config, Standardizer standardizer,
              ConvExtractor extractor, ForestModel forest, MlpModel mlp, MetaLearner meta)
      : codec_(std::move(codec)),
        columns_(std::move(columns)),
        config_(std::move(config)),
        standardizer_(std::move(standardizer)),
        extractor_(std::move(extractor)),
        forest_(std::move(forest)),
        mlp_(std::move(mlp)),
        meta_(std::move(meta)) {
    const std::size_t C = codec_.size();
    const std::size_t F = extractor_.filter_count();
    if (C < 2) throw InvalidArgument("hybrid: need >= 2 classes");
    if (standardizer_.dim() != columns_.feature_columns.size()) {
      throw InvalidArgument("hybrid: standardizer width does not match feature columns");
    }
    if (standardizer_.dim() < extractor_.kernel_size()) throw InvalidArgument("hybrid: fewer features than kernel");
    if (forest_.class_count() != C || forest_.feature_count() != F) throw InvalidArgument("hybrid: forest shape mismatch");
    if (mlp_.class_count() != C || mlp_.input_dim() != F) throw InvalidArgument("hybrid: mlp shape mismatch");
    const std::size_t meta_in = 2 * C + (config_.stack.passthrough ? F : 0);
    if (meta_.class_count() != C || meta_.input_width() != meta_in) {
      throw InvalidArgument("hybrid: meta-learner shape mismatch");
    }
  }

  std::uint32_t format_version() const noexcept { return kFormatVersion; }
  const LabelCodec& codec() const noexcept { return codec_; }
  const ColumnSpec& columns() const noexcept { return columns_; }
  const HybridConfig& config() const noexcept { return config_; }
  const Standardizer& standardizer() const noexcept { return standardizer_; }
  const ConvExtractor& extractor() const noexcept { return extractor_; }
  const ForestModel& forest() const noexcept { return forest_; }
  const MlpModel& mlp() const noexcept { return mlp_; }
  const MetaLearner& meta() const noexcept { return meta_; }
  std::size_t class_count() const noexcept { return codec_.size(); }
  std::size_t raw_width() const noexcept { return standardizer_.dim(); }

  friend bool operator==(const HybridModel&, const HybridModel&) = default;

 private:
  LabelCodec codec_;
  ColumnSpec columns_;
  HybridConfig config_;
  Standardizer standardizer_;
  ConvExtractor extractor_;
  ForestModel forest_;
  MlpModel mlp_;
  MetaLearner meta_;
};

/// Standardized, reshaped and conv-extracted features for raw rows.
inline Matrix conv_features(const Standardizer& s, const ConvExtractor& ex, const Matrix& raw) {
  return extract_features(ex, reshape_for_conv(transform(s, raw), ex.kernel_size()));
}

inline Matrix meta_inputs(const Matrix& forest_proba, const Matrix& mlp_proba, const Matrix* passthrough) {
  if (passthrough) {
    const Matrix blocks[] = {forest_proba, mlp_proba, *passthrough};
    return hconcat(blocks);
  }
  const Matrix blocks[] = {forest_proba, mlp_proba};
  return hconcat(blocks);
}

namespace detail {
inline void check_classes(std::span<const int> y, std::size_t class_count) {
  std::vector<bool> present(class_count, false);
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_count) throw InvalidArgument("hybrid: label out of range");
    present[static_cast<std::size_t>(label)] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw InvalidArgument("hybrid: training data must contain at least 2 classes");
  }
}
}  // namespace detail

/// Fits the whole pipeline on the given (already split) raw training rows.
inline HybridModel fit_hybrid_rows(const Matrix& raw_train, std::span<const int> y, const LabelCodec& codec,
                                   const ColumnSpec& columns, const HybridConfig& cfg) {
  const std::size_t C = codec.size();
  detail::check_classes(y, C);
  if (raw_train.rows() != y.size()) throw InvalidArgument("hybrid: label count does not match rows");
  cfg.stack.validate();
  cfg.mlp.validate();

  Standardizer standardizer = fit_standardizer(raw_train);
  ConvExtractor extractor = init_extractor(cfg.extractor.seed, cfg.extractor.filters, cfg.extractor.kernel);
  const Matrix features = conv_features(standardizer, extractor, raw_train);

  const BaseTrainer forest_trainer = [&](const Matrix& X, std::span<const int> yy, const FoldContext& ctx) {
    ForestConfig fc = cfg.forest;
    fc.seed = derive_seed(cfg.forest.seed, ctx.fold);
    auto model = std::make_shared<ForestModel>(fit_forest(X, yy, C, fc));
    return ProbaPredictor([model](const Matrix& Q) { return predict_proba_forest(*model, Q); });
  };
  const BaseTrainer mlp_trainer = [&](const Matrix& X, std::span<const int> yy, const FoldContext& ctx) {
    MlpConfig mc = cfg.mlp;
    mc.seed = derive_seed(cfg.mlp.seed, ctx.fold);
    auto model = std::make_shared<MlpModel>(fit_mlp(X, yy, C, mc));
    return ProbaPredictor([model](const Matrix& Q) { return predict_proba_mlp(*model, Q); });
  };
  const BaseTrainer trainers[] = {forest_trainer, mlp_trainer};
  OofResult oof = oof_meta_features(features, y, C, trainers, cfg.stack.folds, cfg.stack.seed);

  Matrix meta_X = cfg.stack.passthrough ? hconcat(std::vector<Matrix>{oof.meta, features}) : std::move(oof.meta);
  MetaLearner meta = fit_meta_learner(meta_X, y, C, cfg.stack);

  ForestModel forest = fit_forest(features, y, C, cfg.forest);
  MlpModel mlp = fit_mlp(features, y, C, cfg.mlp);
  return HybridModel(codec, columns, cfg, std::move(standardizer), std::move(extractor), std::move(forest),
                     std::move(mlp), std::move(meta));
}

struct HybridFit {
  HybridModel model;
  SplitIndices split;
};

/// Splits the table, then fits on the training share.
inline HybridFit fit_hybrid(const FlowTable& table, const HybridConfig& cfg) {
  detail::check_classes(table.labels, table.class_count());
  SplitIndices split = cfg.split.stratify
                           ? stratified_train_test_split(table.labels, cfg.split.ratio, cfg.split.seed)
                           : train_test_split(table.size(), cfg.split.ratio, cfg.split.seed);
  const Matrix X = table.features.select_rows(split.train_idx);
  const auto y = select<int>(table.labels, split.train_idx);
  return {fit_hybrid_rows(X, y, table.codec, table.column_spec, cfg), std::move(split)};
}

struct HybridPrediction {
  std::vector<int> classes;
  Matrix probabilities;  // meta-learner output
  Matrix forest_proba;
  Matrix mlp_proba;
};

/// Prediction from rows that are already standardized with the model's own
/// Standardizer (the live gatekeeper path enters here).
inline HybridPrediction predict_standardized(const HybridModel& model, const Matrix& standardized) {
  const auto& ex = model.extractor();
  const Matrix features = extract_features(ex, reshape_for_conv(standardized, ex.kernel_size()));
  HybridPrediction out;
  out.forest_proba = predict_proba_forest(model.forest(), features);
  out.mlp_proba = predict_proba_mlp(model.mlp(), features);
  const Matrix meta_X =
      meta_inputs(out.forest_proba, out.mlp_proba, model.config().stack.passthrough ? &features : nullptr);
  out.probabilities = model.meta().predict_proba(meta_X);
  out.classes = argmax_rows(out.probabilities);
  return out;
}

inline HybridPrediction predict_hybrid_detailed(const HybridModel& model, const Matrix& raw) {
  if (raw.cols() != model.raw_width()) {
    throw InvalidArgument("hybrid: expected " + std::to_string(model.raw_width()) + " raw features, got " +
                          std::to_string(raw.cols()));
  }
  for (double v : raw.data()) {
    if (!std::isfinite(v)) throw InvalidArgument("hybrid: non-finite input value");
  }
  return predict_standardized(model, transform(model.standardizer(), raw));
}

inline std::pair<std::vector<int>, Matrix> predict_hybrid(const HybridModel& model, const Matrix& raw) {
  auto p = predict_hybrid_detailed(model, raw);
  return {std::move(p.classes), std::move(p.probabilities)};
}

}  // namespace ddosguard
