#pragma once

// Confusion-matrix metrics, macro aggregation, k-fold cross-validation and
// the comparison report (plain-text table and NDJSON).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ddosguard/common.hpp"
#include "ddosguard/dataset_ingest.hpp"
#include "ddosguard/folds.hpp"

namespace ddosguard {

/// counts(i, j) = samples of true class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : C_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const noexcept { return C_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const noexcept {
    return counts_[truth * C_ + predicted];
  }
  void add(std::size_t truth, std::size_t predicted, std::uint64_t n = 1) noexcept {
    counts_[truth * C_ + predicted] += n;
  }

  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }
  std::uint64_t trace() const noexcept {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < C_; ++i) t += (*this)(i, i);
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.C_ != C_) throw InvalidArgument("confusion: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t C_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw InvalidArgument("confusion: length mismatch");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (truth[i] < 0 || predicted[i] < 0 || t >= classes || p >= classes) {
      throw InvalidArgument("confusion: class id out of range");
    }
    cm.add(t, p);
  }
  return cm;
}

/// trace / total.
inline double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw InvalidArgument("accuracy: empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

/// One-vs-rest precision, recall and F1 for class `c`; 0/0 is taken as 0.
inline ClassMetrics precision_recall_f1(const ConfusionMatrix& cm, std::size_t c) {
  if (c >= cm.classes()) throw InvalidArgument("metrics: class id out of range");
  std::uint64_t tp = cm(c, c), fp = 0, fn = 0;
  for (std::size_t k = 0; k < cm.classes(); ++k) {
    if (k == c) continue;
    fp += cm(k, c);
    fn += cm(c, k);
  }
  ClassMetrics m;
  m.support = tp + fn;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
};

inline MetricsReport macro_report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.accuracy = accuracy(cm);
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const auto m = precision_recall_f1(cm, c);
    r.per_class.push_back(m);
    r.precision_macro += m.precision;
    r.recall_macro += m.recall;
    r.f1_macro += m.f1;
  }
  const auto C = static_cast<double>(cm.classes());
  r.precision_macro /= C;
  r.recall_macro /= C;
  r.f1_macro /= C;
  return r;
}

// ---------------------------------------------------------------------------
// cross-validation
// ---------------------------------------------------------------------------

struct CvReport {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t k = 0;

  double spread() const {
    if (fold_accuracy.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(fold_accuracy.begin(), fold_accuracy.end());
    return *hi - *lo;
  }
};

inline CvReport make_cv_report(std::vector<double> fold_accuracy) {
  CvReport r;
  r.k = fold_accuracy.size();
  if (r.k == 0) return r;
  for (double a : fold_accuracy) r.mean += a;
  r.mean /= static_cast<double>(r.k);
  double ss = 0.0;
  for (double a : fold_accuracy) ss += (a - r.mean) * (a - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(r.k));
  r.fold_accuracy = std::move(fold_accuracy);
  return r;
}

/// Predicts class ids for raw rows, one vector per evaluated model.
using MultiPredictor = std::function<std::vector<std::vector<int>>(const Matrix& raw)>;
/// Fits everything it needs (standardizer, extractor, models) on the fold's
/// training rows only.
using MultiTrainer =
    std::function<MultiPredictor(const Matrix& raw_train, std::span<const int> y_train, const FoldContext& ctx)>;

struct CrossValidation {
  std::vector<CvReport> reports;                  // one per model
  std::vector<ConfusionMatrix> pooled;            // out-of-fold predictions pooled over folds
  std::vector<std::size_t> fold_of_row;
};

inline CrossValidation kfold_cross_validate_many(const FlowTable& table, const MultiTrainer& trainer,
                                                 std::size_t model_count, std::size_t k, std::uint64_t seed,
                                                 bool stratified = true) {
  const auto folds = stratified ? stratified_kfold(table.labels, k, seed) : plain_kfold(table.size(), k, seed);
  const std::size_t C = table.class_count();
  std::vector<std::vector<double>> acc(model_count, std::vector<double>(k, 0.0));
  std::vector<std::vector<ConfusionMatrix>> per_fold(k, std::vector<ConfusionMatrix>(model_count, ConfusionMatrix(C)));
  for (std::size_t f = 0; f < k; ++f) {
    const auto rows = fold_rows(folds, f);
    const auto y_train = select<int>(table.labels, rows.train);
    const auto y_held = select<int>(table.labels, rows.held_out);
    const auto predictor = trainer(table.features.select_rows(rows.train), y_train, FoldContext{f, rows.train});
    const auto predictions = predictor(table.features.select_rows(rows.held_out));
    if (predictions.size() != model_count) throw InvalidArgument("crossval: predictor returned wrong model count");
    for (std::size_t m = 0; m < model_count; ++m) {
      per_fold[f][m] = confusion(y_held, predictions[m], C);
      acc[m][f] = accuracy(per_fold[f][m]);
    }
  }
  CrossValidation cv;
  cv.fold_of_row = folds;
  for (std::size_t m = 0; m < model_count; ++m) {
    cv.reports.push_back(make_cv_report(acc[m]));
    ConfusionMatrix pooled(C);
    for (std::size_t f = 0; f < k; ++f) pooled += per_fold[f][m];
    cv.pooled.push_back(pooled);
  }
  return cv;
}

using Predictor = std::function<std::vector<int>(const Matrix& raw)>;
using Trainer = std::function<Predictor(const Matrix& raw_train, std::span<const int> y_train, const FoldContext&)>;

inline CvReport kfold_cross_validate(const FlowTable& table, const Trainer& trainer, std::size_t k,
                                     std::uint64_t seed, bool stratified = true) {
  const MultiTrainer wrapped = [&](const Matrix& X, std::span<const int> y, const FoldContext& ctx) {
    auto single = trainer(X, y, ctx);
    return MultiPredictor([single](const Matrix& Q) { return std::vector<std::vector<int>>{single(Q)}; });
  };
  return kfold_cross_validate_many(table, wrapped, 1, k, seed, stratified).reports.front();
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct ModelRow {
  std::string model;
  MetricsReport metrics;
  std::optional<CvReport> cv;
};

/// {model, accuracy, precision_macro, recall_macro, f1_macro, cv_mean, cv_folds}
inline nlohmann::json to_ndjson(const ModelRow& row) {
  nlohmann::json j;
  j["model"] = row.model;
  j["accuracy"] = row.metrics.accuracy;
  j["precision_macro"] = row.metrics.precision_macro;
  j["recall_macro"] = row.metrics.recall_macro;
  j["f1_macro"] = row.metrics.f1_macro;
  j["cv_mean"] = row.cv ? nlohmann::json(row.cv->mean) : nlohmann::json(nullptr);
  j["cv_folds"] = row.cv ? nlohmann::json(row.cv->fold_accuracy) : nlohmann::json::array();
  return j;
}

inline std::string format_table(std::span<const ModelRow> rows) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "Model" << std::right << std::setw(10) << "Accuracy" << std::setw(11)
      << "Precision" << std::setw(9) << "Recall" << std::setw(8) << "F1" << std::setw(15) << "Avg Cross-Val"
      << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << std::left << std::setw(10) << r.model << std::right << std::setw(10) << r.metrics.accuracy
        << std::setw(11) << r.metrics.precision_macro << std::setw(9) << r.metrics.recall_macro << std::setw(8)
        << r.metrics.f1_macro;
    if (r.cv) {
      out << std::setw(15) << r.cv->mean;
    } else {
      out << std::setw(15) << "-";
    }
    out << '\n';
  }
  return out.str();
}

/// Per-class rows (label, precision, recall, F1, support) for one model.
inline std::string format_per_class(const MetricsReport& m, const LabelCodec& codec) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "class" << std::right << std::setw(11) << "precision" << std::setw(9)
      << "recall" << std::setw(8) << "F1" << std::setw(10) << "support" << '\n';
  out << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    out << std::left << std::setw(16) << codec.decode(static_cast<int>(c)) << std::right << std::setw(11)
        << pc.precision << std::setw(9) << pc.recall << std::setw(8) << pc.f1 << std::setw(10) << pc.support
        << '\n';
  }
  return out.str();
}

}  // namespace ddosguard
