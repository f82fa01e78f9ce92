#pragma once

// Flow-record CSV ingestion: RFC-4180 reader, strict numeric parsing, row
// cleaning and multiclass label encoding.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "ddosguard/common.hpp"

namespace ddosguard {

// ---------------------------------------------------------------------------
// column selection
// ---------------------------------------------------------------------------

/// Identifier-like CIC-DDoS2019 columns plus the binary-detection label.
inline std::vector<std::string> default_drop_columns() {
  return {"Unnamed: 0", "Flow ID",   "Source IP",    "Source Port", "Destination IP",
          "Destination Port", "Timestamp", "SimillarHTTP", "Class"};
}

struct ColumnSpec {
  /// Empty means "every header column that is neither the label nor dropped";
  /// resolve_columns() turns that into an explicit list.
  std::vector<std::string> feature_columns;
  std::string label_column = "Label";
  std::vector<std::string> drop_columns = default_drop_columns();

  void validate() const {
    if (label_column.empty()) throw InvalidArgument("column spec: label column is empty");
    std::set<std::string> seen;
    for (const auto& f : feature_columns) {
      if (f == label_column) throw InvalidArgument("column spec: label column listed as a feature");
      if (!seen.insert(f).second) throw InvalidArgument("column spec: duplicate feature " + f);
      if (std::find(drop_columns.begin(), drop_columns.end(), f) != drop_columns.end()) {
        throw InvalidArgument("column spec: feature " + f + " is also dropped");
      }
    }
  }

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

// ---------------------------------------------------------------------------
// label codec
// ---------------------------------------------------------------------------

/// Bijection between label strings and ids 0..C-1, ordered lexicographically.
class LabelCodec {
 public:
  LabelCodec() = default;

  template <typename Range>
  static LabelCodec from_labels(const Range& labels) {
    std::set<std::string> distinct(std::begin(labels), std::end(labels));
    LabelCodec codec;
    codec.classes_.assign(distinct.begin(), distinct.end());
    for (std::size_t i = 0; i < codec.classes_.size(); ++i) {
      codec.ids_.emplace(codec.classes_[i], static_cast<int>(i));
    }
    return codec;
  }

  std::size_t size() const noexcept { return classes_.size(); }
  const std::vector<std::string>& classes() const noexcept { return classes_; }

  std::optional<int> find(std::string_view label) const {
    auto it = ids_.find(std::string(label));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  int encode(std::string_view label) const {
    if (auto id = find(label)) return *id;
    throw InvalidArgument("unknown class label: " + std::string(label));
  }

  const std::string& decode(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= classes_.size()) {
      throw InvalidArgument("class id out of range: " + std::to_string(id));
    }
    return classes_[static_cast<std::size_t>(id)];
  }

  friend bool operator==(const LabelCodec& a, const LabelCodec& b) { return a.classes_ == b.classes_; }

 private:
  std::vector<std::string> classes_;
  std::map<std::string, int> ids_;
};

// ---------------------------------------------------------------------------
// tables
// ---------------------------------------------------------------------------

struct RawTable {
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    auto it = std::find(headers.begin(), headers.end(), name);
    if (it == headers.end()) return std::nullopt;
    return static_cast<std::size_t>(it - headers.begin());
  }
};

struct FlowTable {
  Matrix features;
  std::vector<int> labels;
  LabelCodec codec;
  ColumnSpec column_spec;  // resolved: feature_columns is explicit

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t class_count() const noexcept { return codec.size(); }
};

struct CleanReport {
  std::size_t rows_in = 0;
  std::size_t rows_out = 0;
  std::size_t rows_dropped_missing = 0;
  std::size_t rows_dropped_nonfinite = 0;
  std::vector<std::string> columns_dropped;
};

// ---------------------------------------------------------------------------
// text helpers
// ---------------------------------------------------------------------------

inline std::string_view trim_ascii(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

/// Comma-separated list with each item trimmed; empty items are skipped.
inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(sep, start), s.size());
    auto item = trim_ascii(s.substr(start, end - start));
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

enum class CellKind { Number, Missing, NonFinite };

struct NumericCell {
  CellKind kind = CellKind::Missing;
  double value = 0.0;
};

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// [+-]? (digits [. digits?] | . digits) ([eE] [+-]? digits)?
inline bool matches_decimal(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  std::size_t mantissa_digits = 0;
  while (i < s.size() && is_digit(s[i])) ++i, ++mantissa_digits;
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && is_digit(s[i])) ++i, ++mantissa_digits;
  }
  if (mantissa_digits == 0) return false;
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    ++i;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    std::size_t exp_digits = 0;
    while (i < s.size() && is_digit(s[i])) ++i, ++exp_digits;
    if (exp_digits == 0) return false;
  }
  return i == s.size();
}

}  // namespace detail

/// Strict numeric cell parser. Decimal and scientific notation are numbers;
/// inf/infinity/nan spellings and out-of-range magnitudes are NonFinite;
/// anything else (including empty) is Missing.
inline NumericCell parse_numeric_cell(std::string_view raw) {
  const auto s = trim_ascii(raw);
  if (s.empty()) return {CellKind::Missing, 0.0};
  if (!detail::matches_decimal(s)) {
    auto body = s;
    if (body.front() == '+' || body.front() == '-') body.remove_prefix(1);
    if (detail::iequals(body, "inf") || detail::iequals(body, "infinity") || detail::iequals(body, "nan")) {
      return {CellKind::NonFinite, 0.0};
    }
    return {CellKind::Missing, 0.0};
  }
  auto body = s;
  if (body.front() == '+') body.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  if (ec == std::errc::result_out_of_range) {
    // Underflow rounds toward zero; overflow is not representable.
    const double approx = std::strtod(std::string(body).c_str(), nullptr);
    if (std::isinf(approx)) return {CellKind::NonFinite, 0.0};
    return {CellKind::Number, approx};
  }
  if (ec != std::errc{} || ptr != body.data() + body.size()) return {CellKind::Missing, 0.0};
  if (!std::isfinite(v)) return {CellKind::NonFinite, 0.0};
  return {CellKind::Number, v};
}

// ---------------------------------------------------------------------------
// CSV reading
// ---------------------------------------------------------------------------

/// RFC-4180 record reader: quoted fields, doubled quotes, CRLF or LF line
/// endings, embedded newlines inside quotes.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  /// Reads the next record into `fields`; false at end of input. Lines that
  /// are completely empty are skipped.
  bool next(std::vector<std::string>& fields) {
    for (;;) {
      fields.clear();
      std::string cell;
      bool in_quotes = false;
      bool any = false;
      bool quoted_cell = false;
      int ch;
      while ((ch = in_.get()) != std::char_traits<char>::eof()) {
        any = true;
        const char c = static_cast<char>(ch);
        if (in_quotes) {
          if (c == '"') {
            if (in_.peek() == '"') {
              in_.get();
              cell.push_back('"');
            } else {
              in_quotes = false;
            }
          } else {
            cell.push_back(c);
          }
          continue;
        }
        if (c == '"' && cell.empty() && !quoted_cell) {
          in_quotes = true;
          quoted_cell = true;
        } else if (c == ',') {
          fields.push_back(std::move(cell));
          cell.clear();
          quoted_cell = false;
        } else if (c == '\n') {
          break;
        } else if (c == '\r') {
          if (in_.peek() == '\n') in_.get();
          break;
        } else {
          cell.push_back(c);
        }
      }
      ++line_;
      if (!any) return false;
      if (in_quotes) throw InputError("csv: unterminated quoted field near record " + std::to_string(line_));
      fields.push_back(std::move(cell));
      if (fields.size() == 1 && fields.front().empty() && !quoted_cell) continue;
      return true;
    }
  }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

/// Resolves an empty feature list to every header that is neither the label
/// nor a drop column, preserving header order.
inline ColumnSpec resolve_columns(const std::vector<std::string>& headers, ColumnSpec spec) {
  if (spec.feature_columns.empty()) {
    for (const auto& h : headers) {
      if (h == spec.label_column) continue;
      if (std::find(spec.drop_columns.begin(), spec.drop_columns.end(), h) != spec.drop_columns.end()) continue;
      spec.feature_columns.push_back(h);
    }
  }
  spec.validate();
  if (spec.feature_columns.empty()) throw InvalidArgument("column spec: no feature columns remain");
  return spec;
}

/// With `require_label` off, a file without the label column is accepted
/// (prediction input).
inline RawTable read_csv(std::istream& in, const ColumnSpec& spec, bool require_label = true) {
  CsvReader reader(in);
  RawTable table;
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw InputError("csv: header row missing");
  std::set<std::string> seen;
  for (auto& h : fields) {
    std::string name(trim_ascii(h));
    if (!seen.insert(name).second) throw InputError("csv: duplicate header '" + name + "'");
    table.headers.push_back(std::move(name));
  }
  if (require_label && !table.column(spec.label_column)) {
    throw InputError("csv: label column absent ('" + spec.label_column + "')");
  }
  for (const auto& f : spec.feature_columns) {
    if (!table.column(f)) throw InputError("csv: feature column absent ('" + f + "')");
  }
  const std::size_t width = table.headers.size();
  while (reader.next(fields)) {
    if (fields.size() > width) {
      throw InputError("csv: record " + std::to_string(table.rows.size() + 2) + " has " +
                       std::to_string(fields.size()) + " cells, header has " + std::to_string(width));
    }
    fields.resize(width);  // short records: absent cells read as empty
    table.rows.push_back(fields);
  }
  return table;
}

inline RawTable load_csv(const std::string& path, const ColumnSpec& spec, bool require_label = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open data file: " + path);
  return read_csv(in, spec, require_label);
}

struct CleanResult {
  FlowTable table;
  CleanReport report;
};

/// Drops rows with empty/non-numeric (missing) or non-finite feature cells,
/// then encodes the surviving labels.
inline CleanResult clean_and_encode(const RawTable& raw, const ColumnSpec& spec_in) {
  const ColumnSpec spec = resolve_columns(raw.headers, spec_in);
  const auto label_col = raw.column(spec.label_column);
  if (!label_col) throw InputError("csv: label column absent ('" + spec.label_column + "')");
  std::vector<std::size_t> feature_cols;
  for (const auto& f : spec.feature_columns) {
    auto c = raw.column(f);
    if (!c) throw InputError("csv: feature column absent ('" + f + "')");
    feature_cols.push_back(*c);
  }

  CleanReport report;
  report.rows_in = raw.rows.size();
  for (const auto& h : raw.headers) {
    if (h != spec.label_column &&
        std::find(spec.feature_columns.begin(), spec.feature_columns.end(), h) == spec.feature_columns.end()) {
      report.columns_dropped.push_back(h);
    }
  }

  const std::size_t d = feature_cols.size();
  std::vector<double> values;
  std::vector<std::string> labels;
  std::vector<double> row_values(d);
  for (const auto& row : raw.rows) {
    const auto label = trim_ascii(row[*label_col]);
    bool missing = label.empty();
    bool nonfinite = false;
    for (std::size_t j = 0; j < d && !missing; ++j) {
      const auto cell = parse_numeric_cell(row[feature_cols[j]]);
      if (cell.kind == CellKind::Missing) {
        missing = true;
      } else if (cell.kind == CellKind::NonFinite) {
        nonfinite = true;
      } else {
        row_values[j] = cell.value;
      }
    }
    if (missing) {
      ++report.rows_dropped_missing;
    } else if (nonfinite) {
      ++report.rows_dropped_nonfinite;
    } else {
      values.insert(values.end(), row_values.begin(), row_values.end());
      labels.emplace_back(label);
    }
  }
  report.rows_out = labels.size();
  if (labels.empty()) throw InvalidArgument("clean: no rows survive cleaning");

  CleanResult result;
  result.table.codec = LabelCodec::from_labels(labels);
  if (result.table.codec.size() < 2) throw InvalidArgument("clean: fewer than 2 distinct classes");
  result.table.labels.reserve(labels.size());
  for (const auto& l : labels) result.table.labels.push_back(result.table.codec.encode(l));
  result.table.features = Matrix(labels.size(), d, std::move(values));
  result.table.column_spec = spec;
  result.report = std::move(report);
  return result;
}

/// Stratified subsample of at most `target` rows: each class keeps a share
/// proportional to its frequency (largest remainder), chosen by seeded shuffle.
/// Row order of the result follows the original table.
inline FlowTable stratified_subsample(const FlowTable& table, std::size_t target, std::uint64_t seed) {
  if (target >= table.size()) return table;
  const std::size_t C = table.class_count();
  std::vector<std::vector<std::size_t>> members(C);
  for (std::size_t i = 0; i < table.size(); ++i) members[static_cast<std::size_t>(table.labels[i])].push_back(i);
  std::vector<std::size_t> quota(C);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const double exact = static_cast<double>(target) * static_cast<double>(members[c].size()) /
                         static_cast<double>(table.size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i, ++assigned) ++quota[remainders[i].second];

  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < C; ++c) {
    rng.shuffle(std::span<std::size_t>(members[c]));
    keep.insert(keep.end(), members[c].begin(),
                members[c].begin() + static_cast<std::ptrdiff_t>(std::min(quota[c], members[c].size())));
  }
  std::sort(keep.begin(), keep.end());
  FlowTable out;
  out.features = table.features.select_rows(keep);
  out.labels = select<int>(table.labels, keep);
  out.codec = table.codec;
  out.column_spec = table.column_spec;
  return out;
}

}  // namespace ddosguard
