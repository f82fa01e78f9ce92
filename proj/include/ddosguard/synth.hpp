#pragma once

// Seeded Gaussian-blob flow table for self-contained end-to-end runs.
//
// Class c has a centre drawn once as separation * N(0, 1) per coordinate;
// row i belongs to class i % C and is its centre plus N(0, 1) noise. The CSV
// carries a dropped identifier column so ingestion is exercised too.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "ddosguard/common.hpp"
#include "ddosguard/dataset_ingest.hpp"

namespace ddosguard {

struct SynthSpec {
  std::size_t n = 2000;
  std::size_t d = 20;
  std::size_t classes = 4;
  double separation = 4.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (n < classes) throw InvalidArgument("synth: need at least one row per class");
    if (d < 1) throw InvalidArgument("synth: need at least one feature");
    if (classes < 2) throw InvalidArgument("synth: need at least two classes");
    if (!(separation >= 0.0)) throw InvalidArgument("synth: separation must be >= 0");
  }
};

/// Label names in class order: BENIGN first, then attack families.
inline std::string synth_label(std::size_t c) {
  static const char* names[] = {"BENIGN",      "Syn",        "UDP",           "DrDoS_DNS",  "DrDoS_LDAP",
                                "DrDoS_MSSQL", "DrDoS_NTP",  "DrDoS_NetBIOS", "DrDoS_SNMP", "DrDoS_SSDP",
                                "DrDoS_UDP",   "TFTP",       "UDP-lag",       "WebDDoS"};
  constexpr std::size_t known = sizeof names / sizeof names[0];
  return c < known ? names[c] : "Attack_" + std::to_string(c);
}

inline std::string synth_column(std::size_t j) {
  std::string s = std::to_string(j);
  return "f" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

struct SynthData {
  Matrix features;                  // n x d
  std::vector<std::string> labels;  // per row
};

inline SynthData synth_blobs(const SynthSpec& spec) {
  spec.validate();
  Rng centre_rng(derive_seed(spec.seed, 0));
  Matrix centres(spec.classes, spec.d);
  for (auto& v : centres.data()) v = spec.separation * centre_rng.normal();

  Rng noise_rng(derive_seed(spec.seed, 1));
  SynthData out{Matrix(spec.n, spec.d), {}};
  out.labels.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t c = i % spec.classes;
    for (std::size_t j = 0; j < spec.d; ++j) out.features(i, j) = centres(c, j) + noise_rng.normal();
    out.labels.push_back(synth_label(c));
  }
  return out;
}

/// Columns: Flow ID, f00..f(d-1), Label. Numbers use the shortest
/// round-tripping decimal form, so the CSV and in-memory tables agree exactly.
inline void write_synth_csv(const SynthData& data, std::ostream& out) {
  const std::size_t d = data.features.cols();
  out << "Flow ID";
  for (std::size_t j = 0; j < d; ++j) out << ',' << synth_column(j);
  out << ",Label\n";
  char buf[32];
  for (std::size_t i = 0; i < data.features.rows(); ++i) {
    std::string id = std::to_string(i);
    out << "synth-" << std::string(id.size() < 6 ? 6 - id.size() : 0, '0') << id;
    for (std::size_t j = 0; j < d; ++j) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, data.features(i, j));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << ',' << data.labels[i] << '\n';
  }
}

/// The same table ingestion would produce from the CSV.
inline FlowTable synth_table(const SynthSpec& spec) {
  auto data = synth_blobs(spec);
  FlowTable t;
  t.codec = LabelCodec::from_labels(data.labels);
  t.labels.reserve(data.labels.size());
  for (const auto& l : data.labels) t.labels.push_back(t.codec.encode(l));
  t.column_spec.feature_columns.clear();
  for (std::size_t j = 0; j < spec.d; ++j) t.column_spec.feature_columns.push_back(synth_column(j));
  t.features = std::move(data.features);
  return t;
}

}  // namespace ddosguard
