#pragma once

// Streaming detect-and-mitigate loop: NDJSON flow records in, one allow/block
// verdict per record out, in input order.
//
// Input line:   {"id": "<string>", "features": {"<column>": <number>, ...}}
// Output line:  {"id", "class", "confidence", "action", "reason", "us",
//                "model_version"}

#include <chrono>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/asio.hpp>

#include "json.hpp"

#include "ddosguard/common.hpp"
#include "ddosguard/dataset_ingest.hpp"
#include "ddosguard/hybrid_stack.hpp"

namespace ddosguard {

enum class Action { Allow, Block, Error };
enum class FailureMode { Open, Closed };

inline const char* to_string(Action a) {
  switch (a) {
    case Action::Allow: return "allow";
    case Action::Block: return "block";
    case Action::Error: return "error";
  }
  return "error";
}

inline Action parse_action(std::string_view s) {
  if (s == "allow") return Action::Allow;
  if (s == "block") return Action::Block;
  throw InvalidArgument("policy: unknown action '" + std::string(s) + "' (expected allow or block)");
}

inline FailureMode parse_failure_mode(std::string_view s) {
  if (s == "open") return FailureMode::Open;
  if (s == "closed") return FailureMode::Closed;
  throw InvalidArgument("policy: unknown failure mode '" + std::string(s) + "' (expected open or closed)");
}

struct PolicyMismatchError : Error {
  using Error::Error;
};

struct GatePolicy {
  std::map<std::string, Action> actions;  // class label -> allow/block
  Action default_action = Action::Allow;   // low-confidence and unmapped labels
  FailureMode failure_mode = FailureMode::Open;
  double confidence_floor = 0.0;
  std::string benign_label = "BENIGN";

  /// benign -> allow, every other class -> block.
  static GatePolicy defaults_for(const LabelCodec& codec, std::string benign = "BENIGN") {
    GatePolicy p;
    p.benign_label = std::move(benign);
    for (const auto& label : codec.classes()) {
      p.actions[label] = label == p.benign_label ? Action::Allow : Action::Block;
    }
    return p;
  }

  /// Every model class must be mapped, no mapped label may be unknown to the
  /// model, and the benign label (when the model has one) must be allowed.
  void validate_against(const LabelCodec& codec) const {
    if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0)) {
      throw PolicyMismatchError("policy: confidence floor must lie in [0, 1]");
    }
    for (const auto& label : codec.classes()) {
      if (!actions.contains(label)) throw PolicyMismatchError("policy: model class '" + label + "' has no action");
    }
    for (const auto& [label, action] : actions) {
      if (!codec.find(label)) throw PolicyMismatchError("policy: label '" + label + "' is not a model class");
      if (action == Action::Error) throw PolicyMismatchError("policy: 'error' is not a configurable action");
    }
    if (codec.find(benign_label) && actions.at(benign_label) != Action::Allow) {
      throw PolicyMismatchError("policy: benign label '" + benign_label + "' must map to allow");
    }
  }
};

struct VerdictRecord {
  std::string id;
  std::string predicted_class;
  double confidence = 0.0;
  Action action = Action::Allow;
  std::string reason;
  double micros = 0.0;
  std::uint32_t model_version = 0;
};

inline nlohmann::json to_json(const VerdictRecord& v) {
  return {{"id", v.id},         {"class", v.predicted_class}, {"confidence", v.confidence},
          {"action", to_string(v.action)}, {"reason", v.reason}, {"us", v.micros},
          {"model_version", v.model_version}};
}

/// Total: every input combination yields a verdict.
inline VerdictRecord decide(const GatePolicy& policy, const std::string& label, double confidence, bool malformed) {
  VerdictRecord v;
  if (malformed) {
    v.action = policy.failure_mode == FailureMode::Open ? Action::Allow : Action::Block;
    v.reason = "malformed";
    return v;
  }
  v.predicted_class = label;
  v.confidence = confidence;
  if (confidence < policy.confidence_floor) {
    v.action = policy.default_action;
    v.reason = "low-confidence";
    return v;
  }
  auto it = policy.actions.find(label);
  v.action = it == policy.actions.end() ? policy.default_action : it->second;
  v.reason = label;
  return v;
}

// ---------------------------------------------------------------------------
// per-record pipeline
// ---------------------------------------------------------------------------

/// Standardized feature vector, or the reason the record is malformed.
struct LiveFeatures {
  std::vector<double> standardized;
  std::optional<std::string> problem;
};

/// Pulls the model's feature columns out of a record's "features" object
/// (numbers, or strings that pass the ingest numeric rule) and applies the
/// model's Standardizer.
inline LiveFeatures preprocess_live(const nlohmann::json& features, const HybridModel& model) {
  LiveFeatures out;
  if (!features.is_object()) {
    out.problem = "features is not an object";
    return out;
  }
  const auto& cols = model.columns().feature_columns;
  std::vector<double> raw(cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    auto it = features.find(cols[j]);
    if (it == features.end()) {
      out.problem = "missing column " + cols[j];
      return out;
    }
    double v = 0.0;
    if (it->is_number()) {
      v = it->get<double>();
    } else if (it->is_string()) {
      const auto cell = parse_numeric_cell(it->get_ref<const std::string&>());
      if (cell.kind != CellKind::Number) {
        out.problem = "non-numeric value in " + cols[j];
        return out;
      }
      v = cell.value;
    } else {
      out.problem = "non-numeric value in " + cols[j];
      return out;
    }
    if (!std::isfinite(v)) {
      out.problem = "non-finite value in " + cols[j];
      return out;
    }
    raw[j] = v;
  }
  out.standardized.resize(raw.size());
  model.standardizer().apply(raw, out.standardized);
  return out;
}

struct FlowClass {
  std::string label;
  double confidence = 0.0;
};

/// Classifies one standardized record; confidence is the max meta probability.
inline FlowClass classify_flow(const HybridModel& model, std::span<const double> standardized) {
  const Matrix row(1, standardized.size(), std::vector<double>(standardized.begin(), standardized.end()));
  if (row.cols() != model.raw_width()) throw InvalidArgument("gatekeeper: feature vector width mismatch");
  const auto p = predict_standardized(model, row);
  const int cls = p.classes.front();
  return {model.codec().decode(cls), p.probabilities(0, static_cast<std::size_t>(cls))};
}

/// Full handling of one input line.
inline VerdictRecord process_line(std::string_view line, const HybridModel& model, const GatePolicy& policy) {
  const auto start = std::chrono::steady_clock::now();
  std::string id;
  VerdictRecord v;
  try {
    const auto record = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
    std::optional<std::string> problem;
    LiveFeatures live;
    if (record.is_discarded() || !record.is_object()) {
      problem = "not a JSON object";
    } else {
      auto id_it = record.find("id");
      if (id_it != record.end() && id_it->is_string()) id = id_it->get<std::string>();
      if (id_it == record.end() || !id_it->is_string()) {
        problem = "id missing or not a string";
      } else if (auto f = record.find("features"); f == record.end()) {
        problem = "features missing";
      } else {
        live = preprocess_live(*f, model);
        problem = live.problem;
      }
    }
    if (problem) {
      v = decide(policy, {}, 0.0, true);
    } else {
      const auto fc = classify_flow(model, live.standardized);
      v = decide(policy, fc.label, fc.confidence, false);
    }
  } catch (const std::exception& e) {
    v = VerdictRecord{};
    v.action = Action::Error;
    v.reason = std::string("internal: ") + e.what();
  }
  v.id = std::move(id);
  v.model_version = model.format_version();
  v.micros = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  return v;
}

// ---------------------------------------------------------------------------
// stream loop
// ---------------------------------------------------------------------------

struct ServeOptions {
  std::size_t workers = 1;
  std::size_t max_batch = 256;
};

struct RunSummary {
  std::size_t records = 0;
  std::size_t allows = 0;
  std::size_t blocks = 0;
  std::size_t errors = 0;  // malformed records and internal failures
  double seconds = 0.0;

  double throughput() const { return seconds > 0.0 ? static_cast<double>(records) / seconds : 0.0; }
};

inline nlohmann::json to_json(const RunSummary& s) {
  return {{"records", s.records}, {"allows", s.allows}, {"blocks", s.blocks}, {"errors", s.errors},
          {"seconds", s.seconds}, {"throughput", s.throughput()}};
}

struct TransportError : Error {
  using Error::Error;
};

/// Reads newline-delimited records and writes one verdict line per input
/// line, in input order. Lines already buffered are classified as a batch
/// across `workers` threads; output is flushed after each batch.
inline RunSummary serve_stream(std::istream& in, std::ostream& out, const HybridModel& model,
                               const GatePolicy& policy, const ServeOptions& opts = {}) {
  policy.validate_against(model.codec());
  RunSummary summary;
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> batch;
  std::vector<VerdictRecord> verdicts;
  std::string line;
  for (;;) {
    batch.clear();
    while (batch.size() < std::max<std::size_t>(1, opts.max_batch)) {
      if (!std::getline(in, line)) break;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      batch.push_back(line);
      if (in.rdbuf()->in_avail() <= 0) break;
    }
    if (in.bad()) throw TransportError("gatekeeper: input stream failure");
    if (batch.empty()) break;
    verdicts.assign(batch.size(), {});
    parallel_for(
        batch.size(), [&](std::size_t i) { verdicts[i] = process_line(batch[i], model, policy); }, opts.workers);
    for (const auto& v : verdicts) {
      ++summary.records;
      if (v.reason == "malformed" || v.action == Action::Error) ++summary.errors;
      if (v.action == Action::Allow) ++summary.allows;
      if (v.action == Action::Block) ++summary.blocks;
      out << to_json(v).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
    out.flush();
    if (!out) throw TransportError("gatekeeper: output stream failure");
  }
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

/// TCP listen mode: each accepted connection is one record stream with the
/// same framing as stdin/stdout. Connections are served one at a time.
/// `on_listening` receives the bound port (useful with port 0).
inline RunSummary serve_tcp(std::uint16_t port, const HybridModel& model, const GatePolicy& policy,
                            const ServeOptions& opts, std::size_t max_connections = 0,
                            const std::function<void(std::uint16_t)>& on_listening = {}) {
  policy.validate_against(model.codec());
  using boost::asio::ip::tcp;
  RunSummary total;
  try {
    boost::asio::io_context io;
    tcp::acceptor acceptor(io, tcp::endpoint(tcp::v4(), port));
    if (on_listening) on_listening(acceptor.local_endpoint().port());
    for (std::size_t served = 0; max_connections == 0 || served < max_connections; ++served) {
      tcp::socket socket(io);
      acceptor.accept(socket);
      tcp::iostream stream(std::move(socket));
      std::istream in(stream.rdbuf());
      std::ostream out(stream.rdbuf());
      const auto s = serve_stream(in, out, model, policy, opts);
      stream.rdbuf()->shutdown(tcp::socket::shutdown_send);
      total.records += s.records;
      total.allows += s.allows;
      total.blocks += s.blocks;
      total.errors += s.errors;
      total.seconds += s.seconds;
    }
  } catch (const boost::system::system_error& e) {
    throw TransportError(std::string("gatekeeper: tcp transport failure: ") + e.what());
  }
  return total;
}

}  // namespace ddosguard
