#pragma once

// Flat `key = value` run configuration. Every knob of the pipeline has one
// namespaced key; unknown keys are rejected.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ddosguard/common.hpp"
#include "ddosguard/dataset_ingest.hpp"
#include "ddosguard/gatekeeper.hpp"
#include "ddosguard/hybrid_stack.hpp"

namespace ddosguard {

struct ConfigError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct EvalConfig {
  std::size_t folds = 5;
  std::uint64_t seed = 42;
  bool stratified = true;
};

struct PolicyConfig {
  std::string benign_label = "BENIGN";
  std::map<std::string, Action> actions;  // empty: benign -> allow, rest -> block
  Action default_action = Action::Allow;
  FailureMode failure_mode = FailureMode::Open;
  double confidence_floor = 0.0;
};

struct ServeConfig {
  std::uint16_t port = 0;  // 0: stdin/stdout
  std::size_t workers = 1;
  std::size_t batch = 256;
};

struct DataConfig {
  ColumnSpec columns;
  std::size_t subsample = 0;  // 0: keep every row
  std::uint64_t subsample_seed = 42;
};

struct RunConfig {
  DataConfig data;
  HybridConfig model;
  EvalConfig eval;
  PolicyConfig policy;
  ServeConfig serve;

  GatePolicy gate_policy(const LabelCodec& codec) const {
    GatePolicy p = policy.actions.empty() ? GatePolicy::defaults_for(codec, policy.benign_label) : GatePolicy{};
    if (!policy.actions.empty()) {
      p.actions = policy.actions;
      p.benign_label = policy.benign_label;
    }
    p.default_action = policy.default_action;
    p.failure_mode = policy.failure_mode;
    p.confidence_floor = policy.confidence_floor;
    return p;
  }

  ServeOptions serve_options() const { return {serve.workers, serve.batch}; }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

template <class T>
T parse_unsigned(const std::string& key, std::string_view s) {
  s = trim_ascii(s);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + std::string(s) + "'");
  }
  if (v > std::numeric_limits<T>::max()) throw ConfigError("config: " + key + " is out of range");
  return static_cast<T>(v);
}

inline double parse_real(const std::string& key, std::string_view s) {
  const auto cell = parse_numeric_cell(s);
  if (cell.kind != CellKind::Number) {
    throw ConfigError("config: " + key + " expects a finite number, got '" + std::string(s) + "'");
  }
  return cell.value;
}

inline bool parse_bool(const std::string& key, std::string_view s) {
  s = trim_ascii(s);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + std::string(s) + "'");
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Key {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    auto uint_key = [&k](std::string name, std::string help, auto member) {
      k.push_back({name, std::move(help),
                   [member, name](RunConfig& c, std::string_view s) {
                     auto& field = member(c);
                     field = parse_unsigned<std::remove_reference_t<decltype(field)>>(name, s);
                   },
                   [member](const RunConfig& c) {
                     return std::to_string(member(c));
                   }});
    };
    auto real_key = [&k](std::string name, std::string help, auto member) {
      k.push_back({name, std::move(help),
                   [member, name](RunConfig& c, std::string_view s) { member(c) = parse_real(name, s); },
                   [member](const RunConfig& c) { return fmt_double(member(c)); }});
    };
    auto bool_key = [&k](std::string name, std::string help, auto member) {
      k.push_back({name, std::move(help),
                   [member, name](RunConfig& c, std::string_view s) { member(c) = parse_bool(name, s); },
                   [member](const RunConfig& c) {
                     return std::string(member(c) ? "true" : "false");
                   }});
    };

    k.push_back({"data.label_column", "label column name",
                 [](RunConfig& c, std::string_view s) { c.data.columns.label_column = std::string(trim_ascii(s)); },
                 [](const RunConfig& c) { return c.data.columns.label_column; }});
    k.push_back({"data.feature_columns", "comma list; empty = every non-dropped, non-label column",
                 [](RunConfig& c, std::string_view s) { c.data.columns.feature_columns = split_list(s); },
                 [](const RunConfig& c) { return join(c.data.columns.feature_columns); }});
    k.push_back({"data.drop_columns", "comma list of identifier columns removed before training",
                 [](RunConfig& c, std::string_view s) { c.data.columns.drop_columns = split_list(s); },
                 [](const RunConfig& c) { return join(c.data.columns.drop_columns); }});
    uint_key("data.subsample", "stratified row budget after cleaning; 0 = all rows",
             [](auto& c) -> auto& { return c.data.subsample; });
    uint_key("data.subsample_seed", "subsample seed",
             [](auto& c) -> auto& { return c.data.subsample_seed; });

    real_key("split.ratio", "training share of the hold-out split",
             [](auto& c) -> auto& { return c.model.split.ratio; });
    uint_key("split.seed", "hold-out split seed", [](auto& c) -> auto& { return c.model.split.seed; });
    bool_key("split.stratify", "stratify the hold-out split by class",
             [](auto& c) -> auto& { return c.model.split.stratify; });

    uint_key("extractor.filters", "conv filters F", [](auto& c) -> auto& { return c.model.extractor.filters; });
    uint_key("extractor.kernel", "conv kernel size N",
             [](auto& c) -> auto& { return c.model.extractor.kernel; });
    uint_key("extractor.seed", "conv weight seed", [](auto& c) -> auto& { return c.model.extractor.seed; });

    uint_key("forest.tree_count", "number of trees",
             [](auto& c) -> auto& { return c.model.forest.tree_count; });
    k.push_back({"forest.max_depth", "maximum tree depth; none = unlimited",
                 [](RunConfig& c, std::string_view s) {
                   if (trim_ascii(s) == "none") {
                     c.model.forest.max_depth.reset();
                   } else {
                     c.model.forest.max_depth = parse_unsigned<std::size_t>("forest.max_depth", s);
                   }
                 },
                 [](const RunConfig& c) {
                   return c.model.forest.max_depth ? std::to_string(*c.model.forest.max_depth) : std::string("none");
                 }});
    uint_key("forest.min_samples_split", "smallest node that may be split",
             [](auto& c) -> auto& { return c.model.forest.min_samples_split; });
    k.push_back({"forest.features_per_split", "features tried per split; auto = ceil(sqrt(d))",
                 [](RunConfig& c, std::string_view s) {
                   c.model.forest.features_per_split =
                       trim_ascii(s) == "auto" ? 0 : parse_unsigned<std::size_t>("forest.features_per_split", s);
                 },
                 [](const RunConfig& c) {
                   return c.model.forest.features_per_split == 0 ? std::string("auto")
                                                                 : std::to_string(c.model.forest.features_per_split);
                 }});
    bool_key("forest.bootstrap", "bootstrap-sample rows per tree",
             [](auto& c) -> auto& { return c.model.forest.bootstrap; });
    uint_key("forest.seed", "forest seed", [](auto& c) -> auto& { return c.model.forest.seed; });

    k.push_back({"mlp.hidden", "comma list of hidden layer widths; empty = none",
                 [](RunConfig& c, std::string_view s) {
                   c.model.mlp.hidden.clear();
                   for (const auto& w : split_list(s)) c.model.mlp.hidden.push_back(parse_unsigned<std::size_t>("mlp.hidden", w));
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (auto h : c.model.mlp.hidden) parts.push_back(std::to_string(h));
                   return join(parts);
                 }});
    real_key("mlp.learning_rate", "SGD step size", [](auto& c) -> auto& { return c.model.mlp.learning_rate; });
    uint_key("mlp.epochs", "training epochs", [](auto& c) -> auto& { return c.model.mlp.epochs; });
    uint_key("mlp.batch_size", "minibatch size", [](auto& c) -> auto& { return c.model.mlp.batch_size; });
    bool_key("mlp.shuffle", "reshuffle rows every epoch", [](auto& c) -> auto& { return c.model.mlp.shuffle; });
    uint_key("mlp.seed", "init and shuffle seed", [](auto& c) -> auto& { return c.model.mlp.seed; });

    uint_key("stack.folds", "out-of-fold folds for meta-features",
             [](auto& c) -> auto& { return c.model.stack.folds; });
    uint_key("stack.seed", "fold assignment seed", [](auto& c) -> auto& { return c.model.stack.seed; });
    real_key("stack.meta_learning_rate", "meta-learner step size",
             [](auto& c) -> auto& { return c.model.stack.meta_learning_rate; });
    uint_key("stack.meta_epochs", "meta-learner full-batch epochs",
             [](auto& c) -> auto& { return c.model.stack.meta_epochs; });
    bool_key("stack.passthrough", "also feed conv features to the meta-learner",
             [](auto& c) -> auto& { return c.model.stack.passthrough; });

    uint_key("eval.folds", "cross-validation folds", [](auto& c) -> auto& { return c.eval.folds; });
    uint_key("eval.seed", "cross-validation seed", [](auto& c) -> auto& { return c.eval.seed; });
    bool_key("eval.stratified", "stratified cross-validation folds",
             [](auto& c) -> auto& { return c.eval.stratified; });

    k.push_back({"policy.benign_label", "label that must be allowed",
                 [](RunConfig& c, std::string_view s) { c.policy.benign_label = std::string(trim_ascii(s)); },
                 [](const RunConfig& c) { return c.policy.benign_label; }});
    k.push_back({"policy.actions", "label:action comma list; empty = benign allow, rest block",
                 [](RunConfig& c, std::string_view s) {
                   c.policy.actions.clear();
                   for (const auto& item : split_list(s)) {
                     const auto colon = item.rfind(':');
                     if (colon == std::string::npos) throw ConfigError("config: policy.actions entry '" + item + "' lacks ':'");
                     const std::string label(trim_ascii(std::string_view(item).substr(0, colon)));
                     try {
                       c.policy.actions[label] = parse_action(trim_ascii(std::string_view(item).substr(colon + 1)));
                     } catch (const InvalidArgument& e) {
                       throw ConfigError(std::string("config: ") + e.what());
                     }
                   }
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> parts;
                   for (const auto& [label, action] : c.policy.actions) parts.push_back(label + ":" + to_string(action));
                   return join(parts);
                 }});
    k.push_back({"policy.default_action", "action for low-confidence or unmapped labels",
                 [](RunConfig& c, std::string_view s) {
                   try {
                     c.policy.default_action = parse_action(trim_ascii(s));
                   } catch (const InvalidArgument& e) {
                     throw ConfigError(std::string("config: ") + e.what());
                   }
                 },
                 [](const RunConfig& c) { return std::string(to_string(c.policy.default_action)); }});
    k.push_back({"policy.failure_mode", "open (allow) or closed (block) for malformed records",
                 [](RunConfig& c, std::string_view s) {
                   try {
                     c.policy.failure_mode = parse_failure_mode(trim_ascii(s));
                   } catch (const InvalidArgument& e) {
                     throw ConfigError(std::string("config: ") + e.what());
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.policy.failure_mode == FailureMode::Open ? "open" : "closed");
                 }});
    real_key("policy.confidence_floor", "below this the default action applies",
             [](auto& c) -> auto& { return c.policy.confidence_floor; });

    k.push_back({"serve.port", "TCP listen port; 0 = stdin/stdout",
                 [](RunConfig& c, std::string_view s) { c.serve.port = parse_unsigned<std::uint16_t>("serve.port", s); },
                 [](const RunConfig& c) { return std::to_string(c.serve.port); }});
    uint_key("serve.workers", "classification threads", [](auto& c) -> auto& { return c.serve.workers; });
    uint_key("serve.batch", "largest batch classified at once", [](auto& c) -> auto& { return c.serve.batch; });
    return k;
  }();
  return keys;
}

inline const Key& find_key(std::string_view name) {
  for (const auto& k : registry()) {
    if (k.name == name) return k;
  }
  throw ConfigError("config: unknown key '" + std::string(name) + "'");
}

}  // namespace detail

inline void set_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  detail::find_key(trim_ascii(key)).set(cfg, value);
}

inline std::string get_value(const RunConfig& cfg, std::string_view key) { return detail::find_key(key).get(cfg); }

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : detail::registry()) out.push_back(k.name);
  return out;
}

/// "key=value" override, as given on the command line.
inline void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("config: override '" + std::string(assignment) + "' lacks '='");
  set_value(cfg, assignment.substr(0, eq), trim_ascii(assignment.substr(eq + 1)));
}

/// Parses `key = value` lines; '#' starts a comment, blank lines are ignored.
inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& origin = "<config>") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim_ascii(line);
    if (body.empty()) continue;
    try {
      apply_override(cfg, body);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config: cannot open " + path);
  RunConfig cfg;
  apply_config_text(cfg, in, path);
  return cfg;
}

/// Effective configuration in the same format the loader accepts.
inline std::string dump_config(const RunConfig& cfg, bool with_help = false) {
  std::ostringstream out;
  for (const auto& k : detail::registry()) {
    if (with_help) out << "# " << k.help << '\n';
    out << k.name << " = " << k.get(cfg) << '\n';
  }
  return out.str();
}

/// Range checks that do not need the data.
inline void validate(const RunConfig& cfg) {
  const auto& m = cfg.model;
  if (!(m.split.ratio > 0.0 && m.split.ratio < 1.0)) throw ConfigError("config: split.ratio must lie in (0, 1)");
  if (m.extractor.filters < 1) throw ConfigError("config: extractor.filters must be >= 1");
  if (m.extractor.kernel < 1) throw ConfigError("config: extractor.kernel must be >= 1");
  if (m.forest.tree_count < 1) throw ConfigError("config: forest.tree_count must be >= 1");
  if (m.forest.max_depth && *m.forest.max_depth < 1) throw ConfigError("config: forest.max_depth must be >= 1");
  if (m.forest.min_samples_split < 2) throw ConfigError("config: forest.min_samples_split must be >= 2");
  if (m.forest.features_per_split > m.extractor.filters) {
    throw ConfigError("config: forest.features_per_split exceeds extractor.filters");
  }
  try {
    m.mlp.validate();
    m.stack.validate();
    cfg.data.columns.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.eval.folds < 2) throw ConfigError("config: eval.folds must be >= 2");
  if (!(cfg.policy.confidence_floor >= 0.0 && cfg.policy.confidence_floor <= 1.0)) {
    throw ConfigError("config: policy.confidence_floor must lie in [0, 1]");
  }
  if (cfg.serve.workers < 1) throw ConfigError("config: serve.workers must be >= 1");
  if (cfg.serve.batch < 1) throw ConfigError("config: serve.batch must be >= 1");
}

}  // namespace ddosguard
