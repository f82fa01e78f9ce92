#pragma once

// Single-file container for a HybridModel.
//
// Layout (all integers little-endian):
//   0        4 bytes   magic "DDHM"
//   4        u32       format version
//   8        u64       metadata length M
//   16       u64       payload length P
//   24       M bytes   metadata, UTF-8 JSON (labels, columns, config,
//                      layout and the section directory)
//   24+M     P bytes   numeric sections, IEEE-754 binary64 LE, back to back
//                      in directory order; directory offsets are relative to
//                      the payload start and counted in bytes
//   24+M+P   u32       CRC-32 (IEEE 802.3) of every preceding byte
//
// Identical models serialize to identical bytes.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

#include "json.hpp"

#include "ddosguard/common.hpp"
#include "ddosguard/hybrid_stack.hpp"

namespace ddosguard {

struct ModelFormatError : Error {
  using Error::Error;
};
struct BadMagicError : ModelFormatError {
  using ModelFormatError::ModelFormatError;
};
struct UnsupportedVersionError : ModelFormatError {
  using ModelFormatError::ModelFormatError;
};
struct CrcMismatchError : ModelFormatError {
  using ModelFormatError::ModelFormatError;
};
struct TruncatedError : ModelFormatError {
  using ModelFormatError::ModelFormatError;
};

inline constexpr std::array<std::uint8_t, 4> kModelMagic{'D', 'D', 'H', 'M'};
inline constexpr std::size_t kHeaderBytes = 24;

/// Reflected CRC-32, polynomial 0xEDB88320, init and final xor 0xFFFFFFFF.
inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1U) ? 0xEDB88320U ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFU;
  for (auto b : bytes) crc = table[(crc ^ b) & 0xFFU] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFU;
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

class SectionWriter {
 public:
  void add(const std::string& name, std::span<const double> values) {
    directory_.push_back({{"name", name}, {"offset", payload_.size()}, {"count", values.size()}});
    for (double v : values) put_le(payload_, std::bit_cast<std::uint64_t>(v), 8);
  }
  template <typename Int>
  void add_ints(const std::string& name, std::span<const Int> values) {
    std::vector<double> tmp(values.begin(), values.end());
    add(name, tmp);
  }
  nlohmann::json& directory() noexcept { return directory_; }
  const std::vector<std::uint8_t>& payload() const noexcept { return payload_; }

 private:
  nlohmann::json directory_ = nlohmann::json::array();
  std::vector<std::uint8_t> payload_;
};

class SectionReader {
 public:
  SectionReader(const nlohmann::json& directory, std::span<const std::uint8_t> payload) {
    std::uint64_t expected_offset = 0;
    for (const auto& entry : directory) {
      const auto name = entry.at("name").get<std::string>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (offset != expected_offset) throw ModelFormatError("model: section '" + name + "' is not contiguous");
      if (count > (payload.size() - std::min<std::uint64_t>(offset, payload.size())) / 8) {
        throw TruncatedError("model: section '" + name + "' runs past the payload");
      }
      std::vector<double> values(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        values[i] = std::bit_cast<double>(get_le(payload, offset + 8 * i, 8));
      }
      if (!sections_.emplace(name, std::move(values)).second) {
        throw ModelFormatError("model: duplicate section '" + name + "'");
      }
      expected_offset = offset + 8 * count;
    }
    if (expected_offset != payload.size()) throw ModelFormatError("model: payload has unreferenced bytes");
  }

  const std::vector<double>& get(const std::string& name, std::optional<std::size_t> expected = std::nullopt) const {
    auto it = sections_.find(name);
    if (it == sections_.end()) throw ModelFormatError("model: missing section '" + name + "'");
    if (expected && it->second.size() != *expected) {
      throw ModelFormatError("model: section '" + name + "' has the wrong length");
    }
    return it->second;
  }

  template <typename Int>
  std::vector<Int> get_ints(const std::string& name, std::optional<std::size_t> expected = std::nullopt) const {
    const auto& raw = get(name, expected);
    std::vector<Int> out;
    out.reserve(raw.size());
    for (double v : raw) {
      const auto i = static_cast<Int>(v);
      if (static_cast<double>(i) != v) throw ModelFormatError("model: section '" + name + "' holds a non-integer");
      out.push_back(i);
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<double>> sections_;
};

inline nlohmann::json config_to_json(const HybridConfig& c) {
  nlohmann::json j;
  j["split"] = {{"ratio", c.split.ratio}, {"seed", c.split.seed}, {"stratify", c.split.stratify}};
  j["extractor"] = {{"filters", c.extractor.filters}, {"kernel", c.extractor.kernel}, {"seed", c.extractor.seed}};
  j["forest"] = {{"tree_count", c.forest.tree_count},
                 {"max_depth", c.forest.max_depth ? nlohmann::json(*c.forest.max_depth) : nlohmann::json(nullptr)},
                 {"min_samples_split", c.forest.min_samples_split},
                 {"features_per_split", c.forest.features_per_split},
                 {"bootstrap", c.forest.bootstrap},
                 {"seed", c.forest.seed}};
  j["mlp"] = {{"hidden", c.mlp.hidden},         {"learning_rate", c.mlp.learning_rate},
              {"epochs", c.mlp.epochs},         {"batch_size", c.mlp.batch_size},
              {"seed", c.mlp.seed},             {"shuffle", c.mlp.shuffle}};
  j["stack"] = {{"folds", c.stack.folds},
                {"seed", c.stack.seed},
                {"meta_learning_rate", c.stack.meta_learning_rate},
                {"meta_epochs", c.stack.meta_epochs},
                {"passthrough", c.stack.passthrough}};
  return j;
}

inline HybridConfig config_from_json(const nlohmann::json& j) {
  HybridConfig c;
  const auto& s = j.at("split");
  c.split = {s.at("ratio").get<double>(), s.at("seed").get<std::uint64_t>(), s.at("stratify").get<bool>()};
  const auto& e = j.at("extractor");
  c.extractor = {e.at("filters").get<std::size_t>(), e.at("kernel").get<std::size_t>(),
                 e.at("seed").get<std::uint64_t>()};
  const auto& f = j.at("forest");
  c.forest.tree_count = f.at("tree_count").get<std::size_t>();
  if (!f.at("max_depth").is_null()) c.forest.max_depth = f.at("max_depth").get<std::size_t>();
  c.forest.min_samples_split = f.at("min_samples_split").get<std::size_t>();
  c.forest.features_per_split = f.at("features_per_split").get<std::size_t>();
  c.forest.bootstrap = f.at("bootstrap").get<bool>();
  c.forest.seed = f.at("seed").get<std::uint64_t>();
  const auto& m = j.at("mlp");
  c.mlp.hidden = m.at("hidden").get<std::vector<std::size_t>>();
  c.mlp.learning_rate = m.at("learning_rate").get<double>();
  c.mlp.epochs = m.at("epochs").get<std::size_t>();
  c.mlp.batch_size = m.at("batch_size").get<std::size_t>();
  c.mlp.seed = m.at("seed").get<std::uint64_t>();
  c.mlp.shuffle = m.at("shuffle").get<bool>();
  const auto& st = j.at("stack");
  c.stack.folds = st.at("folds").get<std::size_t>();
  c.stack.seed = st.at("seed").get<std::uint64_t>();
  c.stack.meta_learning_rate = st.at("meta_learning_rate").get<double>();
  c.stack.meta_epochs = st.at("meta_epochs").get<std::size_t>();
  c.stack.passthrough = st.at("passthrough").get<bool>();
  return c;
}

inline void write_mlp(SectionWriter& w, nlohmann::json& layout, const std::string& prefix, const MlpModel& m) {
  auto layers = nlohmann::json::array();
  for (std::size_t l = 0; l < m.layers().size(); ++l) {
    const auto& L = m.layers()[l];
    layers.push_back({{"in", L.in()}, {"out", L.out()}, {"activation", to_string(L.activation)}});
    w.add(prefix + "." + std::to_string(l) + ".weights", L.weights.data());
    w.add(prefix + "." + std::to_string(l) + ".biases", L.biases);
  }
  layout[prefix + "_layers"] = layers;
  w.add(prefix + ".train_loss", m.train_log().loss);
  w.add(prefix + ".train_accuracy", m.train_log().accuracy);
}

inline MlpModel read_mlp(const SectionReader& r, const nlohmann::json& layout, const std::string& prefix) {
  std::vector<LayerParams> layers;
  const auto& spec = layout.at(prefix + "_layers");
  for (std::size_t l = 0; l < spec.size(); ++l) {
    const auto in = spec[l].at("in").get<std::size_t>();
    const auto out = spec[l].at("out").get<std::size_t>();
    const auto act = spec[l].at("activation").get<std::string>();
    if (act != "relu" && act != "softmax") throw ModelFormatError("model: unknown activation " + act);
    const auto key = prefix + "." + std::to_string(l);
    layers.push_back({Matrix(out, in, r.get(key + ".weights", in * out)), r.get(key + ".biases", out),
                      act == "relu" ? Activation::Relu : Activation::Softmax});
  }
  TrainLog log{r.get(prefix + ".train_loss"), r.get(prefix + ".train_accuracy")};
  return MlpModel(std::move(layers), std::move(log));
}

}  // namespace detail

/// Serializes the model into the container format described at the top.
inline std::vector<std::uint8_t> serialize(const HybridModel& model) {
  detail::SectionWriter w;
  nlohmann::json layout;

  const auto& st = model.standardizer();
  w.add("standardizer.means", st.means());
  w.add("standardizer.stds", st.stds());
  const double fitted_on = static_cast<double>(st.fitted_on());
  w.add("standardizer.fitted_on", std::span<const double>(&fitted_on, 1));

  const auto& ex = model.extractor();
  w.add("extractor.weights", ex.weights());
  w.add("extractor.biases", ex.biases());

  const auto& forest = model.forest();
  std::vector<double> tree_sizes, nodes, counts;
  for (const auto& t : forest.trees()) {
    tree_sizes.push_back(static_cast<double>(t.nodes().size()));
    for (const auto& nd : t.nodes()) {
      nodes.insert(nodes.end(), {static_cast<double>(nd.feature), nd.threshold, static_cast<double>(nd.left),
                                 static_cast<double>(nd.right), static_cast<double>(nd.class_id)});
    }
    counts.insert(counts.end(), t.counts().begin(), t.counts().end());
  }
  w.add("forest.tree_sizes", tree_sizes);
  w.add("forest.nodes", nodes);
  w.add("forest.counts", counts);
  layout["forest_trees"] = forest.trees().size();
  layout["forest_features"] = forest.feature_count();

  detail::write_mlp(w, layout, "mlp", model.mlp());
  detail::write_mlp(w, layout, "meta", model.meta().model());

  nlohmann::json meta;
  meta["classes"] = model.codec().classes();
  meta["columns"] = {{"features", model.columns().feature_columns},
                     {"label", model.columns().label_column},
                     {"drop", model.columns().drop_columns}};
  meta["config"] = detail::config_to_json(model.config());
  meta["extractor_seed"] = ex.init_seed();
  meta["layout"] = layout;
  meta["sections"] = w.directory();
  const std::string meta_text = meta.dump();

  std::vector<std::uint8_t> out(kModelMagic.begin(), kModelMagic.end());
  detail::put_le(out, model.format_version(), 4);
  detail::put_le(out, meta_text.size(), 8);
  detail::put_le(out, w.payload().size(), 8);
  out.insert(out.end(), meta_text.begin(), meta_text.end());
  out.insert(out.end(), w.payload().begin(), w.payload().end());
  detail::put_le(out, crc32(out), 4);
  return out;
}

inline HybridModel deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw TruncatedError("model: file shorter than the fixed header");
  if (!std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin())) {
    throw BadMagicError("model: bad magic (expected DDHM)");
  }
  const auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 4, 4));
  if (version != HybridModel::kFormatVersion) {
    throw UnsupportedVersionError("model: unsupported format version " + std::to_string(version));
  }
  if (bytes.size() < kHeaderBytes + 4) throw TruncatedError("model: file shorter than the fixed header");
  const auto meta_len = detail::get_le(bytes, 8, 8);
  const auto payload_len = detail::get_le(bytes, 16, 8);
  const std::uint64_t body = bytes.size() - kHeaderBytes - 4;
  if (meta_len > body || payload_len > body - meta_len) throw TruncatedError("model: file is truncated");
  if (meta_len + payload_len != body) throw ModelFormatError("model: trailing bytes after payload");
  const auto stored_crc = static_cast<std::uint32_t>(detail::get_le(bytes, bytes.size() - 4, 4));
  if (crc32(bytes.first(bytes.size() - 4)) != stored_crc) throw CrcMismatchError("model: CRC-32 mismatch");

  try {
    const auto meta_bytes = bytes.subspan(kHeaderBytes, meta_len);
    const auto meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    const detail::SectionReader r(meta.at("sections"), bytes.subspan(kHeaderBytes + meta_len, payload_len));
    const auto& layout = meta.at("layout");

    const auto classes = meta.at("classes").get<std::vector<std::string>>();
    auto codec = LabelCodec::from_labels(classes);
    if (codec.classes() != classes) throw ModelFormatError("model: class list is not sorted and distinct");
    const std::size_t C = classes.size();

    ColumnSpec columns;
    columns.feature_columns = meta.at("columns").at("features").get<std::vector<std::string>>();
    columns.label_column = meta.at("columns").at("label").get<std::string>();
    columns.drop_columns = meta.at("columns").at("drop").get<std::vector<std::string>>();
    const HybridConfig config = detail::config_from_json(meta.at("config"));
    const std::size_t d = columns.feature_columns.size();

    const auto fitted = r.get_ints<std::size_t>("standardizer.fitted_on", 1);
    Standardizer standardizer(r.get("standardizer.means", d), r.get("standardizer.stds", d), fitted.front());

    const std::size_t F = config.extractor.filters, N = config.extractor.kernel;
    ConvExtractor extractor(F, N, r.get("extractor.weights", F * N), r.get("extractor.biases", F),
                            meta.at("extractor_seed").get<std::uint64_t>());

    const auto tree_count = layout.at("forest_trees").get<std::size_t>();
    const auto sizes = r.get_ints<std::size_t>("forest.tree_sizes", tree_count);
    std::size_t total_nodes = 0;
    for (auto s : sizes) total_nodes += s;
    const auto& nodes = r.get("forest.nodes", total_nodes * 5);
    const auto counts = r.get_ints<std::uint32_t>("forest.counts", total_nodes * C);
    std::vector<DecisionTree> trees;
    std::size_t at = 0;
    for (auto s : sizes) {
      std::vector<TreeNode> tn(s);
      for (std::size_t i = 0; i < s; ++i) {
        const double* p = nodes.data() + (at + i) * 5;
        tn[i] = {static_cast<int>(p[0]), p[1], static_cast<int>(p[2]), static_cast<int>(p[3]), static_cast<int>(p[4])};
      }
      std::vector<std::uint32_t> tc(counts.begin() + static_cast<std::ptrdiff_t>(at * C),
                                    counts.begin() + static_cast<std::ptrdiff_t>((at + s) * C));
      trees.emplace_back(std::move(tn), std::move(tc), C);
      at += s;
    }
    ForestModel forest(std::move(trees), config.forest, C, layout.at("forest_features").get<std::size_t>());

    MlpModel mlp = detail::read_mlp(r, layout, "mlp");
    MetaLearner metal(detail::read_mlp(r, layout, "meta"));
    return HybridModel(std::move(codec), std::move(columns), config, std::move(standardizer), std::move(extractor),
                       std::move(forest), std::move(mlp), std::move(metal));
  } catch (const ModelFormatError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("model: malformed metadata: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ModelFormatError(std::string("model: inconsistent contents: ") + e.what());
  }
}

/// Writes `bytes` to `path` via a temporary sibling and rename, so readers
/// never observe a partial file and a failed write leaves nothing behind.
inline void write_file_atomic(const std::string& path, std::span<const char> bytes) {
  const std::filesystem::path target(path);
  auto tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write file: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw InputError("failed writing file: " + path);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw InputError("cannot move file into place: " + path + ": " + ec.message());
  }
}

/// Writes atomically; returns the byte count.
inline std::size_t save(const HybridModel& model, const std::string& path) {
  const auto bytes = serialize(model);
  write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  return bytes.size();
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline HybridModel load(const std::string& path) { return deserialize(read_file_bytes(path)); }

}  // namespace ddosguard
