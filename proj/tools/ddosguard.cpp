// ddosguard: ingest, train, evaluate, cross-validate, predict, serve and
// generate synthetic flow tables.
//
// Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.

#include <chrono>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddosguard/ddosguard.hpp"

namespace {

using namespace ddosguard;

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("-c,--config", o.config_path, "key = value configuration file");
  cmd->add_option("-s,--set", o.overrides, "key=value override (repeatable; wins over the file)");
}

RunConfig effective_config(const CommonOpts& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config_file(o.config_path);
  for (const auto& kv : o.overrides) apply_override(cfg, kv);
  validate(cfg);
  return cfg;
}

FlowTable load_table(const RunConfig& cfg, const std::string& path) {
  auto raw = load_csv(path, cfg.data.columns);
  auto cleaned = clean_and_encode(raw, cfg.data.columns);
  const auto& r = cleaned.report;
  std::cerr << "ingest: " << r.rows_in << " rows read, " << r.rows_out << " kept, " << r.rows_dropped_missing
            << " dropped (missing), " << r.rows_dropped_nonfinite << " dropped (non-finite), "
            << cleaned.table.column_spec.feature_columns.size() << " features, " << cleaned.table.class_count()
            << " classes\n";
  if (cfg.data.subsample > 0 && cfg.data.subsample < cleaned.table.size()) {
    cleaned.table = stratified_subsample(cleaned.table, cfg.data.subsample, cfg.data.subsample_seed);
    std::cerr << "ingest: stratified subsample to " << cleaned.table.size() << " rows\n";
  }
  return std::move(cleaned.table);
}

/// Class predictions of the forest, the MLP and the stacked model, in that order.
std::vector<std::vector<int>> predict_all(const HybridModel& model, const Matrix& raw) {
  const auto d = predict_hybrid_detailed(model, raw);
  return {argmax_rows(d.forest_proba), argmax_rows(d.mlp_proba), d.classes};
}

const char* const kModelNames[] = {"rf", "mlp", "hybrid"};

void emit_reports(const std::vector<ModelRow>& rows, const LabelCodec& codec, const std::string& ndjson_path) {
  std::ostringstream nd;
  for (const auto& r : rows) nd << to_ndjson(r).dump() << '\n';
  if (ndjson_path == "-") {
    std::cout << nd.str();
  } else {
    std::cout << format_table(rows) << '\n' << "hybrid per class:\n" << format_per_class(rows.back().metrics, codec);
    if (!ndjson_path.empty()) {
      const auto text = nd.str();
      write_file_atomic(ndjson_path, text);
    }
  }
  std::cout.flush();
}

std::vector<ModelRow> holdout_rows(const HybridModel& model, const Matrix& X, std::span<const int> y) {
  const auto preds = predict_all(model, X);
  std::vector<ModelRow> rows;
  for (std::size_t m = 0; m < 3; ++m) {
    rows.push_back({kModelNames[m], macro_report(confusion(y, preds[m], model.class_count())), std::nullopt});
  }
  return rows;
}

CrossValidation run_crossval(const FlowTable& table, const RunConfig& cfg) {
  const MultiTrainer trainer = [&](const Matrix& X, std::span<const int> y, const FoldContext&) {
    auto model = std::make_shared<HybridModel>(fit_hybrid_rows(X, y, table.codec, table.column_spec, cfg.model));
    return MultiPredictor([model](const Matrix& Q) { return predict_all(*model, Q); });
  };
  return kfold_cross_validate_many(table, trainer, 3, cfg.eval.folds, cfg.eval.seed, cfg.eval.stratified);
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

struct TrainOpts {
  CommonOpts common;
  std::string data, model_out, ndjson;
};

int cmd_train(const TrainOpts& o) {
  const RunConfig cfg = effective_config(o.common);
  const FlowTable table = load_table(cfg, o.data);
  const auto t0 = std::chrono::steady_clock::now();
  const HybridFit fit = fit_hybrid(table, cfg.model);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "train: fitted on " << fit.split.train_idx.size() << " rows in " << secs << " s\n";

  const auto rows = holdout_rows(fit.model, table.features.select_rows(fit.split.test_idx),
                                 select<int>(table.labels, fit.split.test_idx));
  const auto bytes = save(fit.model, o.model_out);
  std::cerr << "train: wrote " << bytes << " bytes to " << o.model_out << '\n';
  if (o.ndjson != "-") std::cout << "held-out rows: " << fit.split.test_idx.size() << '\n';
  emit_reports(rows, table.codec, o.ndjson);
  return 0;
}

struct EvalOpts {
  CommonOpts common;
  std::string data, model, ndjson;
  bool with_cv = false;
};

int cmd_evaluate(const EvalOpts& o) {
  const RunConfig cfg = effective_config(o.common);
  std::vector<ModelRow> rows;
  LabelCodec codec;
  std::optional<FlowTable> table;
  if (!o.model.empty()) {
    const HybridModel model = load(o.model);
    RunConfig data_cfg = cfg;
    data_cfg.data.columns = model.columns();
    FlowTable t = load_table(data_cfg, o.data);
    // Re-encode against the model's classes; rows with unseen labels are an error.
    std::vector<int> y;
    for (int id : t.labels) {
      const auto& label = t.codec.decode(id);
      const auto mapped = model.codec().find(label);
      if (!mapped) throw InvalidArgument("evaluate: label '" + label + "' is not a model class");
      y.push_back(*mapped);
    }
    rows = holdout_rows(model, t.features, y);
    codec = model.codec();
    if (o.ndjson != "-") std::cout << "evaluated rows: " << y.size() << '\n';
  } else {
    table = load_table(cfg, o.data);
    const HybridFit fit = fit_hybrid(*table, cfg.model);
    rows = holdout_rows(fit.model, table->features.select_rows(fit.split.test_idx),
                        select<int>(table->labels, fit.split.test_idx));
    codec = table->codec;
    if (o.ndjson != "-") std::cout << "held-out rows: " << fit.split.test_idx.size() << '\n';
    if (o.with_cv) {
      const auto cv = run_crossval(*table, cfg);
      for (std::size_t m = 0; m < 3; ++m) rows[m].cv = cv.reports[m];
    }
  }
  emit_reports(rows, codec, o.ndjson);
  return 0;
}

struct CrossvalOpts {
  CommonOpts common;
  std::string data, ndjson;
};

int cmd_crossval(const CrossvalOpts& o) {
  const RunConfig cfg = effective_config(o.common);
  const FlowTable table = load_table(cfg, o.data);
  const auto cv = run_crossval(table, cfg);
  std::vector<ModelRow> rows;
  for (std::size_t m = 0; m < 3; ++m) rows.push_back({kModelNames[m], macro_report(cv.pooled[m]), cv.reports[m]});
  if (o.ndjson != "-") {
    std::cout << cfg.eval.folds << "-fold cross-validation, pooled out-of-fold metrics\n";
    for (std::size_t m = 0; m < 3; ++m) {
      std::cout << std::left << std::setw(8) << kModelNames[m] << std::fixed << std::setprecision(4);
      for (double a : cv.reports[m].fold_accuracy) std::cout << ' ' << a;
      std::cout << "  mean " << cv.reports[m].mean << "  std " << cv.reports[m].stddev << '\n';
    }
    std::cout.unsetf(std::ios::floatfield);
    std::cout << '\n';
  }
  emit_reports(rows, table.codec, o.ndjson);
  return 0;
}

struct PredictOpts {
  std::string model, input, out;
};

int cmd_predict(const PredictOpts& o) {
  const HybridModel model = load(o.model);
  const auto& spec = model.columns();
  const RawTable raw = load_csv(o.input, spec, false);
  const auto label_col = raw.column(spec.label_column);
  std::vector<std::size_t> cols;
  for (const auto& f : spec.feature_columns) cols.push_back(*raw.column(f));

  std::vector<std::size_t> good;
  std::vector<std::string> problem(raw.rows.size());
  std::vector<double> values;
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    std::vector<double> row(cols.size());
    for (std::size_t j = 0; j < cols.size() && problem[i].empty(); ++j) {
      const auto cell = parse_numeric_cell(raw.rows[i][cols[j]]);
      if (cell.kind == CellKind::Missing) problem[i] = "missing value in " + spec.feature_columns[j];
      if (cell.kind == CellKind::NonFinite) problem[i] = "non-finite value in " + spec.feature_columns[j];
      row[j] = cell.value;
    }
    if (problem[i].empty()) {
      good.push_back(i);
      values.insert(values.end(), row.begin(), row.end());
    }
  }
  HybridPrediction pred;
  if (!good.empty()) pred = predict_hybrid_detailed(model, Matrix(good.size(), cols.size(), std::move(values)));

  std::ostringstream out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    nlohmann::json j;
    j["row"] = i;
    if (label_col) j["truth"] = std::string(trim_ascii(raw.rows[i][*label_col]));
    if (!problem[i].empty()) {
      j["error"] = problem[i];
    } else {
      const auto cls = static_cast<std::size_t>(pred.classes[k]);
      j["class"] = model.codec().decode(pred.classes[k]);
      j["confidence"] = pred.probabilities(k, cls);
      nlohmann::json probs = nlohmann::json::object();
      for (std::size_t c = 0; c < model.class_count(); ++c) {
        probs[model.codec().decode(static_cast<int>(c))] = pred.probabilities(k, c);
      }
      j["probabilities"] = std::move(probs);
      ++k;
    }
    out << j.dump() << '\n';
  }
  if (o.out.empty() || o.out == "-") {
    std::cout << out.str() << std::flush;
  } else {
    write_file_atomic(o.out, out.str());
  }
  std::cerr << "predict: " << good.size() << " rows classified, " << raw.rows.size() - good.size() << " rejected\n";
  return 0;
}

struct ServeOpts {
  CommonOpts common;
  std::string model;
  int port = -1;
  std::size_t workers = 0;
};

int cmd_serve(const ServeOpts& o) {
  RunConfig cfg = effective_config(o.common);
  if (o.port >= 0) cfg.serve.port = static_cast<std::uint16_t>(o.port);
  if (o.workers > 0) cfg.serve.workers = o.workers;
  const HybridModel model = load(o.model);
  const GatePolicy policy = cfg.gate_policy(model.codec());
  policy.validate_against(model.codec());

  RunSummary summary;
  if (cfg.serve.port == 0) {
    std::ios::sync_with_stdio(false);
    std::cin.tie(nullptr);
    summary = serve_stream(std::cin, std::cout, model, policy, cfg.serve_options());
  } else {
    summary = serve_tcp(cfg.serve.port, model, policy, cfg.serve_options(), 0, [](std::uint16_t p) {
      std::cerr << "serve: listening on port " << p << std::endl;
    });
  }
  std::cerr << to_json(summary).dump() << '\n';
  return 0;
}

struct SynthOpts {
  SynthSpec spec;
  std::string out;
};

int cmd_synth(SynthOpts o) {
  o.spec.validate();
  std::ostringstream text;
  write_synth_csv(synth_blobs(o.spec), text);
  if (o.out.empty() || o.out == "-") {
    std::cout << text.str() << std::flush;
  } else {
    write_file_atomic(o.out, text.str());
  }
  return 0;
}

int cmd_config(const CommonOpts& o, bool with_help) {
  std::cout << dump_config(effective_config(o), with_help);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiclass DDoS flow classifier: CNN features, random forest + MLP, stacked meta-learner"};
  app.require_subcommand(1);

  TrainOpts train;
  auto* c_train = app.add_subcommand("train", "fit the hybrid model and save it; reports held-out metrics");
  add_common(c_train, train.common);
  c_train->add_option("-d,--data", train.data, "flow CSV")->required();
  c_train->add_option("-o,--model-out", train.model_out, "model file to write")->required();
  c_train->add_option("--ndjson", train.ndjson, "also write NDJSON report rows here ('-' = stdout only)");

  EvalOpts eval;
  auto* c_eval = app.add_subcommand("evaluate", "rf / mlp / hybrid comparison report");
  add_common(c_eval, eval.common);
  c_eval->add_option("-d,--data", eval.data, "flow CSV")->required();
  c_eval->add_option("-m,--model", eval.model, "evaluate this saved model on every row instead of fitting");
  c_eval->add_option("--ndjson", eval.ndjson, "also write NDJSON report rows here ('-' = stdout only)");
  c_eval->add_flag("--cv", eval.with_cv, "add the cross-validation column (fit mode only)");

  CrossvalOpts cv;
  auto* c_cv = app.add_subcommand("crossval", "k-fold cross-validation of rf / mlp / hybrid");
  add_common(c_cv, cv.common);
  c_cv->add_option("-d,--data", cv.data, "flow CSV")->required();
  c_cv->add_option("--ndjson", cv.ndjson, "also write NDJSON report rows here ('-' = stdout only)");

  PredictOpts pred;
  auto* c_pred = app.add_subcommand("predict", "classify CSV rows with a saved model (NDJSON out)");
  c_pred->add_option("-m,--model", pred.model, "model file")->required();
  c_pred->add_option("-i,--input", pred.input, "flow CSV; the label column is optional")->required();
  c_pred->add_option("-o,--out", pred.out, "output file (default stdout)");

  ServeOpts serve;
  auto* c_serve = app.add_subcommand("serve", "gatekeeper: NDJSON flow records in, verdicts out");
  add_common(c_serve, serve.common);
  c_serve->add_option("-m,--model", serve.model, "model file")->required();
  c_serve->add_option("-p,--port", serve.port, "TCP port (overrides serve.port; 0 = stdin/stdout)")
      ->check(CLI::Range(0, 65535));
  c_serve->add_option("-w,--workers", serve.workers, "classification threads (overrides serve.workers)");

  SynthOpts synth;
  auto* c_synth = app.add_subcommand("synth", "write a seeded Gaussian-blob flow CSV");
  c_synth->add_option("-n,--rows", synth.spec.n, "rows")->capture_default_str();
  c_synth->add_option("--features", synth.spec.d, "feature columns")->capture_default_str();
  c_synth->add_option("--classes", synth.spec.classes, "classes")->capture_default_str();
  c_synth->add_option("--separation", synth.spec.separation, "scale of class centres")->capture_default_str();
  c_synth->add_option("--seed", synth.spec.seed, "seed")->capture_default_str();
  c_synth->add_option("-o,--out", synth.out, "output CSV (default stdout)");

  CommonOpts cfg_opts;
  bool cfg_help = false;
  auto* c_cfg = app.add_subcommand("config", "print the effective configuration");
  add_common(c_cfg, cfg_opts);
  c_cfg->add_flag("--describe", cfg_help, "annotate every key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_train) return cmd_train(train);
    if (*c_eval) return cmd_evaluate(eval);
    if (*c_cv) return cmd_crossval(cv);
    if (*c_pred) return cmd_predict(pred);
    if (*c_serve) return cmd_serve(serve);
    if (*c_synth) return cmd_synth(synth);
    if (*c_cfg) return cmd_config(cfg_opts, cfg_help);
  } catch (const TransportError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const PolicyMismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ModelFormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
