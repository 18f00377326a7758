#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mgtd/backends.hpp"
#include "mgtd/baseline.hpp"
#include "mgtd/config.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/digest.hpp"
#include "mgtd/error.hpp"
#include "mgtd/evaluation.hpp"
#include "mgtd/promptkit.hpp"
#include "mgtd/remote.hpp"
#include "mgtd/stylometry.hpp"
#include "mgtd/text.hpp"
#include "mgtd/version.hpp"

namespace mgtd::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_data = 2,
  exit_backend = 3,
};

// Per-command overrides taken from flags.
struct CommandOptions {
  std::optional<std::string> split;
  std::optional<std::string> dataset;  // path for the selected split
  std::optional<std::string> predictions;
  std::optional<std::string> predictions_a;
  std::optional<std::string> predictions_b;
  std::optional<std::string> model;
};

namespace fs = std::filesystem;

namespace detail {

inline std::string out_path(const RunConfig& cfg, const std::string& file) {
  return (fs::path(cfg.output_dir) / file).string();
}

inline std::string split_path(const RunConfig& cfg, const std::string& split) {
  auto it = cfg.splits.find(split);
  if (it == cfg.splits.end()) {
    throw ConfigError("no dataset configured for split '" + split + "'");
  }
  return it->second;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Adds or replaces this command's entry in <out>/manifest.json.
inline void record_run(const RunConfig& cfg, const std::string& command,
                       const std::optional<std::string>& split,
                       const std::vector<std::string>& inputs,
                       const std::vector<std::string>& outputs) {
  const auto path = out_path(cfg, "manifest.json");
  nlohmann::json manifest;
  if (fs::is_regular_file(path)) {
    manifest = nlohmann::json::parse(text::read_file(path), nullptr, false);
    if (manifest.is_discarded() || !manifest.is_object()) manifest = {};
  }
  manifest["tool"] = "mgtd";
  manifest["version"] = MGTD_VERSION;
  nlohmann::json digests = nlohmann::json::object();
  for (const auto& in : inputs) digests[in] = file_sha256(in);
  nlohmann::json outs = nlohmann::json::array();
  for (const auto& o : outputs) outs.push_back(fs::path(o).filename().string());
  manifest["runs"][command] = {
      {"timestamp", utc_timestamp()},
      {"tool_version", MGTD_VERSION},
      {"config_sha256", sha256_hex(cfg.to_json().dump())},
      {"seed", cfg.seed},
      {"task", name(cfg.task)},
      {"split", split ? nlohmann::json(*split) : nlohmann::json(nullptr)},
      {"inputs", std::move(digests)},
      {"outputs", std::move(outs)}};
  text::write_file(path, manifest.dump(2) + "\n");
}

inline void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) {
    throw DataError("cannot create output directory '" + cfg.output_dir +
                    "': " + ec.message());
  }
}

inline std::vector<TextRecord> load_split(const RunConfig& cfg,
                                          const std::string& split) {
  return parse_dataset(split_path(cfg, split), cfg.format);
}

// Task-B fallback default: explicit config, else the most frequent label of
// the train split when one is configured, else the first canonical label.
inline FallbackPolicy resolve_fallback(const RunConfig& cfg) {
  FallbackPolicy policy = cfg.fallback;
  if (!cfg.task_b_default_explicit && cfg.task == TaskId::task_b) {
    if (auto it = cfg.splits.find("train");
        it != cfg.splits.end() && fs::is_regular_file(it->second)) {
      const auto train = parse_dataset(it->second, cfg.format);
      policy.task_b_default = std::string(name(most_frequent_label7(train)));
    }
  }
  return policy;
}

inline std::string model_path(const RunConfig& cfg,
                              const CommandOptions& opts) {
  if (opts.model) return *opts.model;
  if (cfg.backend.model_path) return *cfg.backend.model_path;
  return out_path(cfg, "model_" + std::string(name(cfg.task)) + ".bin");
}

inline void replace_all(std::string& s, std::string_view from,
                        std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace detail

inline int cmd_stats(const RunConfig& cfg, const CommandOptions& opts,
                     std::ostream& out) {
  std::vector<std::string> splits;
  if (opts.split) {
    splits.push_back(*opts.split);
  } else {
    for (const auto& [split, _] : cfg.splits) splits.push_back(split);
  }
  if (splits.empty()) throw ConfigError("no dataset splits configured");
  std::vector<std::pair<std::string, DatasetStats>> rows;
  std::vector<std::string> inputs;
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& split : splits) {
    const auto records = detail::load_split(cfg, split);
    inputs.push_back(detail::split_path(cfg, split));
    rows.emplace_back(split, compute_stats(records));
    j[split] = to_json(rows.back().second);
  }
  detail::ensure_out_dir(cfg);
  const auto table = render_stats_table(rows);
  const auto json_path = detail::out_path(cfg, "stats.json");
  const auto txt_path = detail::out_path(cfg, "stats.txt");
  text::write_file(json_path, j.dump(2) + "\n");
  text::write_file(txt_path, table);
  detail::record_run(cfg, "stats", opts.split, inputs, {json_path, txt_path});
  out << table;
  return exit_ok;
}

inline int cmd_analyze(const RunConfig& cfg, const CommandOptions& opts,
                       std::ostream& out) {
  const auto split = opts.split.value_or("train");
  const auto records = detail::load_split(cfg, split);
  const auto profile = profile_corpus(records, cfg.bins);
  detail::ensure_out_dir(cfg);
  const auto json_path = detail::out_path(cfg, "profile_" + split + ".json");
  const auto div_path =
      detail::out_path(cfg, "profile_" + split + "_diversity.csv");
  const auto len_path =
      detail::out_path(cfg, "profile_" + split + "_length.csv");
  text::write_file(json_path, to_json(profile).dump(2) + "\n");
  text::write_file(div_path, diversity_csv(profile));
  text::write_file(len_path, length_csv(profile));
  detail::record_run(cfg, "analyze", split, {detail::split_path(cfg, split)},
                     {json_path, div_path, len_path});
  out << "profiled " << records.size() << " records from split '" << split
      << "'\n";
  for (auto l : all_label7) {
    const auto& lp = profile.at(l);
    if (lp.count == 0) continue;
    out << "  " << name(l) << ": n=" << lp.count
        << " mean_diversity=" << lp.mean_lexical_diversity
        << " mean_length=" << lp.mean_sequence_length << '\n';
  }
  return exit_ok;
}

inline int cmd_build_instructions(const RunConfig& cfg,
                                  const CommandOptions& opts,
                                  std::ostream& out) {
  const auto split = opts.split.value_or("train");
  const auto records = detail::load_split(cfg, split);
  detail::ensure_out_dir(cfg);
  const auto path = detail::out_path(
      cfg, "instructions_" + std::string(name(cfg.task)) + "_" + split + "_" +
               std::string(name(cfg.schema)) + ".jsonl");
  const auto n = emit_dataset(records, cfg.task, cfg.schema, path,
                              cfg.safe_mode);
  detail::record_run(cfg, "build-instructions", split,
                     {detail::split_path(cfg, split)}, {path});
  out << "wrote " << n << " examples to " << path << '\n';
  return exit_ok;
}

inline int cmd_train_baseline(const RunConfig& cfg, const CommandOptions& opts,
                              std::ostream& out) {
  const auto split = opts.split.value_or("train");
  const auto records = detail::load_split(cfg, split);
  auto training = cfg.training;
  training.seed = cfg.seed;
  const auto result = baseline::train(records, cfg.task, cfg.features, training);
  detail::ensure_out_dir(cfg);
  const auto model_path = detail::model_path(cfg, opts);
  baseline::save_model(result.model, model_path);
  const auto log_path = detail::out_path(
      cfg, "training_log_" + std::string(name(cfg.task)) + ".csv");
  std::string log = "epoch,loss\n0," + mgtd::detail::shortest(result.initial_loss) + "\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    log += std::to_string(e + 1) + "," +
           mgtd::detail::shortest(result.epoch_loss[e]) + "\n";
  }
  text::write_file(log_path, log);
  detail::record_run(cfg, "train-baseline", split,
                     {detail::split_path(cfg, split)}, {model_path, log_path});
  out << "trained " << name(cfg.task) << " baseline on " << records.size()
      << " records; loss " << result.initial_loss << " -> "
      << result.epoch_loss.back() << "\nmodel: " << model_path << '\n';
  return exit_ok;
}

inline int cmd_predict(const RunConfig& cfg, const CommandOptions& opts,
                       std::ostream& out, std::ostream& err) {
  const auto split = opts.split.value_or("validation");
  const auto input_path = detail::split_path(cfg, split);
  const auto records = detail::load_split(cfg, split);
  std::vector<InstructionExample> examples;
  examples.reserve(records.size());
  for (const auto& r : records) {
    examples.push_back(build_example(r, cfg.task, false, cfg.safe_mode));
  }
  const auto policy = detail::resolve_fallback(cfg);
  policy.validate();
  std::vector<std::string> inputs{input_path};
  std::vector<PredictionRecord> predictions;
  const auto predictions_path = detail::out_path(
      cfg, "predictions_" + std::string(name(cfg.task)) + "_" + split +
               ".jsonl");
  detail::ensure_out_dir(cfg);

  switch (cfg.backend.kind) {
    case BackendKind::local_baseline: {
      const auto path = detail::model_path(cfg, opts);
      if (!fs::is_regular_file(path)) {
        throw DataError("model file not found: '" + path +
                        "' (run train-baseline first)");
      }
      LocalBaselineBackend backend(baseline::load_model(path));
      if (backend.model().task != cfg.task) {
        throw ConfigError("model '" + path + "' was trained for " +
                          std::string(name(backend.model().task)));
      }
      inputs.push_back(path);
      predictions =
          classify_batch(backend, examples, policy, cfg.batch_options())
              .records;
      break;
    }
    case BackendKind::remote_chat: {
      RemoteConfig rc;
      rc.endpoint = cfg.backend.endpoint;
      rc.model = cfg.backend.model;
      rc.auth_header = cfg.backend.auth_header;
      rc.auth_prefix = cfg.backend.auth_prefix;
      rc.timeout = std::chrono::seconds(cfg.backend.timeout_s);
      if (!cfg.backend.auth_env.empty()) {
        if (const char* token = std::getenv(cfg.backend.auth_env.c_str())) {
          rc.token = token;
        } else {
          err << "warning: environment variable " << cfg.backend.auth_env
              << " is not set; sending requests without credentials\n";
        }
      }
      if (rc.endpoint.empty()) {
        throw ConfigError("backend.endpoint is required for remote_chat");
      }
      RemoteChatBackend backend(std::move(rc));
      predictions =
          classify_batch(backend, examples, policy, cfg.batch_options())
              .records;
      break;
    }
    case BackendKind::external_file: {
      if (!cfg.backend.external_predictions) {
        throw ConfigError(
            "backend.external_predictions is required for external_file");
      }
      const auto& ext_path = *cfg.backend.external_predictions;
      if (cfg.backend.external_command) {
        auto command = *cfg.backend.external_command;
        detail::replace_all(command, "{input}", input_path);
        detail::replace_all(command, "{output}", ext_path);
        detail::replace_all(command, "{task}", name(cfg.task));
        const int rc = std::system(command.c_str());
        if (rc != 0) {
          throw BackendError("external command exited with status " +
                             std::to_string(rc) + ": " + command);
        }
      }
      if (!fs::is_regular_file(ext_path)) {
        throw BackendError("external predictions file not found: '" +
                           ext_path + "'");
      }
      auto external = read_predictions(ext_path);
      inputs.push_back(ext_path);
      std::unordered_map<std::string, PredictionRecord> by_id;
      for (auto& p : external) {
        if (p.task != cfg.task) {
          throw DataError(ext_path + ": prediction '" + p.id + "' is for " +
                          std::string(name(p.task)));
        }
        by_id.emplace(p.id, std::move(p));
      }
      if (by_id.size() != examples.size()) {
        throw DataError(ext_path + ": expected " +
                        std::to_string(examples.size()) + " predictions, found " +
                        std::to_string(by_id.size()));
      }
      for (const auto& ex : examples) {
        auto it = by_id.find(ex.id);
        if (it == by_id.end()) {
          throw DataError(ext_path + ": no prediction for id '" + ex.id + "'");
        }
        predictions.push_back(std::move(it->second));
      }
      apply_fallback(predictions, policy);
      break;
    }
  }

  write_predictions(predictions_path, predictions);
  detail::record_run(cfg, "predict", split, inputs, {predictions_path});
  const auto summary = summarize(predictions);
  out << "predicted " << predictions.size() << " records -> "
      << predictions_path << "\nok: " << summary.ok
      << "  filtered: " << summary.filtered
      << "  unparsed: " << summary.unparsed << "  error: " << summary.error
      << "  fallback: " << summary.fallback_applied << '\n';
  if (!predictions.empty() && summary.error == predictions.size()) {
    err << "error: every backend request failed\n";
    return exit_backend;
  }
  return exit_ok;
}

inline int cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts,
                        std::ostream& out) {
  const auto split = opts.split.value_or("validation");
  const auto gold = detail::load_split(cfg, split);
  const auto pred_path = opts.predictions.value_or(detail::out_path(
      cfg, "predictions_" + std::string(name(cfg.task)) + "_" + split +
               ".jsonl"));
  if (!fs::is_regular_file(pred_path)) {
    throw DataError("predictions file not found: '" + pred_path + "'");
  }
  const auto preds = read_predictions(pred_path);
  const auto policy = detail::resolve_fallback(cfg);
  const auto report = evaluate(gold, preds, cfg.task, cfg.scoring,
                               policy.default_for(cfg.task));
  detail::ensure_out_dir(cfg);
  const auto stem = "report_" + std::string(name(cfg.task)) + "_" + split;
  const auto json_path = detail::out_path(cfg, stem + ".json");
  const auto txt_path = detail::out_path(cfg, stem + ".txt");
  const auto table = render_report_table(report);
  text::write_file(json_path, to_json(report).dump(2) + "\n");
  text::write_file(txt_path, table);
  detail::record_run(cfg, "evaluate", split,
                     {detail::split_path(cfg, split), pred_path},
                     {json_path, txt_path});
  out << table;
  return exit_ok;
}

inline int cmd_combine(const RunConfig& cfg, const CommandOptions& opts,
                       std::ostream& out) {
  const auto split = opts.split.value_or("validation");
  const auto a_path = opts.predictions_a.value_or(
      detail::out_path(cfg, "predictions_task_a_" + split + ".jsonl"));
  const auto b_path = opts.predictions_b.value_or(
      detail::out_path(cfg, "predictions_task_b_" + split + ".jsonl"));
  for (const auto& p : {a_path, b_path}) {
    if (!fs::is_regular_file(p)) {
      throw DataError("predictions file not found: '" + p + "'");
    }
  }
  const auto a = read_predictions(a_path);
  const auto b = read_predictions(b_path);
  const auto rows = combine(a, b, cfg.consistency, cfg.default_machine);
  detail::ensure_out_dir(cfg);
  const auto path = detail::out_path(cfg, "submission_" + split + ".csv");
  text::write_file(path, render_submission_csv(rows));
  detail::record_run(cfg, "combine", split, {a_path, b_path}, {path});
  out << "wrote " << rows.size() << " rows to " << path << '\n';
  return exit_ok;
}

// Entry point shared by the executable and in-process tests.
inline int run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  CLI::App app{"Machine-generated text detection and attribution harness",
               "mgtd"};
  app.set_version_flag("--version", MGTD_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Seed for every seeded component");
  app.add_option("--task", task, "task_a or task_b");

  CommandOptions opts;
  std::optional<std::string> scoring;
  std::optional<std::string> consistency;
  std::optional<std::string> schema;

  auto add_split = [&](CLI::App* sub) {
    sub->add_option("--split", opts.split, "Dataset split name");
    sub->add_option("--dataset", opts.dataset,
                    "Dataset path for the selected split");
  };
  auto* stats = app.add_subcommand("stats", "Label distribution per split");
  add_split(stats);
  auto* analyze =
      app.add_subcommand("analyze", "Lexical diversity and length profile");
  add_split(analyze);
  auto* build = app.add_subcommand("build-instructions",
                                   "Emit an instruction-tuning JSONL file");
  add_split(build);
  build->add_option("--schema", schema, "chat or plain");
  auto* train =
      app.add_subcommand("train-baseline", "Train the local baseline model");
  add_split(train);
  train->add_option("--model", opts.model, "Model output path");
  auto* predict = app.add_subcommand("predict", "Run a backend over a split");
  add_split(predict);
  predict->add_option("--model", opts.model, "Baseline model path");
  auto* eval = app.add_subcommand("evaluate", "Score a predictions file");
  add_split(eval);
  eval->add_option("--predictions", opts.predictions, "Predictions JSONL");
  eval->add_option("--scoring", scoring, "fallback or exclude");
  auto* comb = app.add_subcommand("combine",
                                  "Pair Task-A and Task-B predictions");
  comb->add_option("--split", opts.split, "Split name used in file names");
  comb->add_option("--task-a", opts.predictions_a, "Task-A predictions");
  comb->add_option("--task-b", opts.predictions_b, "Task-B predictions");
  comb->add_option("--consistency", consistency,
                   "independent, task_a_priority or task_b_priority");

  std::vector<std::string> argv_storage{"mgtd"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    RunConfig cfg = config_path ? load_run_config(*config_path) : RunConfig{};
    if (out_dir) cfg.output_dir = *out_dir;
    if (seed) cfg.seed = *seed;
    cfg.training.seed = cfg.seed;
    if (task) cfg.task = parse_task(*task);
    if (schema) cfg.schema = parse_schema(*schema);
    if (scoring) cfg.scoring = parse_scoring_mode(*scoring);
    if (consistency) cfg.consistency = parse_consistency(*consistency);
    if (opts.dataset) {
      if (!opts.split) {
        const auto n = app.get_subcommands().front()->get_name();
        opts.split = (n == "predict" || n == "evaluate") ? "validation"
                                                         : "train";
      }
      cfg.splits[*opts.split] = *opts.dataset;
    }
    validate(cfg);

    const auto* sub = app.get_subcommands().front();
    if (sub == stats) return cmd_stats(cfg, opts, out);
    if (sub == analyze) return cmd_analyze(cfg, opts, out);
    if (sub == build) return cmd_build_instructions(cfg, opts, out);
    if (sub == train) return cmd_train_baseline(cfg, opts, out);
    if (sub == predict) return cmd_predict(cfg, opts, out, err);
    if (sub == eval) return cmd_evaluate(cfg, opts, out);
    if (sub == comb) return cmd_combine(cfg, opts, out);
    return exit_usage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::config: return exit_usage;
      case ErrorKind::data: return exit_data;
      case ErrorKind::backend: return exit_backend;
    }
    return exit_data;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  }
}

}  // namespace mgtd::cli
