#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mgtd/backends.hpp"
#include "mgtd/baseline.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/evaluation.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/promptkit.hpp"
#include "mgtd/remote.hpp"
#include "mgtd/stylometry.hpp"
#include "mgtd/text.hpp"

namespace mgtd {

enum class BackendKind { local_baseline, remote_chat, external_file };

inline BackendKind parse_backend_kind(std::string_view s) {
  if (s == "local_baseline") return BackendKind::local_baseline;
  if (s == "remote_chat") return BackendKind::remote_chat;
  if (s == "external_file" || s == "external-file") {
    return BackendKind::external_file;
  }
  throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

inline std::string_view name(BackendKind k) {
  switch (k) {
    case BackendKind::local_baseline: return "local_baseline";
    case BackendKind::remote_chat: return "remote_chat";
    case BackendKind::external_file: return "external_file";
  }
  return "";
}

struct BackendConfig {
  BackendKind kind = BackendKind::local_baseline;
  std::optional<std::string> model_path;  // local_baseline
  std::string endpoint;                   // remote_chat
  std::string model;
  std::string auth_env = "MGTD_API_KEY";  // name of the secret's env var
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::uint32_t timeout_s = 60;
  std::size_t parallelism = 4;
  std::uint32_t retry_limit = 3;
  std::uint32_t backoff_ms = 500;
  std::vector<std::string> filter_phrases{"content management policy"};
  std::optional<std::string> external_command;      // external_file
  std::optional<std::string> external_predictions;  // external_file
};

// Declarative run configuration. Relative paths are resolved against the
// directory of the config file. Secrets never live here: only the name of
// the environment variable holding the token.
struct RunConfig {
  std::map<std::string, std::string> splits;  // split name -> dataset path
  FormatConfig format;
  std::map<std::string, std::string> extra_aliases;
  TaskId task = TaskId::task_a;
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  DatasetSchema schema = DatasetSchema::chat;
  bool safe_mode = false;
  BinSpec bins;
  baseline::FeatureSpec features;
  baseline::TrainConfig training;
  BackendConfig backend;
  FallbackPolicy fallback;
  bool task_b_default_explicit = false;
  ScoringMode scoring = ScoringMode::fallback;
  Consistency consistency = Consistency::independent;
  Label7 default_machine = Label7::gemma_2_9b;

  // Effective configuration as canonical JSON (hashed into manifests).
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dataset"]["splits"] = splits;
    j["dataset"]["format"] = [&] {
      switch (format.format) {
        case DatasetFormat::automatic: return "auto";
        case DatasetFormat::csv: return "csv";
        case DatasetFormat::tsv: return "tsv";
        case DatasetFormat::jsonl: return "jsonl";
      }
      return "auto";
    }();
    j["dataset"]["delimiter"] = format.delimiter
                                    ? nlohmann::json(std::string(1, *format.delimiter))
                                    : nlohmann::json(nullptr);
    const auto& f = format.fields;
    auto opt = [](const std::optional<std::string>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    j["dataset"]["fields"] = {{"id_field", f.id_field},
                              {"text_field", f.text_field},
                              {"label_field", opt(f.label_field)},
                              {"prompt_field", opt(f.prompt_field)},
                              {"binary_label_field", opt(f.binary_label_field)}};
    j["dataset"]["aliases"] = extra_aliases;
    j["task"] = name(task);
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    j["instructions"] = {{"schema", name(schema)}, {"safe_mode", safe_mode}};
    j["stylometry"] = {{"diversity_bins", bins.diversity_bins},
                       {"length_bin_width", bins.length_bin_width},
                       {"length_bins", bins.length_bins}};
    j["features"] = {{"orders", features.orders},
                     {"dimension", features.dimension},
                     {"stylometric", features.stylometric}};
    j["training"] = {{"learning_rate", training.learning_rate},
                     {"epochs", training.epochs},
                     {"batch_size", training.batch_size},
                     {"l2", training.l2}};
    j["backend"] = {{"kind", name(backend.kind)},
                    {"model_path", opt(backend.model_path)},
                    {"endpoint", backend.endpoint},
                    {"model", backend.model},
                    {"auth_env", backend.auth_env},
                    {"auth_header", backend.auth_header},
                    {"auth_prefix", backend.auth_prefix},
                    {"timeout_s", backend.timeout_s},
                    {"parallelism", backend.parallelism},
                    {"retry_limit", backend.retry_limit},
                    {"backoff_ms", backend.backoff_ms},
                    {"filter_phrases", backend.filter_phrases},
                    {"external_command", opt(backend.external_command)},
                    {"external_predictions", opt(backend.external_predictions)}};
    j["fallback"] = {
        {"mode", name(fallback.mode)},
        {"default_label",
         {{"task_a", fallback.task_a_default},
          {"task_b", task_b_default_explicit
                         ? nlohmann::json(fallback.task_b_default)
                         : nlohmann::json(nullptr)}}}};
    j["evaluation"] = {{"scoring", name(scoring)}};
    j["combine"] = {{"consistency", [&] {
                       switch (consistency) {
                         case Consistency::independent: return "independent";
                         case Consistency::task_a_priority:
                           return "task_a_priority";
                         case Consistency::task_b_priority:
                           return "task_b_priority";
                       }
                       return "independent";
                     }()},
                    {"default_machine_label", name(default_machine)}};
    return j;
  }

  BatchOptions batch_options() const {
    BatchOptions o;
    o.parallelism = backend.parallelism;
    o.retry_limit = backend.retry_limit;
    o.backoff = std::chrono::milliseconds(backend.backoff_ms);
    o.filter_phrases = backend.filter_phrases;
    o.aliases = format.aliases;
    return o;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, std::string_view section,
                       std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw ConfigError("config section '" + std::string(section) +
                      "' must be an object");
  }
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) {
      throw ConfigError("unknown config key '" + std::string(section) + "." +
                        key + "'");
    }
  }
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out,
          std::string_view section) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + std::string(section) + "." + key +
                      "' has the wrong type");
  }
}

inline void read_opt(const nlohmann::json& obj, const char* key,
                     std::optional<std::string>& out,
                     std::string_view section) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  if (it->is_null()) {
    out.reset();
    return;
  }
  if (!it->is_string()) {
    throw ConfigError("config key '" + std::string(section) + "." + key +
                      "' must be a string or null");
  }
  out = it->get<std::string>();
}

inline std::string resolve_path(const std::filesystem::path& base,
                                const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return path.string();
  return (base / path).lexically_normal().string();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {}) {
  using detail::check_keys;
  using detail::read;
  using detail::read_opt;
  RunConfig cfg;
  check_keys(j, "<root>",
             {"dataset", "task", "seed", "output_dir", "instructions",
              "stylometry", "features", "training", "backend", "fallback",
              "evaluation", "combine"});

  if (auto it = j.find("dataset"); it != j.end()) {
    const auto& d = *it;
    check_keys(d, "dataset",
               {"splits", "format", "delimiter", "fields", "aliases"});
    std::map<std::string, std::string> splits;
    read(d, "splits", splits, "dataset");
    for (auto& [split, path] : splits) {
      cfg.splits[split] = detail::resolve_path(base_dir, path);
    }
    std::string format = "auto";
    read(d, "format", format, "dataset");
    cfg.format.format = parse_dataset_format(format);
    std::optional<std::string> delim;
    read_opt(d, "delimiter", delim, "dataset");
    if (delim) {
      if (delim->size() != 1) {
        throw ConfigError("dataset.delimiter must be a single character");
      }
      cfg.format.delimiter = (*delim)[0];
    }
    if (auto f = d.find("fields"); f != d.end()) {
      check_keys(*f, "dataset.fields",
                 {"id_field", "text_field", "label_field", "prompt_field",
                  "binary_label_field"});
      auto& m = cfg.format.fields;
      read(*f, "id_field", m.id_field, "dataset.fields");
      read(*f, "text_field", m.text_field, "dataset.fields");
      read_opt(*f, "label_field", m.label_field, "dataset.fields");
      read_opt(*f, "prompt_field", m.prompt_field, "dataset.fields");
      read_opt(*f, "binary_label_field", m.binary_label_field,
               "dataset.fields");
    }
    read(d, "aliases", cfg.extra_aliases, "dataset");
    for (const auto& [alias, target] : cfg.extra_aliases) {
      const auto label = cfg.format.aliases.find(target);
      if (!label) {
        throw ConfigError("alias '" + alias + "' targets unknown label '" +
                          target + "'");
      }
      cfg.format.aliases.add(alias, *label);
    }
  }

  if (auto it = j.find("task"); it != j.end()) {
    cfg.task = parse_task(it->get<std::string>());
  }
  read(j, "seed", cfg.seed, "<root>");
  read(j, "output_dir", cfg.output_dir, "<root>");
  cfg.output_dir = detail::resolve_path(base_dir, cfg.output_dir);

  if (auto it = j.find("instructions"); it != j.end()) {
    check_keys(*it, "instructions", {"schema", "safe_mode"});
    std::string schema = "chat";
    read(*it, "schema", schema, "instructions");
    cfg.schema = parse_schema(schema);
    read(*it, "safe_mode", cfg.safe_mode, "instructions");
  }
  if (auto it = j.find("stylometry"); it != j.end()) {
    check_keys(*it, "stylometry",
               {"diversity_bins", "length_bin_width", "length_bins"});
    read(*it, "diversity_bins", cfg.bins.diversity_bins, "stylometry");
    read(*it, "length_bin_width", cfg.bins.length_bin_width, "stylometry");
    read(*it, "length_bins", cfg.bins.length_bins, "stylometry");
  }
  if (auto it = j.find("features"); it != j.end()) {
    check_keys(*it, "features", {"orders", "dimension", "stylometric"});
    read(*it, "orders", cfg.features.orders, "features");
    read(*it, "dimension", cfg.features.dimension, "features");
    read(*it, "stylometric", cfg.features.stylometric, "features");
  }
  if (auto it = j.find("training"); it != j.end()) {
    check_keys(*it, "training",
               {"learning_rate", "epochs", "batch_size", "l2"});
    read(*it, "learning_rate", cfg.training.learning_rate, "training");
    read(*it, "epochs", cfg.training.epochs, "training");
    read(*it, "batch_size", cfg.training.batch_size, "training");
    read(*it, "l2", cfg.training.l2, "training");
  }
  if (auto it = j.find("backend"); it != j.end()) {
    const auto& b = *it;
    check_keys(b, "backend",
               {"kind", "model_path", "endpoint", "model", "auth_env",
                "auth_header", "auth_prefix", "timeout_s", "parallelism",
                "retry_limit", "backoff_ms", "filter_phrases",
                "external_command", "external_predictions"});
    std::string kind = "local_baseline";
    read(b, "kind", kind, "backend");
    cfg.backend.kind = parse_backend_kind(kind);
    read_opt(b, "model_path", cfg.backend.model_path, "backend");
    if (cfg.backend.model_path) {
      cfg.backend.model_path =
          detail::resolve_path(base_dir, *cfg.backend.model_path);
    }
    read(b, "endpoint", cfg.backend.endpoint, "backend");
    read(b, "model", cfg.backend.model, "backend");
    read(b, "auth_env", cfg.backend.auth_env, "backend");
    read(b, "auth_header", cfg.backend.auth_header, "backend");
    read(b, "auth_prefix", cfg.backend.auth_prefix, "backend");
    read(b, "timeout_s", cfg.backend.timeout_s, "backend");
    read(b, "parallelism", cfg.backend.parallelism, "backend");
    read(b, "retry_limit", cfg.backend.retry_limit, "backend");
    read(b, "backoff_ms", cfg.backend.backoff_ms, "backend");
    read(b, "filter_phrases", cfg.backend.filter_phrases, "backend");
    read_opt(b, "external_command", cfg.backend.external_command, "backend");
    read_opt(b, "external_predictions", cfg.backend.external_predictions,
             "backend");
    if (cfg.backend.external_predictions) {
      cfg.backend.external_predictions =
          detail::resolve_path(base_dir, *cfg.backend.external_predictions);
    }
  }
  if (auto it = j.find("fallback"); it != j.end()) {
    check_keys(*it, "fallback", {"mode", "default_label"});
    std::string mode = "default_label";
    read(*it, "mode", mode, "fallback");
    cfg.fallback.mode = parse_fallback_mode(mode);
    if (auto d = it->find("default_label"); d != it->end()) {
      check_keys(*d, "fallback.default_label", {"task_a", "task_b"});
      std::optional<std::string> a;
      std::optional<std::string> b;
      read_opt(*d, "task_a", a, "fallback.default_label");
      read_opt(*d, "task_b", b, "fallback.default_label");
      if (a) {
        auto l = canonical_task_label(TaskId::task_a, *a);
        if (!l) throw ConfigError("invalid task_a fallback label '" + *a + "'");
        cfg.fallback.task_a_default = *l;
      }
      if (b) {
        auto l = canonical_task_label(TaskId::task_b, *b, cfg.format.aliases);
        if (!l) throw ConfigError("invalid task_b fallback label '" + *b + "'");
        cfg.fallback.task_b_default = *l;
        cfg.task_b_default_explicit = true;
      }
    }
  }
  if (auto it = j.find("evaluation"); it != j.end()) {
    check_keys(*it, "evaluation", {"scoring"});
    std::string scoring = "fallback";
    read(*it, "scoring", scoring, "evaluation");
    cfg.scoring = parse_scoring_mode(scoring);
  }
  if (auto it = j.find("combine"); it != j.end()) {
    check_keys(*it, "combine", {"consistency", "default_machine_label"});
    std::string consistency = "independent";
    read(*it, "consistency", consistency, "combine");
    cfg.consistency = parse_consistency(consistency);
    std::optional<std::string> dm;
    read_opt(*it, "default_machine_label", dm, "combine");
    if (dm) {
      auto l = cfg.format.aliases.find(*dm);
      if (!l || *l == Label7::human_story) {
        throw ConfigError("combine.default_machine_label must be a machine "
                          "label");
      }
      cfg.default_machine = *l;
    }
  }
  cfg.training.seed = cfg.seed;
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("config file not found: '" + path + "'");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " +
                      e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_run_config(
        j, std::filesystem::absolute(path).parent_path());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// Validation shared by every command once flag overrides are applied.
inline void validate(const RunConfig& cfg) {
  cfg.bins.validate();
  cfg.features.validate();
  cfg.training.validate();
  cfg.fallback.validate();
  if (cfg.backend.parallelism == 0) {
    throw ConfigError("backend.parallelism must be at least 1");
  }
}

}  // namespace mgtd
