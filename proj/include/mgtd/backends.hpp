#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mgtd/baseline.hpp"
#include "mgtd/error.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/promptkit.hpp"
#include "mgtd/text.hpp"

namespace mgtd {

enum class PredictionStatus { ok, filtered, unparsed, error };

inline std::string_view name(PredictionStatus s) {
  switch (s) {
    case PredictionStatus::ok: return "ok";
    case PredictionStatus::filtered: return "filtered";
    case PredictionStatus::unparsed: return "unparsed";
    case PredictionStatus::error: return "error";
  }
  return "";
}

inline std::optional<PredictionStatus> parse_status(std::string_view s) {
  if (s == "ok") return PredictionStatus::ok;
  if (s == "filtered") return PredictionStatus::filtered;
  if (s == "unparsed") return PredictionStatus::unparsed;
  if (s == "error") return PredictionStatus::error;
  return std::nullopt;
}

// `label` is the parsed backend answer and is present exactly when status
// is ok. `fallback_label` is what the fallback policy assigned to a non-ok
// record; final_label() is the label used downstream.
struct PredictionRecord {
  std::string id;
  TaskId task = TaskId::task_a;
  std::optional<std::string> label;
  std::string raw_output;
  PredictionStatus status = PredictionStatus::error;
  std::uint32_t attempt_count = 1;
  std::optional<std::string> fallback_label;
  std::vector<std::pair<std::string, double>> scores;  // optional, per label

  std::optional<std::string> final_label() const {
    return label ? label : fallback_label;
  }

  bool operator==(const PredictionRecord&) const = default;
};

enum class FallbackMode { default_label, skip, retry_safe_prompt_then_default };

inline FallbackMode parse_fallback_mode(std::string_view s) {
  if (s == "default_label") return FallbackMode::default_label;
  if (s == "skip") return FallbackMode::skip;
  if (s == "retry_safe_prompt_then_default") {
    return FallbackMode::retry_safe_prompt_then_default;
  }
  throw ConfigError("unknown fallback mode '" + std::string(s) + "'");
}

inline std::string_view name(FallbackMode m) {
  switch (m) {
    case FallbackMode::default_label: return "default_label";
    case FallbackMode::skip: return "skip";
    case FallbackMode::retry_safe_prompt_then_default:
      return "retry_safe_prompt_then_default";
  }
  return "";
}

struct FallbackPolicy {
  FallbackMode mode = FallbackMode::default_label;
  std::string task_a_default = "machine";
  std::string task_b_default = "Human_story";

  const std::string& default_for(TaskId task) const {
    return task == TaskId::task_a ? task_a_default : task_b_default;
  }

  void validate() const {
    if (!is_task_label(TaskId::task_a, task_a_default)) {
      throw ConfigError("task_a fallback label '" + task_a_default +
                        "' is not a task_a label");
    }
    if (!is_task_label(TaskId::task_b, task_b_default)) {
      throw ConfigError("task_b fallback label '" + task_b_default +
                        "' is not a task_b label");
    }
  }
};

struct BackendReply {
  enum class Kind { text, filtered, transport_error };
  Kind kind = Kind::text;
  std::string text;
  std::vector<std::pair<std::string, double>> scores;
};

// A classification backend. complete() may be called concurrently from
// several threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendReply complete(const InstructionExample& example) const = 0;
};

struct BatchOptions {
  std::size_t parallelism = 4;
  std::uint32_t retry_limit = 3;
  std::chrono::milliseconds backoff{500};  // doubled after every retry
  std::vector<std::string> filter_phrases{"content management policy"};
  AliasTable aliases = AliasTable::defaults();

  void validate() const {
    if (parallelism == 0) throw ConfigError("parallelism must be at least 1");
  }
};

namespace detail {

// Lowercase ASCII, every non-alphanumeric run becomes one space, padded
// with a space on each side.
inline std::string match_fold(std::string_view s) {
  std::string out = " ";
  for (char c : s) {
    if (is_ascii_alnum(c)) {
      out.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (out.back() != ' ') {
      out.push_back(' ');
    }
  }
  if (out.back() != ' ') out.push_back(' ');
  return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  return ascii_lower(haystack).find(ascii_lower(needle)) != std::string::npos;
}

}  // namespace detail

// Finds the unique task label named in free text. Matching is
// case-insensitive on whole words with punctuation treated as spacing;
// zero or several distinct labels give nullopt.
inline std::optional<std::string> parse_model_output(
    std::string_view raw, TaskId task,
    const AliasTable& aliases = default_aliases()) {
  const auto hay = detail::match_fold(raw);
  std::optional<std::string> hit;
  auto consider = [&](std::string_view spelling, std::string_view label) {
    const auto needle = detail::match_fold(spelling);
    if (needle == " ") return true;
    if (hay.find(needle) == std::string::npos) return true;
    if (hit && *hit != label) return false;
    hit = std::string(label);
    return true;
  };
  if (task == TaskId::task_a) {
    for (auto l : all_label2) {
      if (!consider(name(l), name(l))) return std::nullopt;
    }
  } else {
    for (const auto& [spelling, label] : aliases.spellings()) {
      if (!consider(spelling, name(label))) return std::nullopt;
    }
  }
  return hit;
}

// One backend call with transport retries and exponential backoff. Content
// filtering is final for the prompt that triggered it. Never throws.
inline PredictionRecord classify_one(const Backend& backend,
                                     const InstructionExample& example,
                                     const BatchOptions& options = {}) {
  PredictionRecord rec;
  rec.id = example.id;
  rec.task = example.task;
  rec.attempt_count = 0;
  auto delay = options.backoff;
  for (std::uint32_t attempt = 0;; ++attempt) {
    ++rec.attempt_count;
    BackendReply reply;
    try {
      reply = backend.complete(example);
    } catch (const std::exception& e) {
      reply = {BackendReply::Kind::transport_error, e.what(), {}};
    } catch (...) {
      reply = {BackendReply::Kind::transport_error, "unknown backend failure",
               {}};
    }
    if (reply.kind == BackendReply::Kind::transport_error) {
      rec.raw_output = std::move(reply.text);
      if (attempt >= options.retry_limit) {
        rec.status = PredictionStatus::error;
        return rec;
      }
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      delay *= 2;
      continue;
    }
    rec.raw_output = std::move(reply.text);
    rec.scores = std::move(reply.scores);
    bool filtered = reply.kind == BackendReply::Kind::filtered;
    for (const auto& phrase : options.filter_phrases) {
      filtered = filtered || detail::contains_ci(rec.raw_output, phrase);
    }
    if (filtered) {
      rec.status = PredictionStatus::filtered;
      return rec;
    }
    rec.label = parse_model_output(rec.raw_output, example.task,
                                   options.aliases);
    rec.status =
        rec.label ? PredictionStatus::ok : PredictionStatus::unparsed;
    return rec;
  }
}

struct BatchSummary {
  std::size_t ok = 0;
  std::size_t filtered = 0;
  std::size_t unparsed = 0;
  std::size_t error = 0;
  std::size_t fallback_applied = 0;

  bool operator==(const BatchSummary&) const = default;
};

inline BatchSummary summarize(std::span<const PredictionRecord> records) {
  BatchSummary s;
  for (const auto& r : records) {
    switch (r.status) {
      case PredictionStatus::ok: ++s.ok; break;
      case PredictionStatus::filtered: ++s.filtered; break;
      case PredictionStatus::unparsed: ++s.unparsed; break;
      case PredictionStatus::error: ++s.error; break;
    }
    if (r.fallback_label) ++s.fallback_applied;
  }
  return s;
}

// Assigns the task default to every non-ok record (modes other than skip).
inline void apply_fallback(std::span<PredictionRecord> records,
                           const FallbackPolicy& policy) {
  if (policy.mode == FallbackMode::skip) return;
  for (auto& r : records) {
    if (r.status != PredictionStatus::ok && !r.fallback_label) {
      r.fallback_label = policy.default_for(r.task);
    }
  }
}

struct BatchResult {
  std::vector<PredictionRecord> records;  // input order
  BatchSummary summary;
};

// Runs every example through the backend with at most
// options.parallelism calls in flight, then applies the fallback policy.
// Output order matches input order.
inline BatchResult classify_batch(const Backend& backend,
                                  std::span<const InstructionExample> examples,
                                  const FallbackPolicy& policy,
                                  const BatchOptions& options = {}) {
  options.validate();
  policy.validate();
  {
    std::unordered_set<std::string_view> ids;
    for (const auto& ex : examples) {
      if (!ids.insert(ex.id).second) {
        throw DataError("duplicate example id '" + ex.id + "' in batch");
      }
    }
  }
  BatchResult result;
  result.records.resize(examples.size());
  auto run_one = [&](std::size_t i) {
    auto rec = classify_one(backend, examples[i], options);
    if (rec.status == PredictionStatus::filtered &&
        policy.mode == FallbackMode::retry_safe_prompt_then_default) {
      auto safe = examples[i];
      safe.instruction = build_instruction(safe.task, true);
      auto retry = classify_one(backend, safe, options);
      retry.attempt_count += rec.attempt_count;
      rec = std::move(retry);
    }
    result.records[i] = std::move(rec);
  };

  const auto workers = std::min(options.parallelism, examples.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (auto i = next.fetch_add(1); i < examples.size();
             i = next.fetch_add(1)) {
          run_one(i);
        }
      });
    }
  }
  apply_fallback(result.records, policy);
  result.summary = summarize(result.records);
  return result;
}

// Local softmax-regression backend; replies with the predicted label name.
class LocalBaselineBackend final : public Backend {
 public:
  explicit LocalBaselineBackend(baseline::BaselineModel model)
      : model_(std::move(model)) {}

  BackendReply complete(const InstructionExample& example) const override {
    if (example.task != model_.task) {
      return {BackendReply::Kind::transport_error,
              "baseline model was trained for " +
                  std::string(name(model_.task)),
              {}};
    }
    auto p = baseline::predict(model_, example.input_text);
    BackendReply reply{BackendReply::Kind::text, p.label, {}};
    for (std::size_t k = 0; k < model_.labels.size(); ++k) {
      reply.scores.emplace_back(model_.labels[k], p.scores[k]);
    }
    return reply;
  }

  const baseline::BaselineModel& model() const { return model_; }

 private:
  baseline::BaselineModel model_;
};

// ---------------------------------------------------------------------------
// Predictions file: one JSON object per line with id, task, label,
// raw_output, status, attempt_count and the optional fallback_label and
// scores fields.

inline nlohmann::ordered_json to_json(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["task"] = name(r.task);
  j["label"] = r.label ? nlohmann::ordered_json(*r.label)
                       : nlohmann::ordered_json(nullptr);
  j["raw_output"] = r.raw_output;
  j["status"] = name(r.status);
  j["attempt_count"] = r.attempt_count;
  if (r.fallback_label) j["fallback_label"] = *r.fallback_label;
  if (!r.scores.empty()) {
    nlohmann::ordered_json s = nlohmann::ordered_json::object();
    for (const auto& [label, p] : r.scores) s[label] = p;
    j["scores"] = std::move(s);
  }
  return j;
}

inline std::string render_predictions(
    std::span<const PredictionRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

inline void write_predictions(const std::string& path,
                              std::span<const PredictionRecord> records) {
  text::write_file(path, render_predictions(records));
}

inline PredictionRecord prediction_from_json(const nlohmann::json& j,
                                             const std::string& where) {
  auto fail = [&](const std::string& why) -> DataError {
    return DataError(where + ": " + why);
  };
  if (!j.is_object()) throw fail("not a JSON object");
  auto str_field = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw fail(std::string("missing string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  PredictionRecord r;
  r.id = str_field("id");
  try {
    r.task = parse_task(str_field("task"));
  } catch (const ConfigError& e) {
    throw fail(e.what());
  }
  auto lab = j.find("label");
  if (lab == j.end()) throw fail("missing field 'label'");
  if (!lab->is_null()) {
    if (!lab->is_string() || !is_task_label(r.task, lab->get<std::string>())) {
      throw fail("label " + lab->dump() + " is not a canonical " +
                 std::string(name(r.task)) + " label");
    }
    r.label = lab->get<std::string>();
  }
  r.raw_output = str_field("raw_output");
  auto status = parse_status(str_field("status"));
  if (!status) throw fail("unknown status");
  r.status = *status;
  auto ac = j.find("attempt_count");
  if (ac == j.end() || !ac->is_number_unsigned() || ac->get<std::uint64_t>() == 0 ||
      ac->get<std::uint64_t>() > 0xFFFFFFFFu) {
    throw fail("attempt_count must be a positive integer");
  }
  r.attempt_count = ac->get<std::uint32_t>();
  if ((r.status == PredictionStatus::ok) != r.label.has_value()) {
    throw fail("label must be present exactly when status is ok");
  }
  if (auto fb = j.find("fallback_label"); fb != j.end() && !fb->is_null()) {
    if (!fb->is_string() || !is_task_label(r.task, fb->get<std::string>())) {
      throw fail("fallback_label is not a canonical label");
    }
    r.fallback_label = fb->get<std::string>();
  }
  if (auto sc = j.find("scores"); sc != j.end() && !sc->is_null()) {
    if (!sc->is_object()) throw fail("scores must be an object");
    for (const auto& label : task_labels(r.task)) {
      auto it = sc->find(label);
      if (it == sc->end()) continue;
      if (!it->is_number()) throw fail("score for " + label + " not a number");
      r.scores.emplace_back(label, it->get<double>());
    }
    if (r.scores.size() != sc->size()) {
      throw fail("scores contain a non-canonical label");
    }
  }
  return r;
}

inline std::vector<PredictionRecord> parse_predictions(
    std::string_view content) {
  std::vector<PredictionRecord> out;
  std::unordered_set<std::string> ids;
  const auto lines = text::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = "line " + std::to_string(i + 1);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    auto rec = prediction_from_json(j, where);
    if (!ids.insert(rec.id).second) {
      throw DataError(where + ": duplicate id '" + rec.id + "'");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<PredictionRecord> read_predictions(const std::string& path) {
  const auto content = text::read_file(path);
  try {
    return parse_predictions(content);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace mgtd
