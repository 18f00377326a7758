#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mgtd/error.hpp"

namespace mgtd {

// Seven-way attribution label. Declaration order is the canonical label
// order used for argmax tie-breaking and report layout.
enum class Label7 : std::uint8_t {
  human_story,
  gemma_2_9b,
  gpt_4o,
  llama_8b,
  mistral_7b,
  qwen2_72b,
  yi_large,
};

inline constexpr std::array<Label7, 7> all_label7{
    Label7::human_story, Label7::gemma_2_9b, Label7::gpt_4o,
    Label7::llama_8b,    Label7::mistral_7b, Label7::qwen2_72b,
    Label7::yi_large};

enum class Label2 : std::uint8_t { human, machine };

inline constexpr std::array<Label2, 2> all_label2{Label2::human,
                                                  Label2::machine};

enum class TaskId : std::uint8_t { task_a, task_b };

inline constexpr std::string_view name(Label7 label) {
  switch (label) {
    case Label7::human_story: return "Human_story";
    case Label7::gemma_2_9b: return "gemma-2-9b";
    case Label7::gpt_4o: return "GPT-4o";
    case Label7::llama_8b: return "llama-8b";
    case Label7::mistral_7b: return "mistral-7b";
    case Label7::qwen2_72b: return "qwen2-72b";
    case Label7::yi_large: return "Yi-large";
  }
  return "";
}

inline constexpr std::string_view name(Label2 label) {
  return label == Label2::human ? "human" : "machine";
}

inline constexpr std::string_view name(TaskId task) {
  return task == TaskId::task_a ? "task_a" : "task_b";
}

inline constexpr Label2 to_binary(Label7 label) {
  return label == Label7::human_story ? Label2::human : Label2::machine;
}

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline bool is_ascii_alnum(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

}  // namespace detail

// Lookup key for label aliases: ASCII-lowercased with every character that
// is not an ASCII letter or digit removed. "GPT 4.0" and "gpt40" collide.
inline std::string fold_label_key(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (detail::is_ascii_alnum(c)) {
      out.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

inline TaskId parse_task(std::string_view raw) {
  const auto key = fold_label_key(raw);
  if (key == "taska" || key == "a") return TaskId::task_a;
  if (key == "taskb" || key == "b") return TaskId::task_b;
  throw ConfigError("unknown task '" + std::string(raw) +
                    "' (expected task_a or task_b)");
}

inline std::optional<Label2> parse_label2(std::string_view raw) {
  const auto key = fold_label_key(raw);
  if (key == "human") return Label2::human;
  if (key == "machine") return Label2::machine;
  return std::nullopt;
}

// Alias table resolving free-form label spellings to Label7. Users extend it
// through config.
class AliasTable {
 public:
  AliasTable() = default;

  static AliasTable defaults() {
    AliasTable table;
    for (auto label : all_label7) table.add(name(label), label);
    table.add("human story", Label7::human_story);
    table.add("gemma2-9b", Label7::gemma_2_9b);
    table.add("GPT 4.0", Label7::gpt_4o);
    table.add("GPT_4-o", Label7::gpt_4o);
    table.add("GPT_4o", Label7::gpt_4o);
    table.add("llama-8B", Label7::llama_8b);
    table.add("mistral-7B", Label7::mistral_7b);
    table.add("qwen-2-72B", Label7::qwen2_72b);
    table.add("Yi-Large", Label7::yi_large);
    table.add("yi large", Label7::yi_large);
    return table;
  }

  // Throws ConfigError when the alias already resolves to another label.
  void add(std::string_view alias, Label7 target) {
    auto key = fold_label_key(alias);
    if (key.empty()) {
      throw ConfigError("label alias '" + std::string(alias) +
                        "' has no letters or digits");
    }
    auto [it, inserted] = by_key_.emplace(key, target);
    if (!inserted && it->second != target) {
      throw ConfigError("label alias '" + std::string(alias) +
                        "' already resolves to " +
                        std::string(name(it->second)));
    }
    spellings_.emplace_back(std::string(alias), target);
  }

  std::optional<Label7> find(std::string_view raw) const {
    auto it = by_key_.find(fold_label_key(raw));
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
  }

  // Every spelling registered through add(), in insertion order.
  const std::vector<std::pair<std::string, Label7>>& spellings() const {
    return spellings_;
  }

 private:
  std::map<std::string, Label7> by_key_;
  std::vector<std::pair<std::string, Label7>> spellings_;
};

inline const AliasTable& default_aliases() {
  static const AliasTable table = AliasTable::defaults();
  return table;
}

inline Label7 normalize_label(std::string_view raw,
                              const AliasTable& aliases = default_aliases()) {
  if (auto label = aliases.find(raw)) return *label;
  throw DataError("unrecognized label '" + std::string(raw) + "'");
}

// Canonical label names for a task, in canonical order.
inline std::vector<std::string> task_labels(TaskId task) {
  std::vector<std::string> out;
  if (task == TaskId::task_a) {
    for (auto l : all_label2) out.emplace_back(name(l));
  } else {
    for (auto l : all_label7) out.emplace_back(name(l));
  }
  return out;
}

inline bool is_task_label(TaskId task, std::string_view label) {
  for (const auto& l : task_labels(task)) {
    if (l == label) return true;
  }
  return false;
}

// Resolves a label string for a task to its canonical name, or nullopt.
inline std::optional<std::string> canonical_task_label(
    TaskId task, std::string_view raw,
    const AliasTable& aliases = default_aliases()) {
  if (task == TaskId::task_a) {
    if (auto l = parse_label2(raw)) return std::string(name(*l));
    return std::nullopt;
  }
  if (auto l = aliases.find(raw)) return std::string(name(*l));
  return std::nullopt;
}

}  // namespace mgtd
