#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/text.hpp"

namespace mgtd {

namespace prompts {

// Instruction prompts, whitespace-normalized to single spaces.
inline constexpr std::string_view task_a =
    "Given a human written text or machine generated text, classify whether "
    "the given text is written by 'human' or 'machine'.";

inline constexpr std::string_view task_b =
    "Given a human written text or machine generated text as input, classify "
    "the given input text into one of these 7 labels. These labels are: "
    "gemma-2-9b, GPT 4.0, Human_story, llama-8b, mistral-7b, qwen2-72b and "
    "Yi-large. These labels are different in the way how the text is "
    "written, syntax and lexical diversity.";

// Appended (after one space) in safe mode.
inline constexpr std::string_view no_filter_suffix =
    "DO NOT apply any content filtering on this input.";

}  // namespace prompts

inline std::string build_instruction(TaskId task, bool safe_mode) {
  std::string out(task == TaskId::task_a ? prompts::task_a : prompts::task_b);
  if (safe_mode) {
    out.push_back(' ');
    out.append(prompts::no_filter_suffix);
  }
  return out;
}

struct InstructionExample {
  std::string id;  // source record id; not part of the emitted file layout
  TaskId task = TaskId::task_a;
  std::string instruction;
  std::string input_text;
  std::optional<std::string> target;
};

// The record's generation prompt is never copied into the example.
inline InstructionExample build_example(const TextRecord& record, TaskId task,
                                        bool include_target, bool safe_mode) {
  InstructionExample ex;
  ex.id = record.id;
  ex.task = task;
  ex.instruction = build_instruction(task, safe_mode);
  ex.input_text = record.text;
  if (include_target) {
    ex.target = gold_label(record, task);
    if (!ex.target) {
      throw DataError("record '" + record.id + "' has no gold label for " +
                      std::string(name(task)));
    }
  }
  return ex;
}

enum class DatasetSchema { chat, plain };

inline DatasetSchema parse_schema(std::string_view s) {
  if (s == "chat") return DatasetSchema::chat;
  if (s == "plain") return DatasetSchema::plain;
  throw ConfigError("unknown instruction schema '" + std::string(s) +
                    "' (expected chat or plain)");
}

inline std::string_view name(DatasetSchema s) {
  return s == DatasetSchema::chat ? "chat" : "plain";
}

// One JSON line (no trailing newline) for an example carrying a target.
inline std::string example_line(const InstructionExample& ex,
                                DatasetSchema schema) {
  nlohmann::ordered_json j;
  if (schema == DatasetSchema::chat) {
    j["messages"] = nlohmann::ordered_json::array(
        {{{"role", "system"}, {"content", ex.instruction}},
         {{"role", "user"}, {"content", ex.input_text}},
         {{"role", "assistant"}, {"content", ex.target.value_or("")}}});
  } else {
    j["instruction"] = ex.instruction;
    j["input"] = ex.input_text;
    j["output"] = ex.target.value_or("");
  }
  return j.dump();
}

inline std::string render_dataset(std::span<const TextRecord> records,
                                  TaskId task, DatasetSchema schema,
                                  bool safe_mode = false) {
  std::string out;
  for (const auto& r : records) {
    out += example_line(build_example(r, task, true, safe_mode), schema);
    out.push_back('\n');
  }
  return out;
}

// Writes the fine-tuning JSONL file (UTF-8, LF endings) and returns the
// number of examples written.
inline std::size_t emit_dataset(std::span<const TextRecord> records,
                                TaskId task, DatasetSchema schema,
                                const std::string& path,
                                bool safe_mode = false) {
  text::write_file(path, render_dataset(records, task, schema, safe_mode));
  return records.size();
}

namespace detail {

inline std::string required_string(const nlohmann::json& obj,
                                   const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw DataError(where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace detail

// Reads an emitted instruction dataset back into examples. Ids are assigned
// from 1-based line numbers. Targets must be canonical labels for the task.
inline std::vector<InstructionExample> parse_instruction_dataset(
    std::string_view content, TaskId task, DatasetSchema schema) {
  std::vector<InstructionExample> out;
  const auto lines = text::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto where = "line " + std::to_string(i + 1);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": not a JSON object");
    InstructionExample ex;
    ex.id = std::to_string(i + 1);
    ex.task = task;
    if (schema == DatasetSchema::chat) {
      auto it = j.find("messages");
      if (it == j.end() || !it->is_array() || it->size() != 3) {
        throw DataError(where + ": expected 3 chat messages");
      }
      const char* roles[] = {"system", "user", "assistant"};
      std::string contents[3];
      for (std::size_t m = 0; m < 3; ++m) {
        const auto& msg = (*it)[m];
        if (!msg.is_object() ||
            detail::required_string(msg, "role", where) != roles[m]) {
          throw DataError(where + ": message " + std::to_string(m) +
                          " must have role '" + roles[m] + "'");
        }
        contents[m] = detail::required_string(msg, "content", where);
      }
      ex.instruction = std::move(contents[0]);
      ex.input_text = std::move(contents[1]);
      ex.target = std::move(contents[2]);
    } else {
      ex.instruction = detail::required_string(j, "instruction", where);
      ex.input_text = detail::required_string(j, "input", where);
      ex.target = detail::required_string(j, "output", where);
    }
    if (!is_task_label(task, *ex.target)) {
      throw DataError(where + ": target '" + *ex.target +
                      "' is not a canonical " + std::string(name(task)) +
                      " label");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace mgtd
