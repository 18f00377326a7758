#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mgtd/error.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/text.hpp"

namespace mgtd {

struct TextRecord {
  std::string id;
  std::optional<std::string> source_prompt;
  std::string text;
  std::optional<Label7> gold7;
  std::optional<Label2> gold2;
};

// Gold label of a record for a task, as a canonical name.
inline std::optional<std::string> gold_label(const TextRecord& r,
                                             TaskId task) {
  if (task == TaskId::task_b) {
    if (r.gold7) return std::string(name(*r.gold7));
    return std::nullopt;
  }
  if (r.gold2) return std::string(name(*r.gold2));
  if (r.gold7) return std::string(name(to_binary(*r.gold7)));
  return std::nullopt;
}

enum class DatasetFormat { automatic, csv, tsv, jsonl };

inline DatasetFormat parse_dataset_format(std::string_view s) {
  if (s == "auto") return DatasetFormat::automatic;
  if (s == "csv") return DatasetFormat::csv;
  if (s == "tsv") return DatasetFormat::tsv;
  if (s == "jsonl") return DatasetFormat::jsonl;
  throw ConfigError("unknown dataset format '" + std::string(s) +
                    "' (expected auto, csv, tsv or jsonl)");
}

// Column/key names. id and text are mandatory; the others are read when the
// column exists and ignored otherwise, so unlabeled test splits share a
// mapping with labeled ones.
struct FieldMapping {
  std::string id_field = "id";
  std::string text_field = "text";
  std::optional<std::string> label_field = "label";
  std::optional<std::string> prompt_field = "prompt";
  std::optional<std::string> binary_label_field;
};

struct FormatConfig {
  DatasetFormat format = DatasetFormat::automatic;
  std::optional<char> delimiter;  // overrides the csv/tsv default
  FieldMapping fields;
  AliasTable aliases = AliasTable::defaults();
};

namespace detail {

inline DatasetFormat resolve_format(const std::string& path,
                                    DatasetFormat format) {
  if (format != DatasetFormat::automatic) return format;
  const auto ext =
      ascii_lower(std::filesystem::path(path).extension().string());
  if (ext == ".jsonl" || ext == ".ndjson") return DatasetFormat::jsonl;
  if (ext == ".tsv" || ext == ".tab") return DatasetFormat::tsv;
  return DatasetFormat::csv;
}

struct RawRow {
  std::string id;
  std::string text;
  std::optional<std::string> label;
  std::optional<std::string> prompt;
  std::optional<std::string> binary_label;
};

inline TextRecord make_record(RawRow raw, const std::string& where,
                              const FormatConfig& cfg) {
  if (raw.id.empty()) throw DataError(where + ": empty id");
  if (raw.text.empty()) throw DataError(where + ": empty text");
  TextRecord rec;
  rec.id = std::move(raw.id);
  rec.text = std::move(raw.text);
  if (raw.prompt && !raw.prompt->empty()) rec.source_prompt = raw.prompt;
  if (raw.label && !raw.label->empty()) {
    auto label = cfg.aliases.find(*raw.label);
    if (!label) {
      throw DataError(where + ": unrecognized label '" + *raw.label + "'");
    }
    rec.gold7 = *label;
    rec.gold2 = to_binary(*label);
  }
  if (raw.binary_label && !raw.binary_label->empty()) {
    auto b = parse_label2(*raw.binary_label);
    if (!b) {
      throw DataError(where + ": unrecognized binary label '" +
                      *raw.binary_label + "'");
    }
    if (rec.gold2 && *rec.gold2 != *b) {
      throw DataError(where + ": binary label '" + *raw.binary_label +
                      "' contradicts label " + std::string(name(*rec.gold7)));
    }
    rec.gold2 = *b;
  }
  return rec;
}

inline std::vector<TextRecord> parse_delimited_records(
    std::string_view content, char delimiter, const FormatConfig& cfg) {
  auto rows = text::parse_delimited(content, delimiter);
  if (rows.empty()) throw DataError("missing header row");
  const auto& header = rows.front().fields;
  auto column = [&](const std::string& field) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == field) return i;
    }
    return std::nullopt;
  };
  const auto& f = cfg.fields;
  const auto id_col = column(f.id_field);
  if (!id_col) throw DataError("missing mapped field '" + f.id_field + "'");
  const auto text_col = column(f.text_field);
  if (!text_col) {
    throw DataError("missing mapped field '" + f.text_field + "'");
  }
  const auto label_col = f.label_field ? column(*f.label_field) : std::nullopt;
  const auto prompt_col =
      f.prompt_field ? column(*f.prompt_field) : std::nullopt;
  const auto binary_col =
      f.binary_label_field ? column(*f.binary_label_field) : std::nullopt;

  std::vector<TextRecord> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto where = "row " + std::to_string(r) + " (line " +
                       std::to_string(row.line) + ")";
    if (row.fields.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(row.fields.size()));
    }
    RawRow raw;
    raw.id = row.fields[*id_col];
    raw.text = row.fields[*text_col];
    if (label_col) raw.label = row.fields[*label_col];
    if (prompt_col) raw.prompt = row.fields[*prompt_col];
    if (binary_col) raw.binary_label = row.fields[*binary_col];
    out.push_back(make_record(std::move(raw), where, cfg));
  }
  return out;
}

inline std::optional<std::string> json_scalar(const nlohmann::json& obj,
                                              const std::string& key,
                                              const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  if (it->is_boolean() || it->is_number()) return it->dump();
  throw DataError(where + ": field '" + key + "' is not a scalar");
}

inline std::vector<TextRecord> parse_jsonl_records(std::string_view content,
                                                   const FormatConfig& cfg) {
  std::vector<TextRecord> out;
  const auto lines = text::split_lines(content);
  const auto& f = cfg.fields;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = "row " + std::to_string(out.size() + 1) + " (line " +
                       std::to_string(i + 1) + ")";
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(where + ": not a JSON object");
    RawRow raw;
    auto id = json_scalar(obj, f.id_field, where);
    if (!id) throw DataError(where + ": missing mapped field '" + f.id_field + "'");
    auto txt = json_scalar(obj, f.text_field, where);
    if (!txt) {
      throw DataError(where + ": missing mapped field '" + f.text_field + "'");
    }
    raw.id = std::move(*id);
    raw.text = std::move(*txt);
    if (f.label_field) raw.label = json_scalar(obj, *f.label_field, where);
    if (f.prompt_field) raw.prompt = json_scalar(obj, *f.prompt_field, where);
    if (f.binary_label_field) {
      raw.binary_label = json_scalar(obj, *f.binary_label_field, where);
    }
    out.push_back(make_record(std::move(raw), where, cfg));
  }
  return out;
}

}  // namespace detail

// Parses in-memory dataset content. `format` must not be automatic.
inline std::vector<TextRecord> parse_dataset_content(std::string_view content,
                                                     DatasetFormat format,
                                                     const FormatConfig& cfg) {
  std::vector<TextRecord> records;
  switch (format) {
    case DatasetFormat::jsonl:
      records = detail::parse_jsonl_records(content, cfg);
      break;
    case DatasetFormat::tsv:
      records = detail::parse_delimited_records(
          content, cfg.delimiter.value_or('\t'), cfg);
      break;
    case DatasetFormat::csv:
      records = detail::parse_delimited_records(
          content, cfg.delimiter.value_or(','), cfg);
      break;
    case DatasetFormat::automatic:
      throw ConfigError("dataset format must be resolved before parsing");
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!seen.insert(records[i].id).second) {
      throw DataError("row " + std::to_string(i + 1) + ": duplicate id '" +
                      records[i].id + "'");
    }
  }
  return records;
}

inline std::vector<TextRecord> parse_dataset(const std::string& path,
                                             const FormatConfig& cfg = {}) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DataError("dataset file not found: '" + path + "'");
  }
  const auto content = text::read_file(path);
  try {
    return parse_dataset_content(
        content, detail::resolve_format(path, cfg.format), cfg);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

struct DatasetStats {
  std::size_t total = 0;
  std::size_t human = 0;
  std::size_t machine = 0;
  std::size_t unlabeled = 0;  // records without any gold label
  std::array<std::size_t, all_label7.size()> per_label{};

  bool operator==(const DatasetStats&) const = default;
};

inline DatasetStats compute_stats(std::span<const TextRecord> records) {
  DatasetStats s;
  for (const auto& r : records) {
    ++s.total;
    std::optional<Label2> binary = r.gold2;
    if (!binary && r.gold7) binary = to_binary(*r.gold7);
    if (!binary) {
      ++s.unlabeled;
    } else if (*binary == Label2::human) {
      ++s.human;
    } else {
      ++s.machine;
    }
    if (r.gold7) ++s.per_label[static_cast<std::size_t>(*r.gold7)];
  }
  return s;
}

inline nlohmann::ordered_json to_json(const DatasetStats& s) {
  nlohmann::ordered_json labels = nlohmann::ordered_json::object();
  for (auto l : all_label7) {
    labels[std::string(name(l))] = s.per_label[static_cast<std::size_t>(l)];
  }
  return {{"human", s.human},         {"machine", s.machine},
          {"total", s.total},         {"unlabeled", s.unlabeled},
          {"labels", std::move(labels)}};
}

namespace detail {

inline std::string group_thousands(std::size_t n) {
  auto digits = std::to_string(n);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (digits.size() - i) % 3 == 0) out.push_back(',');
    out.push_back(digits[i]);
  }
  return out;
}

}  // namespace detail

// Split-level table in the style of a dataset distribution table, followed
// by per-label counts.
inline std::string render_stats_table(
    const std::vector<std::pair<std::string, DatasetStats>>& splits) {
  using detail::group_thousands;
  std::size_t w = 10;
  for (const auto& [split, _] : splits) w = std::max(w, split.size() + 2);
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "Split" << std::right
     << std::setw(10) << "Human" << std::setw(10) << "Machine"
     << std::setw(10) << "Total" << '\n';
  for (const auto& [split, s] : splits) {
    os << std::left << std::setw(static_cast<int>(w)) << split << std::right
       << std::setw(10) << group_thousands(s.human) << std::setw(10)
       << group_thousands(s.machine) << std::setw(10)
       << group_thousands(s.total) << '\n';
  }
  os << '\n' << std::left << std::setw(14) << "Label";
  for (const auto& [split, _] : splits) {
    os << std::right << std::setw(static_cast<int>(std::max<std::size_t>(
                            10, split.size() + 2)))
       << split;
  }
  os << '\n';
  for (auto l : all_label7) {
    os << std::left << std::setw(14) << name(l);
    for (const auto& [split, s] : splits) {
      os << std::right
         << std::setw(static_cast<int>(std::max<std::size_t>(10, split.size() + 2)))
         << group_thousands(s.per_label[static_cast<std::size_t>(l)]);
    }
    os << '\n';
  }
  return os.str();
}

// Most frequent gold7 label; ties and empty input resolve to the earliest
// label in canonical order.
inline Label7 most_frequent_label7(std::span<const TextRecord> records) {
  const auto s = compute_stats(records);
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.per_label.size(); ++i) {
    if (s.per_label[i] > s.per_label[best]) best = i;
  }
  return all_label7[best];
}

}  // namespace mgtd
