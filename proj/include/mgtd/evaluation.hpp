#pragma once

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "mgtd/backends.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/text.hpp"

namespace mgtd {

// Gold labels index rows, predicted labels index columns.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::size_t> counts;  // row-major, labels.size()^2

  std::size_t size() const { return labels.size(); }
  std::size_t at(std::size_t gold, std::size_t pred) const {
    return counts[gold * size() + pred];
  }
  std::size_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  }
  std::size_t trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < size(); ++i) t += at(i, i);
    return t;
  }
  std::size_t row_sum(std::size_t r) const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < size(); ++c) s += at(r, c);
    return s;
  }
  std::size_t col_sum(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t r = 0; r < size(); ++r) s += at(r, c);
    return s;
  }
};

inline ConfusionMatrix confusion(std::span<const std::string> gold,
                                 std::span<const std::string> pred,
                                 std::span<const std::string> labels) {
  if (gold.size() != pred.size()) {
    throw DataError("gold and predicted label lists differ in length (" +
                    std::to_string(gold.size()) + " vs " +
                    std::to_string(pred.size()) + ")");
  }
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!index.emplace(labels[i], i).second) {
      throw DataError("duplicate label '" + labels[i] + "' in label set");
    }
  }
  ConfusionMatrix cm;
  cm.labels.assign(labels.begin(), labels.end());
  cm.counts.assign(labels.size() * labels.size(), 0);
  auto lookup = [&](const std::string& l, const char* side) {
    auto it = index.find(l);
    if (it == index.end()) {
      throw DataError(std::string(side) + " label '" + l +
                      "' is not in the label set");
    }
    return it->second;
  };
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++cm.counts[lookup(gold[i], "gold") * labels.size() +
                lookup(pred[i], "predicted")];
  }
  return cm;
}

struct ClassReport {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

inline double harmonic_f1(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

// Undefined precision or recall (empty column or row) counts as 0.
inline std::vector<ClassReport> per_class_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassReport> out;
  out.reserve(cm.size());
  for (std::size_t k = 0; k < cm.size(); ++k) {
    ClassReport r;
    r.label = cm.labels[k];
    const auto tp = static_cast<double>(cm.at(k, k));
    const auto col = cm.col_sum(k);
    const auto row = cm.row_sum(k);
    r.precision = col ? tp / static_cast<double>(col) : 0.0;
    r.recall = row ? tp / static_cast<double>(row) : 0.0;
    r.f1 = harmonic_f1(r.precision, r.recall);
    r.support = row;
    out.push_back(std::move(r));
  }
  return out;
}

struct MacroScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline MacroScores macro_metrics(std::span<const ClassReport> reports) {
  if (reports.empty()) throw DataError("macro average of an empty report list");
  MacroScores m;
  for (const auto& r : reports) {
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
  }
  const auto n = static_cast<double>(reports.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const auto t = cm.total();
  return t ? static_cast<double>(cm.trace()) / static_cast<double>(t) : 0.0;
}

// How predictions without a usable backend answer enter the metrics.
enum class ScoringMode { fallback, exclude };

inline ScoringMode parse_scoring_mode(std::string_view s) {
  if (s == "fallback") return ScoringMode::fallback;
  if (s == "exclude") return ScoringMode::exclude;
  throw ConfigError("unknown scoring mode '" + std::string(s) +
                    "' (expected fallback or exclude)");
}

inline std::string_view name(ScoringMode m) {
  return m == ScoringMode::fallback ? "fallback" : "exclude";
}

struct EvalReport {
  TaskId task = TaskId::task_a;
  ScoringMode scoring = ScoringMode::fallback;
  std::vector<ClassReport> classes;
  MacroScores macro;
  double accuracy = 0.0;
  std::size_t support = 0;  // scored samples
  std::size_t filtered = 0;
  std::size_t unparsed = 0;
  std::size_t error = 0;
  std::size_t excluded = 0;
  ConfusionMatrix matrix;
};

// Scores predictions against gold records over the task's canonical label
// set. In fallback mode a non-ok prediction uses its fallback label, or
// `default_label` when it has none; in exclude mode it is dropped.
inline EvalReport evaluate(std::span<const TextRecord> gold_records,
                           std::span<const PredictionRecord> predictions,
                           TaskId task, ScoringMode scoring,
                           const std::string& default_label) {
  if (scoring == ScoringMode::fallback && !is_task_label(task, default_label)) {
    throw ConfigError("default label '" + default_label +
                      "' is not a canonical " + std::string(name(task)) +
                      " label");
  }
  std::unordered_map<std::string_view, const PredictionRecord*> by_id;
  for (const auto& p : predictions) {
    if (p.task != task) {
      throw DataError("prediction '" + p.id + "' is for " +
                      std::string(name(p.task)) + ", expected " +
                      std::string(name(task)));
    }
    if (!by_id.emplace(p.id, &p).second) {
      throw DataError("duplicate prediction id '" + p.id + "'");
    }
  }
  EvalReport report;
  report.task = task;
  report.scoring = scoring;
  std::vector<std::string> gold;
  std::vector<std::string> pred;
  std::unordered_set<std::string_view> gold_ids;
  for (const auto& r : gold_records) {
    gold_ids.insert(r.id);
    auto g = gold_label(r, task);
    if (!g) throw DataError("gold record '" + r.id + "' has no label");
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      throw DataError("no prediction for gold id '" + r.id + "'");
    }
    const auto& p = *it->second;
    switch (p.status) {
      case PredictionStatus::ok: break;
      case PredictionStatus::filtered: ++report.filtered; break;
      case PredictionStatus::unparsed: ++report.unparsed; break;
      case PredictionStatus::error: ++report.error; break;
    }
    if (p.status != PredictionStatus::ok && scoring == ScoringMode::exclude) {
      ++report.excluded;
      continue;
    }
    gold.push_back(std::move(*g));
    pred.push_back(p.final_label().value_or(default_label));
  }
  for (const auto& p : predictions) {
    if (!gold_ids.contains(p.id)) {
      throw DataError("prediction id '" + p.id + "' is not in the gold set");
    }
  }
  const auto labels = task_labels(task);
  report.matrix = confusion(gold, pred, labels);
  report.classes = per_class_metrics(report.matrix);
  report.macro = macro_metrics(report.classes);
  report.accuracy = accuracy(report.matrix);
  report.support = gold.size();
  return report;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"label", c.label},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"f1", c.f1},
                       {"support", c.support}});
  }
  nlohmann::ordered_json matrix = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < r.matrix.size(); ++g) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < r.matrix.size(); ++p) {
      row.push_back(r.matrix.at(g, p));
    }
    matrix.push_back(std::move(row));
  }
  return {{"task", name(r.task)},
          {"scoring", name(r.scoring)},
          {"support", r.support},
          {"accuracy", r.accuracy},
          {"labels", std::move(classes)},
          {"macro",
           {{"precision", r.macro.precision},
            {"recall", r.macro.recall},
            {"f1", r.macro.f1}}},
          {"failures",
           {{"filtered", r.filtered},
            {"unparsed", r.unparsed},
            {"error", r.error},
            {"excluded", r.excluded}}},
          {"confusion",
           {{"labels", r.matrix.labels}, {"matrix", std::move(matrix)}}}};
}

// Aligned text table: one row per label, then the macro average.
inline std::string render_report_table(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(14) << "Label" << std::right << std::setw(11)
     << "Precision" << std::setw(9) << "Recall" << std::setw(9) << "F1"
     << std::setw(10) << "Support" << '\n';
  for (const auto& c : r.classes) {
    os << std::left << std::setw(14) << c.label << std::right << std::setw(11)
       << c.precision << std::setw(9) << c.recall << std::setw(9) << c.f1
       << std::setw(10) << c.support << '\n';
  }
  os << std::left << std::setw(14) << "macro avg" << std::right
     << std::setw(11) << r.macro.precision << std::setw(9) << r.macro.recall
     << std::setw(9) << r.macro.f1 << std::setw(10) << r.support << '\n';
  os << std::left << std::setw(14) << "accuracy" << std::right
     << std::setw(29) << r.accuracy << std::setw(10) << r.support << '\n';
  os << "\nfiltered: " << r.filtered << "  unparsed: " << r.unparsed
     << "  error: " << r.error << "  excluded: " << r.excluded << '\n';
  os << "non-ok predictions: "
     << (r.scoring == ScoringMode::fallback ? "scored under fallback labels"
                                            : "excluded from scoring")
     << '\n';
  return os.str();
}

enum class Consistency { independent, task_a_priority, task_b_priority };

inline Consistency parse_consistency(std::string_view s) {
  if (s == "independent") return Consistency::independent;
  if (s == "task_a_priority") return Consistency::task_a_priority;
  if (s == "task_b_priority") return Consistency::task_b_priority;
  throw ConfigError("unknown consistency mode '" + std::string(s) + "'");
}

struct SubmissionRow {
  std::string id;
  Label2 task_a = Label2::machine;
  Label7 task_b = Label7::human_story;

  bool operator==(const SubmissionRow&) const = default;
};

// Pairs Task-A and Task-B predictions by id, in Task-A order.
// task_a_priority keeps A and repairs B: A = human forces Human_story; A =
// machine with B = Human_story takes the highest-scoring machine label from
// B's scores, or `default_machine` when B carries no scores.
// task_b_priority derives A from B.
inline std::vector<SubmissionRow> combine(
    std::span<const PredictionRecord> task_a,
    std::span<const PredictionRecord> task_b, Consistency mode,
    Label7 default_machine = Label7::gemma_2_9b) {
  if (default_machine == Label7::human_story) {
    throw ConfigError("combine default machine label must not be Human_story");
  }
  if (task_a.size() != task_b.size()) {
    throw DataError("task_a and task_b prediction sets differ in size");
  }
  std::unordered_map<std::string_view, const PredictionRecord*> b_by_id;
  for (const auto& p : task_b) {
    if (p.task != TaskId::task_b) {
      throw DataError("prediction '" + p.id + "' in the task_b set is not task_b");
    }
    if (!b_by_id.emplace(p.id, &p).second) {
      throw DataError("duplicate task_b prediction id '" + p.id + "'");
    }
  }
  std::unordered_set<std::string_view> a_ids;
  std::vector<SubmissionRow> rows;
  rows.reserve(task_a.size());
  for (const auto& a : task_a) {
    if (a.task != TaskId::task_a) {
      throw DataError("prediction '" + a.id + "' in the task_a set is not task_a");
    }
    if (!a_ids.insert(a.id).second) {
      throw DataError("duplicate task_a prediction id '" + a.id + "'");
    }
    auto it = b_by_id.find(a.id);
    if (it == b_by_id.end()) {
      throw DataError("id '" + a.id + "' has no task_b prediction");
    }
    const auto& b = *it->second;
    const auto la = a.final_label();
    const auto lb = b.final_label();
    if (!la || !lb) {
      throw DataError("id '" + a.id + "' has an unlabeled prediction");
    }
    SubmissionRow row{a.id, *parse_label2(*la), normalize_label(*lb)};
    switch (mode) {
      case Consistency::independent:
        break;
      case Consistency::task_a_priority:
        if (row.task_a == Label2::human) {
          row.task_b = Label7::human_story;
        } else if (row.task_b == Label7::human_story) {
          row.task_b = default_machine;
          double best = -1.0;
          for (const auto& [label, score] : b.scores) {
            const auto l = normalize_label(label);
            if (l != Label7::human_story && score > best) {
              best = score;
              row.task_b = l;
            }
          }
        }
        break;
      case Consistency::task_b_priority:
        row.task_a = to_binary(row.task_b);
        break;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string render_submission_csv(std::span<const SubmissionRow> rows) {
  std::string out = "id,task_a,task_b\n";
  for (const auto& r : rows) {
    out += text::csv_escape(r.id);
    out.push_back(',');
    out += name(r.task_a);
    out.push_back(',');
    out += name(r.task_b);
    out.push_back('\n');
  }
  return out;
}

}  // namespace mgtd
