#pragma once

// Test-only helpers: synthetic corpora, stub backends and a brute-force
// metric reference that shares no code with the evaluation module.

#include <unistd.h>

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "mgtd/backends.hpp"
#include "mgtd/cli.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/text.hpp"

namespace mgtd::testing {

// Seven classes with pairwise-disjoint word vocabularies.
struct SyntheticCorpus {
  std::vector<std::vector<std::string>> vocab;  // per Label7
  std::mt19937_64 rng;

  explicit SyntheticCorpus(std::uint64_t seed, std::size_t words_per_class = 40)
      : rng(seed) {
    std::set<std::string> used;
    std::uniform_int_distribution<int> len(4, 8);
    std::uniform_int_distribution<int> letter(0, 25);
    vocab.resize(all_label7.size());
    for (auto& v : vocab) {
      while (v.size() < words_per_class) {
        std::string w;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) w.push_back(static_cast<char>('a' + letter(rng)));
        if (used.insert(w).second) v.push_back(w);
      }
    }
  }

  std::string text_for(Label7 label, std::size_t min_words = 20,
                       std::size_t max_words = 40) {
    const auto& v = vocab[static_cast<std::size_t>(label)];
    std::uniform_int_distribution<std::size_t> count(min_words, max_words);
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    std::string out;
    const auto n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out.push_back(' ');
      out += v[pick(rng)];
    }
    out.push_back('.');
    return out;
  }

  std::vector<TextRecord> records(std::size_t per_class,
                                  const std::string& id_prefix) {
    std::vector<TextRecord> out;
    for (std::size_t i = 0; i < per_class; ++i) {
      for (auto l : all_label7) {
        TextRecord r;
        r.id = id_prefix + std::to_string(out.size());
        r.text = text_for(l);
        r.source_prompt = "Write a short story.";
        r.gold7 = l;
        r.gold2 = to_binary(l);
        out.push_back(std::move(r));
      }
    }
    return out;
  }
};

inline std::string to_csv(const std::vector<TextRecord>& records) {
  std::string out = "id,prompt,text,label\n";
  for (const auto& r : records) {
    out += text::csv_escape(r.id) + "," +
           text::csv_escape(r.source_prompt.value_or("")) + "," +
           text::csv_escape(r.text) + "," +
           (r.gold7 ? std::string(name(*r.gold7)) : std::string()) + "\n";
  }
  return out;
}

// Reference P/R/F1 by direct pair counting.
struct ReferenceScores {
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> support;
  double macro_p = 0, macro_r = 0, macro_f1 = 0;
};

inline ReferenceScores brute_force_scores(const std::vector<std::string>& gold,
                                          const std::vector<std::string>& pred,
                                          const std::vector<std::string>& labels) {
  ReferenceScores s;
  for (const auto& l : labels) {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i] == l;
      const bool p = pred[i] == l;
      if (g) ++support;
      if (g && p) ++tp;
      if (!g && p) ++fp;
      if (g && !p) ++fn;
    }
    const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    s.precision.push_back(prec);
    s.recall.push_back(rec);
    s.f1.push_back(f);
    s.support.push_back(support);
  }
  for (std::size_t k = 0; k < labels.size(); ++k) {
    s.macro_p += s.precision[k] / double(labels.size());
    s.macro_r += s.recall[k] / double(labels.size());
    s.macro_f1 += s.f1[k] / double(labels.size());
  }
  return s;
}

// Answers with each example's gold label, except for ids in `filtered`
// (content-filter reply) and `failing` (transport errors for the first
// `failures_before_success` attempts). Safe-mode prompts are filtered only
// when `filter_safe_prompts` is set.
class StubBackend final : public Backend {
 public:
  std::unordered_map<std::string, std::string> answers;
  std::unordered_set<std::string> filtered;
  std::unordered_set<std::string> failing;
  std::uint32_t failures_before_success = 0;
  bool filter_safe_prompts = true;
  std::string filter_message =
      "The response was filtered due to the prompt triggering Azure OpenAI's "
      "content management policy. Please modify your prompt and retry.";

  mutable std::atomic<std::size_t> calls{0};
  mutable std::atomic<std::size_t> in_flight{0};
  mutable std::atomic<std::size_t> max_in_flight{0};

  BackendReply complete(const InstructionExample& ex) const override {
    ++calls;
    const auto now = ++in_flight;
    auto prev = max_in_flight.load();
    while (now > prev && !max_in_flight.compare_exchange_weak(prev, now)) {
    }
    struct Leave {
      std::atomic<std::size_t>& c;
      ~Leave() { --c; }
    } leave{in_flight};
    if (failing.contains(ex.id)) {
      std::lock_guard lock(mutex_);
      auto& n = attempts_[ex.id];
      if (n++ < failures_before_success) {
        return {BackendReply::Kind::transport_error, "connection reset", {}};
      }
    }
    const bool safe = ex.instruction.find("DO NOT apply any content filtering") !=
                      std::string::npos;
    if (filtered.contains(ex.id) && (!safe || filter_safe_prompts)) {
      return {BackendReply::Kind::text, filter_message, {}};
    }
    auto it = answers.find(ex.id);
    return {BackendReply::Kind::text,
            it == answers.end() ? std::string("no idea") : it->second,
            {}};
  }

 private:
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::uint32_t> attempts_;
};

// Fresh scratch directory with helpers for driving the CLI in-process.
struct Workspace {
  std::filesystem::path root;

  explicit Workspace(const std::string& tag) {
    root = std::filesystem::temp_directory_path() /
           ("mgtd_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
  }
  ~Workspace() {
    std::error_code ec;
    std::filesystem::remove_all(root, ec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  std::string path(const std::string& rel) const { return (root / rel).string(); }

  std::string write(const std::string& rel, const std::string& content) const {
    const auto p = root / rel;
    std::filesystem::create_directories(p.parent_path());
    text::write_file(p.string(), content);
    return p.string();
  }

  std::string write_config(const std::string& rel,
                           const nlohmann::json& cfg) const {
    return write(rel, cfg.dump(2));
  }

  std::string read(const std::string& rel) const {
    return text::read_file(path(rel));
  }

  struct Result {
    int code = 0;
    std::string out;
    std::string err;
  };

  static Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }
};

}  // namespace mgtd::testing
