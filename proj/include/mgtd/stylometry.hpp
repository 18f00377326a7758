#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/text.hpp"

namespace mgtd {

// Whitespace split, punctuation trimmed from both ends of each token, ASCII
// case-folded, empty tokens dropped. Interior punctuation ("don't") stays.
inline std::vector<std::string> tokenize(std::string_view input) {
  std::vector<std::string> tokens;
  const auto cps = text::decode_utf8(input);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && text::is_space(cps[i].value)) ++i;
    std::size_t j = i;
    while (j < cps.size() && !text::is_space(cps[j].value)) ++j;
    std::size_t first = i;
    std::size_t last = j;
    while (first < last && text::is_punct(cps[first].value)) ++first;
    while (last > first && text::is_punct(cps[last - 1].value)) --last;
    if (first < last) {
      const auto begin = cps[first].offset;
      const auto end = cps[last - 1].offset + cps[last - 1].length;
      std::string token(input.substr(begin, end - begin));
      for (auto& c : token) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
      tokens.push_back(std::move(token));
    }
    i = j;
  }
  return tokens;
}

// Type-token ratio over a token list; 0 for no tokens.
inline double type_token_ratio(std::span<const std::string> tokens) {
  if (tokens.empty()) return 0.0;
  std::unordered_set<std::string_view> types(tokens.begin(), tokens.end());
  return static_cast<double>(types.size()) /
         static_cast<double>(tokens.size());
}

inline double lexical_diversity(std::string_view input) {
  const auto tokens = tokenize(input);
  return type_token_ratio(tokens);
}

struct StyloFeatures {
  double lexical_diversity = 0.0;
  std::size_t sequence_length = 0;
  double avg_word_length = 0.0;  // code points per token
};

inline StyloFeatures stylo_features(std::string_view input) {
  const auto tokens = tokenize(input);
  StyloFeatures f;
  f.sequence_length = tokens.size();
  f.lexical_diversity = type_token_ratio(tokens);
  if (!tokens.empty()) {
    std::size_t chars = 0;
    for (const auto& t : tokens) chars += text::decode_utf8(t).size();
    f.avg_word_length =
        static_cast<double>(chars) / static_cast<double>(tokens.size());
  }
  return f;
}

struct BinSpec {
  std::size_t diversity_bins = 20;      // equal-width over [0, 1]
  std::size_t length_bin_width = 100;   // tokens
  std::size_t length_bins = 20;         // plus one trailing overflow bin

  void validate() const {
    if (diversity_bins == 0 || length_bin_width == 0 || length_bins == 0) {
      throw ConfigError("histogram bin counts and widths must be positive");
    }
  }

  std::size_t diversity_bin(double value) const {
    if (value <= 0.0) return 0;
    auto idx = static_cast<std::size_t>(value * static_cast<double>(diversity_bins));
    return std::min(idx, diversity_bins - 1);
  }

  std::size_t length_bin(std::size_t length) const {
    return std::min(length / length_bin_width, length_bins);
  }
};

struct LabelProfile {
  std::size_t count = 0;
  std::vector<std::size_t> diversity_histogram;
  std::vector<std::size_t> length_histogram;
  double mean_lexical_diversity = 0.0;
  double mean_sequence_length = 0.0;
  double mean_avg_word_length = 0.0;
};

struct CorpusProfile {
  BinSpec bins;
  std::array<LabelProfile, all_label7.size()> labels;

  const LabelProfile& at(Label7 label) const {
    return labels[static_cast<std::size_t>(label)];
  }
};

inline CorpusProfile profile_corpus(std::span<const TextRecord> records,
                                    const BinSpec& bins = {}) {
  bins.validate();
  CorpusProfile profile;
  profile.bins = bins;
  for (auto& lp : profile.labels) {
    lp.diversity_histogram.assign(bins.diversity_bins, 0);
    lp.length_histogram.assign(bins.length_bins + 1, 0);
  }
  std::array<double, all_label7.size()> sum_div{};
  std::array<double, all_label7.size()> sum_len{};
  std::array<double, all_label7.size()> sum_wl{};
  for (const auto& r : records) {
    if (!r.gold7) {
      throw DataError("record '" + r.id + "' has no attribution label");
    }
    const auto k = static_cast<std::size_t>(*r.gold7);
    const auto f = stylo_features(r.text);
    auto& lp = profile.labels[k];
    ++lp.count;
    ++lp.diversity_histogram[bins.diversity_bin(f.lexical_diversity)];
    ++lp.length_histogram[bins.length_bin(f.sequence_length)];
    sum_div[k] += f.lexical_diversity;
    sum_len[k] += static_cast<double>(f.sequence_length);
    sum_wl[k] += f.avg_word_length;
  }
  for (std::size_t k = 0; k < profile.labels.size(); ++k) {
    auto& lp = profile.labels[k];
    if (lp.count == 0) continue;
    const auto n = static_cast<double>(lp.count);
    lp.mean_lexical_diversity = sum_div[k] / n;
    lp.mean_sequence_length = sum_len[k] / n;
    lp.mean_avg_word_length = sum_wl[k] / n;
  }
  return profile;
}

namespace detail {

inline std::string shortest(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const CorpusProfile& p) {
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (auto l : all_label7) {
    const auto& lp = p.at(l);
    labels.push_back({{"label", name(l)},
                      {"count", lp.count},
                      {"mean_lexical_diversity", lp.mean_lexical_diversity},
                      {"mean_sequence_length", lp.mean_sequence_length},
                      {"mean_avg_word_length", lp.mean_avg_word_length},
                      {"diversity_histogram", lp.diversity_histogram},
                      {"length_histogram", lp.length_histogram}});
  }
  return {{"bins",
           {{"diversity_bins", p.bins.diversity_bins},
            {"length_bin_width", p.bins.length_bin_width},
            {"length_bins", p.bins.length_bins}}},
          {"labels", std::move(labels)}};
}

// CSV rows (label, bin_start, bin_end, count) for the diversity histogram.
inline std::string diversity_csv(const CorpusProfile& p) {
  std::ostringstream os;
  os << "label,bin_start,bin_end,count\n";
  const auto n = static_cast<double>(p.bins.diversity_bins);
  for (auto l : all_label7) {
    const auto& h = p.at(l).diversity_histogram;
    for (std::size_t i = 0; i < h.size(); ++i) {
      os << name(l) << ',' << detail::shortest(static_cast<double>(i) / n)
         << ',' << detail::shortest(static_cast<double>(i + 1) / n) << ','
         << h[i] << '\n';
    }
  }
  return os.str();
}

// Same layout for sequence length; the last bin is open-ended ("inf").
inline std::string length_csv(const CorpusProfile& p) {
  std::ostringstream os;
  os << "label,bin_start,bin_end,count\n";
  const auto w = p.bins.length_bin_width;
  for (auto l : all_label7) {
    const auto& h = p.at(l).length_histogram;
    for (std::size_t i = 0; i < h.size(); ++i) {
      os << name(l) << ',' << i * w << ',';
      if (i + 1 == h.size()) {
        os << "inf";
      } else {
        os << (i + 1) * w;
      }
      os << ',' << h[i] << '\n';
    }
  }
  return os.str();
}

}  // namespace mgtd
