#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/labels.hpp"
#include "mgtd/stylometry.hpp"
#include "mgtd/text.hpp"

namespace mgtd::baseline {

struct FeatureSpec {
  std::vector<std::uint32_t> orders{1, 2, 3};  // character n-gram orders
  std::uint64_t dimension = std::uint64_t{1} << 18;
  bool stylometric = true;  // append (diversity, length, avg word length)

  static constexpr std::size_t stylometric_width = 3;

  std::size_t width() const {
    return static_cast<std::size_t>(dimension) +
           (stylometric ? stylometric_width : 0);
  }

  void validate() const {
    if (orders.empty()) throw ConfigError("feature orders must be non-empty");
    for (auto n : orders) {
      if (n == 0) throw ConfigError("feature orders must be positive");
    }
    if (dimension == 0 || !std::has_single_bit(dimension)) {
      throw ConfigError("hashed feature dimension must be a power of two");
    }
    if (dimension > (std::uint64_t{1} << 30)) {
      throw ConfigError("hashed feature dimension exceeds 2^30");
    }
  }

  bool operator==(const FeatureSpec&) const = default;
};

// Sparse feature vector: strictly increasing indices.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t size() const { return index.size(); }
};

inline constexpr std::uint64_t fnv_offset_basis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t fnv_prime = 0x100000001b3ULL;

// 64-bit FNV-1a; constant seed so hashes agree across runs and platforms.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t h = fnv_offset_basis) {
  for (auto b : bytes) {
    h ^= b;
    h *= fnv_prime;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = fnv_offset_basis) {
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(s.data()),
                         s.size()),
               h);
}

// An n-gram hashes as FNV-1a over one order byte followed by its UTF-8 bytes.
inline std::uint64_t ngram_hash(std::uint32_t order, std::string_view gram) {
  const unsigned char tag = static_cast<unsigned char>(order & 0xFF);
  return fnv1a(gram, fnv1a(std::span(&tag, 1)));
}

// Counts of code-point n-grams hashed into `dimension` buckets and
// L2-normalized, followed by the unscaled stylometric block.
inline SparseVector featurize(std::string_view input, const FeatureSpec& spec) {
  const auto cps = text::decode_utf8(input);
  std::vector<std::uint32_t> buckets;
  const auto mask = spec.dimension - 1;
  for (auto n : spec.orders) {
    if (cps.size() < n) continue;
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      const auto begin = cps[i].offset;
      const auto end = cps[i + n - 1].offset + cps[i + n - 1].length;
      buckets.push_back(static_cast<std::uint32_t>(
          ngram_hash(n, input.substr(begin, end - begin)) & mask));
    }
  }
  std::sort(buckets.begin(), buckets.end());

  SparseVector v;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < buckets.size();) {
    std::size_t j = i;
    while (j < buckets.size() && buckets[j] == buckets[i]) ++j;
    const auto count = static_cast<double>(j - i);
    v.index.push_back(buckets[i]);
    v.value.push_back(count);
    norm2 += count * count;
    i = j;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v.value) x *= inv;
  }
  if (spec.stylometric) {
    const auto f = stylo_features(input);
    const auto base = static_cast<std::uint32_t>(spec.dimension);
    const double block[] = {f.lexical_diversity,
                            static_cast<double>(f.sequence_length),
                            f.avg_word_length};
    for (std::uint32_t k = 0; k < 3; ++k) {
      v.index.push_back(base + k);
      v.value.push_back(block[k]);
    }
  }
  return v;
}

struct TrainConfig {
  double learning_rate = 1.0;
  std::uint32_t epochs = 10;
  std::size_t batch_size = 32;
  double l2 = 1e-6;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning rate must be positive");
    }
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(l2 > 0.0) || !std::isfinite(l2)) {
      throw ConfigError("L2 strength must be positive");
    }
  }
};

struct BaselineModel {
  TaskId task = TaskId::task_a;
  std::vector<std::string> labels;  // canonical order
  FeatureSpec spec;
  std::vector<double> weights;  // row-major, labels.size() x spec.width()
  std::vector<double> bias;
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  // Stylometric block standardization learned from the training split.
  std::array<double, FeatureSpec::stylometric_width> stylo_mean{0, 0, 0};
  std::array<double, FeatureSpec::stylometric_width> stylo_scale{1, 1, 1};

  std::size_t width() const { return spec.width(); }

  std::span<double> row(std::size_t k) {
    return std::span(weights).subspan(k * width(), width());
  }
  std::span<const double> row(std::size_t k) const {
    return std::span(weights).subspan(k * width(), width());
  }

  static BaselineModel zeros(TaskId task, FeatureSpec spec) {
    spec.validate();
    BaselineModel m;
    m.task = task;
    m.labels = task_labels(task);
    m.spec = std::move(spec);
    m.weights.assign(m.labels.size() * m.spec.width(), 0.0);
    m.bias.assign(m.labels.size(), 0.0);
    return m;
  }
};

// Applies (x - mean) * scale to the trailing stylometric entries.
inline void standardize(SparseVector& x, const FeatureSpec& spec,
                        std::span<const double> mean,
                        std::span<const double> scale) {
  if (!spec.stylometric) return;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x.index[i] < spec.dimension) continue;
    const auto k = x.index[i] - spec.dimension;
    x.value[i] = (x.value[i] - mean[k]) * scale[k];
  }
}

inline std::vector<double> logits(const BaselineModel& m,
                                  const SparseVector& x) {
  std::vector<double> z(m.bias);
  for (std::size_t k = 0; k < z.size(); ++k) {
    const auto w = m.row(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += w[x.index[i]] * x.value[i];
    z[k] += acc;
  }
  return z;
}

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.begin(), z.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

// First maximum wins, so ties resolve to the earlier canonical label.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

struct Prediction {
  std::string label;
  std::vector<double> scores;  // aligned with model.labels
};

inline Prediction predict_features(const BaselineModel& m,
                                   const SparseVector& x) {
  auto p = softmax(logits(m, x));
  const auto k = argmax(p);
  return {m.labels[k], std::move(p)};
}

inline Prediction predict(const BaselineModel& m, std::string_view input) {
  auto x = featurize(input, m.spec);
  standardize(x, m.spec, m.stylo_mean, m.stylo_scale);
  return predict_features(m, x);
}

struct Gradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

// Mean cross-entropy over the samples plus (l2 / 2) * ||W||^2. When `grad`
// is non-null it receives the exact gradient of that objective.
inline double objective(const BaselineModel& m,
                        std::span<const SparseVector> xs,
                        std::span<const std::size_t> ys, double l2,
                        Gradient* grad = nullptr) {
  const auto k_count = m.labels.size();
  const auto width = m.width();
  if (grad) {
    grad->weights.assign(m.weights.size(), 0.0);
    grad->bias.assign(k_count, 0.0);
  }
  double loss = 0.0;
  const double inv_n = xs.empty() ? 0.0 : 1.0 / static_cast<double>(xs.size());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const auto z = logits(m, xs[s]);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double log_norm = mx + std::log(sum);
    loss += (log_norm - z[ys[s]]) * inv_n;
    if (!grad) continue;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double residual =
          (std::exp(z[k] - log_norm) - (k == ys[s] ? 1.0 : 0.0)) * inv_n;
      grad->bias[k] += residual;
      double* row = grad->weights.data() + k * width;
      const auto& x = xs[s];
      for (std::size_t i = 0; i < x.size(); ++i) {
        row[x.index[i]] += residual * x.value[i];
      }
    }
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    sq += m.weights[i] * m.weights[i];
    if (grad) grad->weights[i] += l2 * m.weights[i];
  }
  return loss + 0.5 * l2 * sq;
}

// Uniform integer in [0, n) from raw 64-bit draws, independent of the
// standard library's distribution implementation.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const auto limit = std::numeric_limits<std::uint64_t>::max() -
                     std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_below(rng, i)]);
  }
}

struct TrainResult {
  BaselineModel model;
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // full-data objective after each epoch
};

// Softmax regression by seeded, shuffled mini-batch gradient descent.
inline TrainResult train_features(std::span<const SparseVector> xs,
                                  std::span<const std::size_t> ys, TaskId task,
                                  const FeatureSpec& spec,
                                  const TrainConfig& config) {
  config.validate();
  spec.validate();
  TrainResult result{BaselineModel::zeros(task, spec), 0.0, {}};
  auto& m = result.model;
  m.seed = config.seed;
  m.epochs = config.epochs;

  result.initial_loss = objective(m, xs, ys, config.l2);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SparseVector> bx;
  std::vector<std::size_t> by;
  Gradient g;
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    seeded_shuffle(order, rng);
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const auto end = std::min(order.size(), start + config.batch_size);
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(xs[order[i]]);
        by.push_back(ys[order[i]]);
      }
      objective(m, bx, by, config.l2, &g);
      for (std::size_t i = 0; i < m.weights.size(); ++i) {
        m.weights[i] -= config.learning_rate * g.weights[i];
      }
      for (std::size_t k = 0; k < m.bias.size(); ++k) {
        m.bias[k] -= config.learning_rate * g.bias[k];
      }
    }
    result.epoch_loss.push_back(objective(m, xs, ys, config.l2));
  }
  for (double w : m.weights) {
    if (!std::isfinite(w)) {
      throw DataError("training diverged (non-finite weights); lower the "
                      "learning rate");
    }
  }
  return result;
}

inline TrainResult train(std::span<const TextRecord> records, TaskId task,
                         const FeatureSpec& spec, const TrainConfig& config) {
  if (records.empty()) throw DataError("cannot train on an empty corpus");
  const auto labels = task_labels(task);
  std::vector<SparseVector> xs;
  std::vector<std::size_t> ys;
  xs.reserve(records.size());
  ys.reserve(records.size());
  std::vector<bool> present(labels.size(), false);
  for (const auto& r : records) {
    const auto gold = gold_label(r, task);
    if (!gold) {
      throw DataError("record '" + r.id + "' has no gold label for " +
                      std::string(name(task)));
    }
    const auto k = static_cast<std::size_t>(
        std::find(labels.begin(), labels.end(), *gold) - labels.begin());
    present[k] = true;
    ys.push_back(k);
    xs.push_back(featurize(r.text, spec));
  }
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw DataError("training needs at least two distinct labels");
  }
  std::array<double, FeatureSpec::stylometric_width> mean{0, 0, 0};
  std::array<double, FeatureSpec::stylometric_width> scale{1, 1, 1};
  if (spec.stylometric) {
    std::array<double, FeatureSpec::stylometric_width> sq{0, 0, 0};
    const auto n = static_cast<double>(xs.size());
    for (const auto& x : xs) {
      for (std::size_t k = 0; k < mean.size(); ++k) {
        const double v = x.value[x.size() - mean.size() + k];
        mean[k] += v / n;
        sq[k] += v * v / n;
      }
    }
    for (std::size_t k = 0; k < mean.size(); ++k) {
      const double sd = std::sqrt(std::max(0.0, sq[k] - mean[k] * mean[k]));
      scale[k] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    for (auto& x : xs) standardize(x, spec, mean, scale);
  }
  auto result = train_features(xs, ys, task, spec, config);
  result.model.stylo_mean = mean;
  result.model.stylo_scale = scale;
  return result;
}

// ---------------------------------------------------------------------------
// Model file: "MGTDBLM\0", u32 version, then spec, labels, seed, epochs,
// stylometric mean and scale, weights and bias as little-endian IEEE-754 doubles, and a trailing FNV-1a
// checksum of everything before it.

inline constexpr std::string_view model_magic{"MGTDBLM\0", 8};
inline constexpr std::uint32_t model_format_version = 1;

namespace detail {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.append(s); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string path)
      : data_(data), path_(std::move(path)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::uint32_t{static_cast<unsigned char>(b[i])} << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= std::uint64_t{static_cast<unsigned char>(b[i])} << (8 * i);
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    return std::string(bytes(n));
  }
  std::size_t remaining() const { return data_.size() - pos_; }

  [[noreturn]] void corrupt(const std::string& why) const {
    throw DataError("corrupt model file '" + path_ + "': " + why);
  }
  void need(std::size_t n) const {
    if (remaining() < n) corrupt("truncated");
  }

 private:
  std::string_view data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_model(const BaselineModel& m) {
  detail::Writer w;
  w.bytes(model_magic);
  w.u32(model_format_version);
  w.u8(static_cast<std::uint8_t>(m.task));
  w.u32(static_cast<std::uint32_t>(m.spec.orders.size()));
  for (auto n : m.spec.orders) w.u32(n);
  w.u64(m.spec.dimension);
  w.u8(m.spec.stylometric ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(m.labels.size()));
  for (const auto& l : m.labels) w.str(l);
  w.u64(m.seed);
  w.u32(m.epochs);
  for (double v : m.stylo_mean) w.f64(v);
  for (double v : m.stylo_scale) w.f64(v);
  for (double v : m.weights) w.f64(v);
  for (double v : m.bias) w.f64(v);
  w.u64(fnv1a(w.buffer()));
  return std::move(w.buffer());
}

inline BaselineModel deserialize_model(std::string_view data,
                                       const std::string& path = "<memory>") {
  detail::Reader r(data, path);
  if (data.size() < model_magic.size() ||
      data.substr(0, model_magic.size()) != model_magic) {
    r.corrupt("bad magic bytes");
  }
  r.bytes(model_magic.size());
  const auto version = r.u32();
  if (version != model_format_version) {
    throw DataError("model file '" + path + "' has format version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(model_format_version));
  }
  if (data.size() < 8 + 12) r.corrupt("truncated");
  const auto body = data.substr(0, data.size() - 8);
  detail::Reader tail(data.substr(data.size() - 8), path);
  if (tail.u64() != fnv1a(body)) r.corrupt("checksum mismatch");

  BaselineModel m;
  const auto task = r.u8();
  if (task > 1) r.corrupt("unknown task id");
  m.task = static_cast<TaskId>(task);
  const auto n_orders = r.u32();
  r.need(std::size_t{n_orders} * 4);
  m.spec.orders.clear();
  for (std::uint32_t i = 0; i < n_orders; ++i) m.spec.orders.push_back(r.u32());
  m.spec.dimension = r.u64();
  m.spec.stylometric = r.u8() != 0;
  try {
    m.spec.validate();
  } catch (const ConfigError& e) {
    r.corrupt(e.what());
  }
  const auto n_labels = r.u32();
  if (n_labels != task_labels(m.task).size()) r.corrupt("label count mismatch");
  for (std::uint32_t i = 0; i < n_labels; ++i) m.labels.push_back(r.str());
  if (m.labels != task_labels(m.task)) r.corrupt("non-canonical label list");
  m.seed = r.u64();
  m.epochs = r.u32();
  r.need(2 * m.stylo_mean.size() * 8);
  for (auto& v : m.stylo_mean) v = r.f64();
  for (auto& v : m.stylo_scale) v = r.f64();
  const auto n_weights = m.labels.size() * m.spec.width();
  if (r.remaining() != (n_weights + m.labels.size() + 1) * 8) {
    r.corrupt("weight block size mismatch");
  }
  m.weights.resize(n_weights);
  for (auto& v : m.weights) v = r.f64();
  m.bias.resize(m.labels.size());
  for (auto& v : m.bias) v = r.f64();
  for (double v : m.weights) {
    if (!std::isfinite(v)) r.corrupt("non-finite weight");
  }
  for (double v : m.bias) {
    if (!std::isfinite(v)) r.corrupt("non-finite bias");
  }
  for (std::size_t k = 0; k < m.stylo_mean.size(); ++k) {
    if (!std::isfinite(m.stylo_mean[k]) || !std::isfinite(m.stylo_scale[k])) {
      r.corrupt("non-finite standardization");
    }
  }
  return m;
}

inline void save_model(const BaselineModel& m, const std::string& path) {
  text::write_file(path, serialize_model(m));
}

inline BaselineModel load_model(const std::string& path) {
  return deserialize_model(text::read_file(path), path);
}

}  // namespace mgtd::baseline
