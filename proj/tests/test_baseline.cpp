#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mgtd/baseline.hpp"
#include "mgtd/text.hpp"
#include "test_support.hpp"

using namespace mgtd;
using namespace mgtd::baseline;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mgtd_bl_" + name)).string();
}

// Two classes with disjoint vocabularies, `per_class` records each.
std::vector<TextRecord> separable(std::size_t per_class, std::uint64_t seed) {
  mgtd::testing::SyntheticCorpus gen(seed);
  std::vector<TextRecord> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (auto l : {Label7::human_story, Label7::gpt_4o}) {
      TextRecord r;
      r.id = "s" + std::to_string(out.size());
      r.text = gen.text_for(l);
      r.gold7 = l;
      r.gold2 = to_binary(l);
      out.push_back(std::move(r));
    }
  }
  return out;
}

double train_accuracy(const BaselineModel& m,
                      const std::vector<TextRecord>& records) {
  std::size_t right = 0;
  for (const auto& r : records) {
    right += predict(m, r.text).label == *gold_label(r, m.task);
  }
  return double(right) / double(records.size());
}

}  // namespace

TEST(Features, EmptyText) {
  FeatureSpec spec;
  auto v = featurize("", spec);
  ASSERT_EQ(v.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(v.index[i], spec.dimension + i);
    EXPECT_EQ(v.value[i], 0.0);
  }
  spec.stylometric = false;
  EXPECT_EQ(featurize("", spec).size(), 0u);
}

TEST(Features, DeterministicAndNormalized) {
  FeatureSpec spec;
  spec.stylometric = false;
  const std::string s = "Ünïcode text, with punctuation! And repeats repeats.";
  auto a = featurize(s, spec);
  auto b = featurize(s, spec);
  EXPECT_EQ(a.index, b.index);
  EXPECT_EQ(a.value, b.value);
  double n2 = 0;
  for (double x : a.value) n2 += x * x;
  EXPECT_NEAR(n2, 1.0, 1e-12);
  EXPECT_TRUE(std::is_sorted(a.index.begin(), a.index.end()));
  EXPECT_EQ(std::adjacent_find(a.index.begin(), a.index.end()), a.index.end());
}

TEST(Features, NgramCountsMatchCodePoints) {
  FeatureSpec spec;
  spec.stylometric = false;
  spec.orders = {1};
  spec.dimension = std::uint64_t{1} << 20;
  // "aab": unigram counts a=2, b=1, normalized by sqrt(5).
  auto v = featurize("aab", spec);
  ASSERT_EQ(v.size(), 2u);
  const auto ia = ngram_hash(1, "a") & (spec.dimension - 1);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double expect = (v.index[i] == ia ? 2.0 : 1.0) / std::sqrt(5.0);
    EXPECT_NEAR(v.value[i], expect, 1e-15);
  }
  spec.orders = {3};
  EXPECT_EQ(featurize("é£", spec).size(), 0u);
  EXPECT_EQ(featurize("é£x", spec).size(), 1u);
}

TEST(Features, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(Features, SpecValidation) {
  FeatureSpec spec;
  spec.dimension = 1000;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.orders = {};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.orders = {0};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Training, SeparableCorpus) {
  const auto records = separable(200, 3);
  auto result = train(records, TaskId::task_a, FeatureSpec{}, TrainConfig{});
  EXPECT_GE(train_accuracy(result.model, records), 0.99);
  ASSERT_EQ(result.epoch_loss.size(), 10u);
  EXPECT_LT(result.epoch_loss.back(), result.initial_loss);
  EXPECT_NEAR(result.initial_loss, std::log(2.0), 1e-12);

  mgtd::testing::SyntheticCorpus gen(3);
  TextRecord held{"h", std::nullopt, gen.text_for(Label7::human_story), {}, {}};
  EXPECT_EQ(predict(result.model, held.text).label, "human");
}

TEST(Training, SameSeedSameWeights) {
  const auto records = separable(40, 9);
  FeatureSpec spec;
  spec.dimension = 1 << 12;
  auto a = train(records, TaskId::task_b, spec, TrainConfig{});
  auto b = train(records, TaskId::task_b, spec, TrainConfig{});
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.model.bias, b.model.bias);
  TrainConfig other;
  other.seed = 43;
  auto c = train(records, TaskId::task_b, spec, other);
  EXPECT_NE(a.model.weights, c.model.weights);
}

TEST(Training, Errors) {
  EXPECT_THROW(train({}, TaskId::task_a, FeatureSpec{}, TrainConfig{}),
               DataError);
  auto one_label = separable(5, 1);
  std::erase_if(one_label,
                [](const TextRecord& r) { return r.gold7 != Label7::gpt_4o; });
  EXPECT_THROW(train(one_label, TaskId::task_a, FeatureSpec{}, TrainConfig{}),
               DataError);
  auto unlabeled = separable(5, 1);
  unlabeled[2].gold7.reset();
  unlabeled[2].gold2.reset();
  EXPECT_THROW(train(unlabeled, TaskId::task_b, FeatureSpec{}, TrainConfig{}),
               DataError);
  TrainConfig bad;
  bad.learning_rate = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Training, UniformBelowInRangeAndShuffleIsPermutation) {
  std::mt19937_64 rng(5);
  for (std::uint64_t n : {1ULL, 2ULL, 3ULL, 7ULL, 1000ULL}) {
    for (int i = 0; i < 200; ++i) EXPECT_LT(uniform_below(rng, n), n);
  }
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  seeded_shuffle(w, rng);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Gradient, MatchesFiniteDifferences) {
  FeatureSpec spec;
  spec.dimension = 64;
  auto records = separable(5, 11);
  std::vector<SparseVector> xs;
  std::vector<std::size_t> ys;
  for (const auto& r : records) {
    xs.push_back(featurize(r.text, spec));
    ys.push_back(r.gold7 == Label7::human_story ? 0 : 2);
  }
  auto m = BaselineModel::zeros(TaskId::task_b, spec);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (auto& w : m.weights) w = noise(rng);
  for (auto& b : m.bias) b = noise(rng);
  const double l2 = 1e-3;
  Gradient g;
  objective(m, xs, ys, l2, &g);
  const double h = 1e-5;
  std::uniform_int_distribution<std::size_t> pick(0, m.weights.size() - 1);
  for (int trial = 0; trial < 40; ++trial) {
    const bool bias = trial % 8 == 0;
    const auto i = bias ? std::size_t(trial / 8) % m.bias.size() : pick(rng);
    double& p = bias ? m.bias[i] : m.weights[i];
    const double saved = p;
    p = saved + h;
    const double up = objective(m, xs, ys, l2);
    p = saved - h;
    const double down = objective(m, xs, ys, l2);
    p = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = bias ? g.bias[i] : g.weights[i];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    EXPECT_LE(std::abs(numeric - analytic) / scale, 1e-4) << "param " << i;
  }
}

TEST(Predict, SoftmaxProperties) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0.0, 30.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(7);
    for (auto& v : z) v = d(rng);
    auto p = softmax(z);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    auto shifted = z;
    for (auto& v : shifted) v += 123.0;
    EXPECT_EQ(argmax(softmax(shifted)), argmax(p));
    EXPECT_EQ(argmax(p), argmax(z));
  }
}

TEST(Predict, ZeroModelIsUniform) {
  auto m = BaselineModel::zeros(TaskId::task_b, FeatureSpec{});
  auto p = predict(m, "anything at all");
  for (double s : p.scores) EXPECT_NEAR(s, 1.0 / 7.0, 1e-15);
  EXPECT_EQ(p.label, "Human_story");
}

TEST(Serialization, RoundTripGivesIdenticalPredictions) {
  const auto records = separable(50, 21);
  FeatureSpec spec;
  spec.dimension = 1 << 14;
  auto model = train(records, TaskId::task_b, spec, TrainConfig{}).model;
  const auto path = temp_path("model.bin");
  save_model(model, path);
  auto loaded = load_model(path);
  EXPECT_EQ(loaded.labels, model.labels);
  EXPECT_EQ(loaded.spec, model.spec);
  EXPECT_EQ(loaded.weights, model.weights);
  EXPECT_EQ(loaded.seed, model.seed);
  EXPECT_EQ(loaded.stylo_mean, model.stylo_mean);
  EXPECT_EQ(loaded.stylo_scale, model.stylo_scale);
  for (const auto& r : records) {
    auto a = predict(model, r.text);
    auto b = predict(loaded, r.text);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.scores, b.scores);
  }
  const auto bytes = text::read_file(path);
  EXPECT_EQ(bytes.substr(0, 8), std::string("MGTDBLM\0", 8));
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\0\0\0", 4));
  std::filesystem::remove(path);
}

TEST(Serialization, CorruptFilesRejected) {
  FeatureSpec spec;
  spec.dimension = 16;
  auto bytes = serialize_model(BaselineModel::zeros(TaskId::task_a, spec));
  auto expect_error = [](std::string_view data, const std::string& needle) {
    try {
      deserialize_model(data, "m.bin");
      ADD_FAILURE() << "accepted " << needle;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos)
          << e.what();
      EXPECT_NE(std::string(e.what()).find("m.bin"), std::string::npos);
    }
  };
  expect_error(std::string_view(bytes).substr(0, bytes.size() / 2), "corrupt");
  expect_error(std::string_view(bytes).substr(0, 5), "corrupt");
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  expect_error(flipped, "checksum");
  auto magic = bytes;
  magic[0] = 'X';
  expect_error(magic, "magic");
  auto version = bytes;
  version[8] = 2;
  expect_error(version, "version");
  EXPECT_NO_THROW(deserialize_model(bytes, "m.bin"));
  EXPECT_THROW(load_model(temp_path("does_not_exist.bin")), DataError);
}
