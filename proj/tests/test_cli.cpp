#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "mgtd/cli.hpp"
#include "mgtd/digest.hpp"
#include "test_support.hpp"

using namespace mgtd;
using mgtd::testing::SyntheticCorpus;
using mgtd::testing::Workspace;
namespace fs = std::filesystem;

namespace {

const std::string fixtures = MGTD_FIXTURES_DIR;

nlohmann::json base_config(const std::string& task) {
  return {{"dataset",
           {{"splits", {{"train", "train.csv"}, {"validation", "validation.csv"}}}}},
          {"task", task},
          {"seed", 7},
          {"output_dir", "out"},
          {"backend", {{"kind", "local_baseline"}, {"backoff_ms", 0}}}};
}

void write_synthetic(const Workspace& ws, std::size_t train_per_class,
                     std::size_t validation_per_class, std::uint64_t seed = 1) {
  SyntheticCorpus gen(seed);
  ws.write("train.csv", mgtd::testing::to_csv(gen.records(train_per_class, "t")));
  ws.write("validation.csv",
           mgtd::testing::to_csv(gen.records(validation_per_class, "v")));
}

std::vector<std::string> with_config(const std::string& cfg,
                                     std::vector<std::string> args) {
  args.insert(args.begin(), {"--config", cfg});
  return args;
}

}  // namespace

TEST(Cli, StatsOnFixture) {
  Workspace ws("cli_stats");
  auto r = Workspace::run({"--out", ws.path("out"), "stats", "--dataset",
                           fixtures + "/fourteen_rows.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Human_story"), std::string::npos);
  auto stats = nlohmann::json::parse(ws.read("out/stats.json"));
  EXPECT_EQ(stats["train"]["total"], 14);
  EXPECT_EQ(stats["train"]["human"], 2);
  EXPECT_EQ(stats["train"]["machine"], 12);
  EXPECT_EQ(ws.read("out/stats.txt"), r.out);
}

TEST(Cli, MissingDatasetIsDataError) {
  Workspace ws("cli_missing");
  const auto missing = ws.path("nope.csv");
  auto r = Workspace::run({"--out", ws.path("out"), "stats", "--dataset", missing});
  EXPECT_EQ(r.code, cli::exit_data);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(Cli, UnknownLabelNamesRow) {
  Workspace ws("cli_unknown");
  auto r = Workspace::run({"--out", ws.path("out"), "stats", "--dataset",
                           fixtures + "/unknown_label.csv"});
  EXPECT_EQ(r.code, cli::exit_data);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("gpt4"), std::string::npos) << r.err;
}

TEST(Cli, AnalyzeWritesProfiles) {
  Workspace ws("cli_analyze");
  auto r = Workspace::run({"--out", ws.path("out"), "analyze", "--dataset",
                           fixtures + "/three_rows.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto profile = nlohmann::json::parse(ws.read("out/profile_train.json"));
  EXPECT_TRUE(profile.is_object());
  EXPECT_EQ(ws.read("out/profile_train_diversity.csv").rfind("label,bin_start,bin_end,count\n", 0), 0u);
  EXPECT_TRUE(fs::exists(ws.path("out/profile_train_length.csv")));
}

TEST(Cli, AnalyzeEmptyAndUnlabeledCorpora) {
  Workspace ws("cli_analyze_edge");
  const auto empty = ws.write("empty.csv", "id,prompt,text,label\n");
  auto r = Workspace::run({"--out", ws.path("out"), "analyze", "--dataset", empty});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto unlabeled = ws.write("unlabeled.csv", "id,text\na,some text\n");
  r = Workspace::run({"--out", ws.path("out"), "analyze", "--dataset", unlabeled});
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, BuildInstructionsMatchesGolden) {
  Workspace ws("cli_build");
  auto r = Workspace::run({"--out", ws.path("out"), "--task", "task_b",
                           "build-instructions", "--schema", "plain", "--dataset",
                           fixtures + "/three_rows.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ws.read("out/instructions_task_b_train_plain.jsonl"),
            text::read_file(std::string(MGTD_GOLDEN_DIR) + "/task_b_plain.jsonl"));
}

TEST(Cli, EndToEndLocalBaseline) {
  Workspace ws("cli_e2e");
  write_synthetic(ws, 60, 20);
  const auto cfg = ws.write_config("config.json", base_config("task_b"));
  for (const char* cmd : {"build-instructions", "train-baseline", "predict", "evaluate"}) {
    auto r = Workspace::run(with_config(cfg, {cmd}));
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  auto report = nlohmann::json::parse(ws.read("out/report_task_b_validation.json"));
  EXPECT_GE(report["macro"]["f1"].get<double>(), 0.95);
  EXPECT_EQ(report["support"], 140);
  EXPECT_EQ(report["labels"].size(), 7u);
  const auto preds = read_predictions(ws.path("out/predictions_task_b_validation.jsonl"));
  ASSERT_EQ(preds.size(), 140u);
  for (const auto& p : preds) {
    EXPECT_EQ(p.status, PredictionStatus::ok);
    EXPECT_EQ(p.scores.size(), 7u);
  }
  const auto log = ws.read("out/training_log_task_b.csv");
  EXPECT_EQ(log.rfind("epoch,loss\n0,", 0), 0u);
}

TEST(Cli, ManifestRecordsProvenance) {
  Workspace ws("cli_manifest");
  write_synthetic(ws, 5, 2);
  const auto cfg = ws.write_config("config.json", base_config("task_a"));
  ASSERT_EQ(Workspace::run(with_config(cfg, {"--seed", "11", "train-baseline"})).code, 0);
  ASSERT_EQ(Workspace::run(with_config(cfg, {"stats"})).code, 0);
  auto m = nlohmann::json::parse(ws.read("out/manifest.json"));
  const auto& run = m["runs"]["train-baseline"];
  EXPECT_EQ(run["seed"], 11);
  EXPECT_EQ(run["task"], "task_a");
  EXPECT_EQ(run["split"], "train");
  EXPECT_EQ(run["tool_version"], MGTD_VERSION);
  EXPECT_EQ(run["config_sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(run["inputs"][ws.path("train.csv")], file_sha256(ws.path("train.csv")));
  EXPECT_EQ(run["outputs"], nlohmann::json({"model_task_a.bin", "training_log_task_a.csv"}));
  EXPECT_TRUE(m["runs"].contains("stats"));
  EXPECT_TRUE(m["runs"]["stats"]["split"].is_null());
}

TEST(Cli, RerunIsByteIdentical) {
  Workspace ws("cli_rerun");
  write_synthetic(ws, 10, 4);
  auto cfg_json = base_config("task_a");
  const auto cfg = ws.write_config("config.json", cfg_json);
  const std::vector<std::string> pipeline{"stats", "analyze", "build-instructions",
                                          "train-baseline", "predict", "evaluate"};
  for (const auto& out : {"run1", "run2"}) {
    for (const auto& cmd : pipeline) {
      auto r = Workspace::run(with_config(cfg, {"--out", ws.path(out), cmd}));
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
  }
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(ws.path("run1"))) {
    files.insert(e.path().filename().string());
  }
  EXPECT_GE(files.size(), 10u);
  for (const auto& f : files) {
    if (f == "manifest.json") continue;
    EXPECT_EQ(ws.read("run1/" + f), ws.read("run2/" + f)) << f;
  }
}

TEST(Cli, CombineProducesOneRowPerId) {
  Workspace ws("cli_combine");
  write_synthetic(ws, 10, 3);
  const auto cfg = ws.write_config("config.json", base_config("task_a"));
  for (const char* task : {"task_a", "task_b"}) {
    for (const char* cmd : {"train-baseline", "predict"}) {
      auto r = Workspace::run(with_config(cfg, {"--task", task, cmd}));
      ASSERT_EQ(r.code, 0) << task << " " << cmd << ": " << r.err;
    }
  }
  auto r = Workspace::run(
      with_config(cfg, {"combine", "--consistency", "task_b_priority"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = ws.read("out/submission_validation.csv");
  const auto lines = text::split_lines(csv);
  ASSERT_EQ(lines.size(), 22u);
  EXPECT_EQ(lines[0], "id,task_a,task_b");
  std::set<std::string> ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    ids.insert(lines[i].substr(0, lines[i].find(',')));
  }
  EXPECT_EQ(ids.size(), 21u);
}

TEST(Cli, PredictAgainstStubRemote) {
  Workspace ws("cli_remote");
  SyntheticCorpus gen(5);
  const auto records = gen.records(15, "r");  // 105 records
  ws.write("validation.csv", mgtd::testing::to_csv(records));
  const std::set<std::string> blocked{records[4].text, records[77].text};

  httplib::Server server;
  server.Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    const std::string input = body["messages"][1]["content"];
    if (blocked.contains(input)) {
      res.status = 400;
      res.set_content(R"({"error":{"code":"content_filter","message":"The response was filtered due to the prompt triggering content management policy."}})",
                      "application/json");
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"machine"},"finish_reason":"stop"}]})",
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto cfg_json = base_config("task_a");
  cfg_json["backend"] = {{"kind", "remote_chat"},
                         {"endpoint", "http://127.0.0.1:" + std::to_string(port) + "/chat"},
                         {"auth_env", "MGTD_TEST_UNSET_TOKEN_VARIABLE"},
                         {"parallelism", 8},
                         {"backoff_ms", 0}};
  const auto cfg = ws.write_config("config.json", cfg_json);
  auto r = Workspace::run(with_config(cfg, {"predict"}));
  server.stop();
  t.join();
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("MGTD_TEST_UNSET_TOKEN_VARIABLE"), std::string::npos);
  const auto preds = read_predictions(ws.path("out/predictions_task_a_validation.jsonl"));
  ASSERT_EQ(preds.size(), records.size());
  std::size_t filtered = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(preds[i].id, records[i].id);
    if (preds[i].status == PredictionStatus::filtered) {
      ++filtered;
      EXPECT_EQ(preds[i].fallback_label, "machine");
    }
  }
  EXPECT_EQ(filtered, 2u);
  EXPECT_EQ(preds[4].status, PredictionStatus::filtered);
  EXPECT_EQ(preds[77].status, PredictionStatus::filtered);
}

TEST(Cli, UnreachableRemoteExitsWithBackendError) {
  Workspace ws("cli_remote_down");
  ws.write("validation.csv", text::read_file(fixtures + "/three_rows.csv"));
  auto cfg_json = base_config("task_a");
  cfg_json["backend"] = {{"kind", "remote_chat"},
                         {"endpoint", "http://127.0.0.1:1/chat"},
                         {"auth_env", ""},
                         {"retry_limit", 0},
                         {"timeout_s", 1}};
  const auto cfg = ws.write_config("config.json", cfg_json);
  auto r = Workspace::run(with_config(cfg, {"predict"}));
  EXPECT_EQ(r.code, cli::exit_backend);
}

TEST(Cli, ExternalFileBackend) {
  Workspace ws("cli_external");
  ws.write("validation.csv", text::read_file(fixtures + "/three_rows.csv"));
  // Out of order, one filtered record without a fallback label.
  const auto prepared = ws.write(
      "prepared.jsonl",
      R"({"id":"r3","task":"task_b","label":"Yi-large","raw_output":"Yi-large","status":"ok","attempt_count":1})"
      "\n"
      R"({"id":"r1","task":"task_b","label":"Human_story","raw_output":"Human_story","status":"ok","attempt_count":1})"
      "\n"
      R"({"id":"r2","task":"task_b","label":null,"raw_output":"blocked","status":"filtered","attempt_count":2})"
      "\n");
  auto cfg_json = base_config("task_b");
  cfg_json["backend"] = {{"kind", "external_file"},
                         {"external_command", "cp '" + prepared + "' '{output}'"},
                         {"external_predictions", "external/preds.jsonl"}};
  fs::create_directories(ws.path("external"));
  cfg_json["fallback"] = {{"default_label", {{"task_b", "qwen2-72b"}}}};
  const auto cfg = ws.write_config("config.json", cfg_json);
  auto r = Workspace::run(with_config(cfg, {"predict"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto preds = read_predictions(ws.path("out/predictions_task_b_validation.jsonl"));
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0].id, "r1");
  EXPECT_EQ(preds[1].id, "r2");
  EXPECT_EQ(preds[1].fallback_label, "qwen2-72b");
  EXPECT_EQ(preds[2].label, "Yi-large");

  r = Workspace::run(with_config(cfg, {"evaluate"}));
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = nlohmann::json::parse(ws.read("out/report_task_b_validation.json"));
  EXPECT_EQ(report["failures"]["filtered"], 1);
  EXPECT_NEAR(report["accuracy"].get<double>(), 2.0 / 3.0, 1e-12);
}

TEST(Cli, ExternalFileMismatchesRejected) {
  Workspace ws("cli_external_bad");
  ws.write("validation.csv", text::read_file(fixtures + "/three_rows.csv"));
  ws.write("preds.jsonl",
           R"({"id":"r1","task":"task_a","label":"human","raw_output":"","status":"ok","attempt_count":1})"
           "\n");
  auto cfg_json = base_config("task_a");
  cfg_json["backend"] = {{"kind", "external_file"},
                         {"external_predictions", "preds.jsonl"}};
  auto cfg = ws.write_config("config.json", cfg_json);
  EXPECT_EQ(Workspace::run(with_config(cfg, {"predict"})).code, cli::exit_data);

  cfg_json["backend"]["external_command"] = "exit 3";
  cfg = ws.write_config("config.json", cfg_json);
  EXPECT_EQ(Workspace::run(with_config(cfg, {"predict"})).code, cli::exit_backend);

  cfg_json["backend"].erase("external_command");
  cfg_json["backend"]["external_predictions"] = "absent.jsonl";
  cfg = ws.write_config("config.json", cfg_json);
  EXPECT_EQ(Workspace::run(with_config(cfg, {"predict"})).code, cli::exit_backend);
}

TEST(Cli, PredictWithoutModelFails) {
  Workspace ws("cli_nomodel");
  write_synthetic(ws, 2, 1);
  const auto cfg = ws.write_config("config.json", base_config("task_a"));
  auto r = Workspace::run(with_config(cfg, {"predict"}));
  EXPECT_EQ(r.code, cli::exit_data);
  EXPECT_NE(r.err.find("train-baseline"), std::string::npos);
}

TEST(Cli, UsageAndConfigErrors) {
  Workspace ws("cli_usage");
  EXPECT_EQ(Workspace::run({}).code, cli::exit_usage);
  EXPECT_EQ(Workspace::run({"frobnicate"}).code, cli::exit_usage);
  EXPECT_EQ(Workspace::run({"--version"}).code, cli::exit_ok);
  EXPECT_EQ(Workspace::run({"--task", "task_c", "stats"}).code, cli::exit_usage);
  EXPECT_EQ(Workspace::run({"--config", ws.path("absent.json"), "stats"}).code,
            cli::exit_usage);

  auto bad = base_config("task_a");
  bad["dataset"]["colour"] = "blue";
  auto r = Workspace::run({"--config", ws.write_config("bad.json", bad), "stats"});
  EXPECT_EQ(r.code, cli::exit_usage);
  EXPECT_NE(r.err.find("dataset.colour"), std::string::npos) << r.err;

  auto bad_fallback = base_config("task_a");
  bad_fallback["fallback"] = {{"default_label", {{"task_a", "robot"}}}};
  EXPECT_EQ(Workspace::run({"--config", ws.write_config("bf.json", bad_fallback),
                            "stats"}).code,
            cli::exit_usage);

  auto bad_json = ws.write("broken.json", "{not json");
  EXPECT_EQ(Workspace::run({"--config", bad_json, "stats"}).code, cli::exit_usage);

  EXPECT_EQ(Workspace::run({"--config", ws.write_config("ok.json", base_config("task_a")),
                            "stats", "--split", "test"}).code,
            cli::exit_usage);
}

TEST(Cli, ShippedConfigsLoad) {
  const auto dir = fs::path(fixtures) / ".." / ".." / "configs";
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    ++n;
    RunConfig cfg;
    ASSERT_NO_THROW(cfg = load_run_config(e.path().string())) << e.path();
    EXPECT_NO_THROW(validate(cfg)) << e.path();
  }
  EXPECT_GE(n, 3u);
}
