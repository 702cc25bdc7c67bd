#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <regex>

#include "reprompt/run_log.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using testing_support::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(REPROMPT_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (auto n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string field(const std::string& out, const std::string& key) {
  std::smatch m;
  if (!std::regex_search(out, m, std::regex(key + "=(\\S+)"))) return {};
  return m[1];
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = reprompt::read_text_file(e.path());
  return files;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run("make-synthetic --train-size 20 --test-size 30 --seed 3 --out " + (dir / "task.json").string()).code, 0);
    write_config("config.json", 300);
  }

  void write_config(const std::string& name, std::size_t iterations) {
    nlohmann::json cfg = {
        {"task", "task.json"},
        {"sampler", {{"num_shots", 5}, {"max_iterations", iterations}, {"seed", 1},
                     {"init_backend", "oracle"}, {"sampling_backend", "oracle"}}},
        {"greedy", {{"max_iterations", 2}}},
        {"backends", {{"oracle", {{"kind", "scripted_oracle"}, {"seed", 0}}}}},
        {"eval_backends", {"oracle"}},
        {"cache_dir", "cache"},
        {"out_dir", "runs"}};
    reprompt::write_json_file(dir / name, cfg);
  }

  std::string cfg() const { return "--config " + (dir / "config.json").string(); }

  TempDir dir;
};

}  // namespace

TEST_F(Cli, GibbsRunWritesArtifacts) {
  auto r = run("run-gibbs " + cfg() + " --run-id g1");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto run_dir = dir / "runs" / "g1";
  for (auto f : {"config.json", "log.jsonl", "pool-final.json", "curve.csv"})
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  EXPECT_EQ(field(r.out, "iterations"), "300");
  const auto log = reprompt::read_run_log(run_dir / "log.jsonl");
  EXPECT_EQ(log.records.size(), 320u);  // 20 initialization records + 300 steps
}

TEST_F(Cli, SameSeedGivesIdenticalRunAndWarmCacheMakesNoCalls) {
  auto a = run("run-gibbs " + cfg() + " --run-id a");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_NE(field(a.out, "backend_calls"), "0");
  auto b = run("run-gibbs " + cfg() + " --run-id b");
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(field(b.out, "backend_calls"), "0");
  EXPECT_EQ(snapshot(dir / "runs" / "a"), snapshot(dir / "runs" / "b"));

  // A cold cache gives the same artifacts too.
  auto c = run("run-gibbs " + cfg() + " --run-id c --cache-dir " + (dir / "cold").string());
  ASSERT_EQ(c.code, 0) << c.out;
  EXPECT_NE(field(c.out, "backend_calls"), "0");
  EXPECT_EQ(snapshot(dir / "runs" / "a"), snapshot(dir / "runs" / "c"));
}

TEST_F(Cli, DifferentSeedDiffers) {
  ASSERT_EQ(run("run-gibbs " + cfg() + " --run-id s1").code, 0);
  ASSERT_EQ(run("run-gibbs " + cfg() + " --run-id s2 --seed 2").code, 0);
  EXPECT_NE(reprompt::read_text_file(dir / "runs/s1/log.jsonl"), reprompt::read_text_file(dir / "runs/s2/log.jsonl"));
}

TEST_F(Cli, ExistingRunIdIsRefusedAndLeftIntact) {
  ASSERT_EQ(run("run-gibbs " + cfg() + " --run-id keep").code, 0);
  const auto before = snapshot(dir / "runs" / "keep");
  auto r = run("run-gibbs " + cfg() + " --run-id keep --seed 9");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("error[config]"), std::string::npos);
  EXPECT_EQ(snapshot(dir / "runs" / "keep"), before);
}

TEST_F(Cli, FullPipelineSelectEvalCompareCurve) {
  ASSERT_EQ(run("run-gibbs " + cfg() + " --run-id g").code, 0);
  const auto before = snapshot(dir / "runs" / "g");

  auto sel = run("select-prompt " + cfg() + " --run " + (dir / "runs/g").string() + " --run-id sel");
  ASSERT_EQ(sel.code, 0) << sel.out;
  const auto prompt = dir / "runs/sel/prompt.json";
  ASSERT_TRUE(fs::exists(prompt));
  EXPECT_TRUE(fs::exists(dir / "runs/sel/scores.json"));
  EXPECT_EQ(reprompt::read_json_file(prompt).at("tuples").size(), 5u);

  auto ev = run("eval " + cfg() + " --method zero_shot --backend oracle --run-id ev");
  ASSERT_EQ(ev.code, 0) << ev.out;
  EXPECT_TRUE(fs::exists(dir / "runs/ev/eval-zero_shot-oracle.json"));
  const auto report = reprompt::read_json_file(dir / "runs/ev/eval-zero_shot-oracle.json");
  EXPECT_EQ(report.at("evaluated_on"), 30);

  auto cmp = run("compare " + cfg() + " --prompt " + prompt.string() + " --run-id cmp");
  ASSERT_EQ(cmp.code, 0) << cmp.out;
  EXPECT_EQ(field(cmp.out, "cells"), "3");
  const auto csv = reprompt::read_text_file(dir / "runs/cmp/compare.csv");
  EXPECT_NE(csv.find("zero_shot,"), std::string::npos);
  EXPECT_NE(csv.find("few_shot,"), std::string::npos);
  EXPECT_NE(csv.find("reprompt_gibbs,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "runs/cmp/compare.json"));

  auto curve = run("curve " + (dir / "runs/g/log.jsonl").string());
  ASSERT_EQ(curve.code, 0);
  EXPECT_EQ(curve.out, reprompt::read_text_file(dir / "runs/g/curve.csv"));

  // Nothing downstream touched the sampling run.
  EXPECT_EQ(snapshot(dir / "runs" / "g"), before);
}

TEST_F(Cli, GreedyRun) {
  auto r = run("run-greedy " + cfg() + " --run-id gr");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(field(r.out, "rounds"), "2");
  const auto log = reprompt::read_run_log(dir / "runs/gr/log.jsonl");
  EXPECT_EQ(log.header.at("mode"), "greedy");
  EXPECT_EQ(log.rounds.size(), 3u);
}

TEST_F(Cli, CurveRefusesToOverwrite) {
  ASSERT_EQ(run("run-gibbs " + cfg() + " --run-id g").code, 0);
  const auto out = dir / "c.csv";
  EXPECT_EQ(run("curve " + (dir / "runs/g/log.jsonl").string() + " --out " + out.string()).code, 0);
  EXPECT_EQ(run("curve " + (dir / "runs/g/log.jsonl").string() + " --out " + out.string()).code, 2);
}

TEST_F(Cli, ErrorCategoriesAndExitCodes) {
  auto missing = run("run-gibbs --config " + (dir / "nope.json").string());
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.out.find("error[config]"), std::string::npos);

  auto cot = run("eval " + cfg() + " --method cot_file --cot-file " + (dir / "absent.txt").string());
  EXPECT_EQ(cot.code, 3);
  EXPECT_NE(cot.out.find("error[missing_cot_file]"), std::string::npos);

  reprompt::write_text_file(dir / "small.json", R"({"examples": [{"input": "q", "target": "a"}]})");
  auto small = run("ingest " + (dir / "small.json").string() + " --out " + (dir / "t.json").string());
  EXPECT_EQ(small.code, 3);
  EXPECT_NE(small.out.find("error[insufficient_examples]"), std::string::npos);

  reprompt::write_text_file(dir / "bad.jsonl", "not json\n");
  auto bad_log = run("curve " + (dir / "bad.jsonl").string());
  EXPECT_EQ(bad_log.code, 3);

  auto no_backend = run("eval " + cfg() + " --method zero_shot --backend missing");
  EXPECT_EQ(no_backend.code, 2);
}

TEST_F(Cli, IngestWritesBundle) {
  nlohmann::json src = {{"name", "toy"}, {"examples", nlohmann::json::array()}};
  for (int i = 0; i < 40; ++i) src["examples"].push_back({{"input", "q" + std::to_string(i)}, {"target", "a"}});
  reprompt::write_json_file(dir / "bb.json", src);
  auto r = run("ingest " + (dir / "bb.json").string() + " --train-size 20 --seed 4 --out " + (dir / "t.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto t = reprompt::load_task(dir / "t.json");
  EXPECT_EQ(t.train.size(), 20u);
  EXPECT_EQ(t.test.size(), 20u);
  EXPECT_EQ(run("ingest " + (dir / "bb.json").string() + " --out " + (dir / "t.json").string()).code, 2);
}
