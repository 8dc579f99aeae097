#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "lscg/corpus.hpp"
#include "lscg/llm/harness.hpp"
#include "support/fixtures.hpp"

namespace lscg {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run lscg(const std::string& args, const TempDir& scratch) {
  auto out = scratch / "stdout.txt";
  auto err = scratch / "stderr.txt";
  std::string cmd = std::string("'") + LSCG_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testing::read_file(out);
  r.err = testing::read_file(err);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    work_ = new TempDir("cli");
    auto r = lscg("synth-corpus --out " + q(*work_ / "corpus") +
                      " --roots 600 --train-sets 400 --validation-sets 60 --challenge-sets 80",
                  *work_);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete work_; }
  static fs::path corpus() { return *work_ / "corpus"; }
  static inline TempDir* work_ = nullptr;
  TempDir scratch_;
};

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(lscg("--help", scratch_).code, 0);
  auto bad = lscg("datagen --no-such-flag", scratch_);
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(lscg("datagen --out x", scratch_).code, 1);  // --corpus-dir missing
  EXPECT_EQ(lscg("eval --dataset d --strategy simple --out o", scratch_).code, 1);
  EXPECT_EQ(lscg("--log-level loud report --runs a --out b", scratch_).code, 1);
}

TEST_F(Cli, DatagenOracleCheckAndDataErrors) {
  auto out = scratch_ / "data";
  auto r = lscg("datagen --corpus-dir " + q(corpus()) + " --pool-size 10,100 --count 100 --out " + q(out), scratch_);
  ASSERT_EQ(r.code, 0) << r.err;
  auto manifest = nlohmann::json::parse(testing::read_file(out / "manifest.json"));
  EXPECT_EQ(manifest["samples_per_scenario"], 100);
  EXPECT_EQ(manifest["files"].size(), 2u);
  auto f10 = corpus::read_samples(out / corpus::scenario_filename(10));
  auto f100 = corpus::read_samples(out / corpus::scenario_filename(100));
  ASSERT_EQ(f10.size(), 100u);
  for (std::size_t i = 0; i < f10.size(); ++i) {
    EXPECT_EQ(f10[i].sentence_id, f100[i].sentence_id);
    EXPECT_EQ(f10[i].label, f100[i].label);
  }
  auto ok = lscg("oracle-check --dataset " + q(out / corpus::scenario_filename(10)) + " --dataset " +
                     q(out / corpus::scenario_filename(100)),
                 scratch_);
  EXPECT_EQ(ok.code, 0) << ok.err;
  // a flipped label is caught
  f10[0].label = f10[0].label == Label::valid ? Label::invalid : Label::valid;
  corpus::write_samples(scratch_ / "tampered.jsonl", f10);
  EXPECT_EQ(lscg("oracle-check --dataset " + q(scratch_ / "tampered.jsonl"), scratch_).code, 2);
  EXPECT_EQ(lscg("datagen --corpus-dir " + q(scratch_ / "nowhere") + " --out " + q(out), scratch_).code, 2);
  testing::write_file(scratch_ / "broken.jsonl", "{\"sentence_id\": 1\n");
  EXPECT_EQ(lscg("oracle-check --dataset " + q(scratch_ / "broken.jsonl"), scratch_).code, 2);
}

TEST_F(Cli, ConfigFillsUnsetOptionsAndFlagsWin) {
  testing::write_file(scratch_ / "lscg.toml",
                      "[corpus]\ncount = 40\npool_size = [10]\nseed = 5\n\n[eval]\nparallel = 2\n");
  auto a = scratch_ / "a";
  auto r = lscg("--config " + q(scratch_ / "lscg.toml") + " datagen --corpus-dir " + q(corpus()) + " --out " + q(a),
                scratch_);
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = nlohmann::json::parse(testing::read_file(a / "manifest.json"));
  EXPECT_EQ(m["samples_per_scenario"], 40);
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(m["files"].size(), 1u);
  auto b = scratch_ / "b";
  r = lscg("--config " + q(scratch_ / "lscg.toml") + " datagen --count 20 --corpus-dir " + q(corpus()) + " --out " + q(b),
           scratch_);
  ASSERT_EQ(r.code, 0) << r.err;
  m = nlohmann::json::parse(testing::read_file(b / "manifest.json"));
  EXPECT_EQ(m["samples_per_scenario"], 20);
  EXPECT_EQ(m["seed"], 5);
  EXPECT_EQ(lscg("--config " + q(scratch_ / "missing.toml") + " datagen --corpus-dir x --out y", scratch_).code, 1);
}

TEST_F(Cli, TrainMaskEvalReport) {
  auto trip = scratch_ / "triplets.jsonl";
  ASSERT_EQ(lscg("augment --corpus-dir " + q(corpus()) + " --out " + q(trip), scratch_).code, 0);
  auto data = scratch_ / "data";
  ASSERT_EQ(lscg("datagen --corpus-dir " + q(corpus()) + " --pool-size 10 --count 40 --out " + q(data), scratch_).code, 0);
  auto ck = scratch_ / "ck";
  auto r = lscg("train --triplets " + q(trip) + " --out " + q(ck) +
                    " --provider mock:ngram-v1:32 --proj-dim 16 --epochs 2 --max-triplets 2000 --trees 10",
                scratch_);
  ASSERT_EQ(r.code, 0) << r.err;
  for (auto f : {"focusnet.json", "forest.json", "train_log.json"}) EXPECT_TRUE(fs::exists(ck / f)) << f;
  auto dataset = data / corpus::scenario_filename(10);
  r = lscg("mask --checkpoint " + q(ck) + " --dataset " + q(dataset) + " --out " + q(scratch_ / "masks.jsonl"), scratch_);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("40 samples"), std::string::npos) << r.out;
  // a checkpoint cannot be used with a different encoder
  EXPECT_EQ(lscg("mask --checkpoint " + q(ck) + " --dataset " + q(dataset) + " --provider mock:ngram-v1 --out " +
                     q(scratch_ / "m2.jsonl"),
                 scratch_)
                .code,
            2);

  testing::StubServer srv;
  std::vector<fs::path> runs;
  for (std::string s : {"simple", "best3", "focusnet"}) {
    auto run = scratch_ / ("run_" + s);
    std::string extra = s == "focusnet" ? " --checkpoint " + q(ck) : "";
    r = lscg("eval --dataset " + q(dataset) + " --strategy " + s + " --endpoint " + srv.base_url() +
                 " --model stub --parallel 3 --out " + q(run) + extra,
             scratch_);
    ASSERT_EQ(r.code, 0) << s << ": " << r.err;
    auto verdicts = llm::read_verdicts(run / "verdicts.jsonl");
    ASSERT_EQ(verdicts.size(), 40u);
    for (const auto& v : verdicts) {
      EXPECT_EQ(v.transcripts.size(), s == "best3" ? 4u : 1u);
      EXPECT_EQ(v.reduced_set.has_value(), s == "focusnet");
    }
    auto meta = nlohmann::json::parse(testing::read_file(run / "run.json"));
    EXPECT_EQ(meta["strategy"], s);
    EXPECT_EQ(meta["model"], "stub");
    runs.push_back(run);
  }
  std::string run_args;
  for (const auto& p : runs) run_args += " --runs " + q(p);
  r = lscg("report" + run_args + " --out " + q(scratch_ / "report"), scratch_);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| focusnet |"), std::string::npos);
  EXPECT_TRUE(fs::exists(scratch_ / "report" / "metrics.csv"));
}

TEST_F(Cli, EvalEndpointFailureExitsThree) {
  auto data = scratch_ / "data";
  ASSERT_EQ(lscg("datagen --corpus-dir " + q(corpus()) + " --pool-size 10 --count 10 --out " + q(data), scratch_).code, 0);
  auto r = lscg("eval --dataset " + q(data / corpus::scenario_filename(10)) +
                    " --strategy simple --endpoint http://127.0.0.1:1 --model m --retries 1 --out " + q(scratch_ / "run"),
                scratch_);
  EXPECT_EQ(r.code, 3) << r.err;
  auto verdicts = llm::read_verdicts(scratch_ / "run" / "verdicts.jsonl");
  ASSERT_EQ(verdicts.size(), 10u);
  for (const auto& v : verdicts) EXPECT_EQ(v.status, llm::VerdictStatus::endpoint_error);
}

}  // namespace
}  // namespace lscg
