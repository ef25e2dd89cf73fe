#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "funcanon/io.hpp"

namespace funcanon {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args, const fs::path& log = "/dev/null") {
  const std::string cmd = std::string(FUNCANON_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("funcanon_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& rel) const { return (dir_ / rel).string(); }

  void make_fixtures() { ASSERT_EQ(run("make-fixtures --out " + p("in")), 0); }

  fs::path dir_;
};

TEST_F(Cli, UsageErrorsAreInvalidConfig) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("propose"), 2);
  EXPECT_EQ(run("propose --cloud x.ply --provider dino"), 2);
}

TEST_F(Cli, MissingOrMalformedConfigIsInvalidConfig) {
  EXPECT_EQ(run("pipeline --config " + p("nope.json")), 2);
  write_text_file(p("bad.json"), "{not json");
  EXPECT_EQ(run("pipeline --config " + p("bad.json")), 2);
  write_json_file(p("unknown.json"), json{{"sede", 1}});
  EXPECT_EQ(run("pipeline --config " + p("unknown.json")), 2);
  EXPECT_EQ(run("propose --cloud " + p("missing.ply")), 2);
}

TEST_F(Cli, ZeroTargetsFailsTransferStage) {
  make_fixtures();
  json cfg = read_json_file(p("in/pipeline.json"));
  cfg["transfer"]["targets"] = json::array();
  write_json_file(p("in/pipeline.json"), cfg);
  EXPECT_EQ(run("pipeline --config " + p("in/pipeline.json") + " --out " + p("out"), p("log.txt")), 3);
  const json failure = read_json_file(p("out/failure.json"));
  EXPECT_EQ(failure.at("stage"), "transfer");
  EXPECT_NE(failure.at("error").get<std::string>().find("no targets"), std::string::npos);
  EXPECT_NE(read_text_file(p("log.txt")).find("no targets"), std::string::npos);
  // earlier stages stay on disk
  EXPECT_TRUE(fs::exists(p("out/proposals/kettle.json")));
  EXPECT_TRUE(fs::exists(p("out/alignment/teapot.pour.active.json")));
  EXPECT_FALSE(fs::exists(p("out/report.json")));
}

TEST_F(Cli, PipelineIsDeterministic) {
  make_fixtures();
  const std::string base = "pipeline --config " + p("in/pipeline.json") + " --epochs 200 --trials 4 --seed 5";
  ASSERT_EQ(run(base + " --out " + p("a")), 0);
  ASSERT_EQ(run(base + " --out " + p("b")), 0);
  const std::string ra = read_text_file(p("a/report.json"));
  EXPECT_EQ(ra, read_text_file(p("b/report.json")));
  EXPECT_EQ(read_text_file(p("a/train/checkpoint.json")), read_text_file(p("b/train/checkpoint.json")));
  EXPECT_EQ(ra.find(dir_.string()), std::string::npos);
  const json report = json::parse(ra);
  EXPECT_EQ(report.at("seed"), 5);
  for (const auto& a : report.at("artifacts")) EXPECT_TRUE(fs::exists(p("a/" + a.get<std::string>()))) << a;
  EXPECT_GT(report.at("stages").at("transfer").at("records").get<int>(), 0);
  EXPECT_EQ(report.at("stages").at("evaluate").at("transfer").at("trials_per_seed"), 4);
  // another seed changes the outcome
  ASSERT_EQ(run("pipeline --config " + p("in/pipeline.json") + " --epochs 200 --trials 4 --seed 6 --out " + p("c")),
            0);
  EXPECT_NE(ra, read_text_file(p("c/report.json")));
}

TEST_F(Cli, StageByStage) {
  make_fixtures();
  ASSERT_EQ(run("propose --cloud " + p("in/objects/kettle.json") + " --m 3 --object-id kettle --out " +
                p("kettle.proposal.json")),
            0);
  EXPECT_EQ(read_json_file(p("kettle.proposal.json")).at("regions").size(), 3u);
  ASSERT_EQ(run("recognize --cloud " + p("in/objects/kettle.json") + " --proposal " + p("kettle.proposal.json") +
                " --verb pour --role active --category kettle --oracle " + p("in/oracle.json") + " --out " +
                p("kettle.fs.json")),
            0);
  EXPECT_EQ(read_json_file(p("kettle.fs.json")).at("regions").size(), 1u);
  ASSERT_EQ(run("align --object " + p("in/objects/kettle.json") + " --functional-set " + p("kettle.fs.json") +
                " --anchor kettle --verb pour --out " + p("manifests/kettle.json")),
            0);
  EXPECT_EQ(read_json_file(p("manifests/kettle.json")).at("z_angle"), 0.0);

  ASSERT_EQ(run("propose --cloud " + p("in/objects/teapot.json") + " --m 3 --object-id teapot --out " +
                p("teapot.proposal.json")),
            0);
  ASSERT_EQ(run("recognize --cloud " + p("in/objects/teapot.json") + " --proposal " + p("teapot.proposal.json") +
                " --verb pour --category teapot --oracle " + p("in/oracle.json") + " --out " + p("teapot.fs.json")),
            0);
  ASSERT_EQ(run("align --object " + p("in/objects/teapot.json") + " --functional-set " + p("teapot.fs.json") +
                " --anchor " + p("manifests/kettle.json") + " --verb pour --out " + p("manifests/teapot.json")),
            0);
  EXPECT_NEAR(read_json_file(p("manifests/teapot.json")).at("z_angle").get<double>(), std::numbers::pi / 2, 0.05);

  fs::create_directories(p("pour-demos"));
  fs::copy_file(p("in/demos/pour-0.json"), p("pour-demos/pour-0.json"));
  ASSERT_EQ(run("transfer --demos " + p("pour-demos") + " --targets kettle,teapot --manifests " + p("manifests") +
                " --out " + p("augmented.jsonl")),
            0);
  EXPECT_EQ(read_json_lines(p("augmented.jsonl")).size(), 2u);

  ASSERT_EQ(run("decompose --task \"pour water\" --objects teapot,cup --out " + p("plan.json")), 0);
  EXPECT_EQ(read_json_file(p("plan.json")).at("steps").size(), 2u);
  EXPECT_EQ(run("decompose --task \"\" --objects teapot,cup"), 3);
}

TEST_F(Cli, TrainInferEvaluate) {
  make_fixtures();
  ASSERT_EQ(run("pipeline --config " + p("in/pipeline.json") + " --epochs 20 --trials 2 --out " + p("run")), 0);
  ASSERT_EQ(run("train --data " + p("run/train/dataset.jsonl") + " --epochs 5 --seed 1 --out " + p("ckpt.json")), 0);
  const json state = json::parse(read_json_lines(p("run/train/dataset.jsonl")).at(0).at("state").dump());
  write_json_file(p("state.json"), state);
  ASSERT_EQ(run("infer --ckpt " + p("ckpt.json") + " --state " + p("state.json") + " --out " + p("chunk1.json")), 0);
  ASSERT_EQ(run("infer --ckpt " + p("ckpt.json") + " --state " + p("state.json") + " --out " + p("chunk2.json")), 0);
  EXPECT_EQ(read_text_file(p("chunk1.json")), read_text_file(p("chunk2.json")));

  fs::create_directories(p("manifests"));
  for (const auto& e : fs::directory_iterator(p("run/alignment"))) fs::copy_file(e.path(), p("manifests") / e.path().filename());
  ASSERT_EQ(run("evaluate --scenarios " + p("run/evaluate/scenarios.json") + " --demos " + p("in/demos") +
                " --manifests " + p("manifests") + " --trials 3 --seeds 0,1 --out " + p("eval.json")),
            0);
  const json report = read_json_file(p("eval.json"));
  EXPECT_EQ(report.at("executor"), "transfer");
  EXPECT_EQ(report.at("sr").at("mean"), 1.0);
  EXPECT_EQ(run("evaluate --scenarios " + p("run/evaluate/scenarios.json") + " --demos " + p("in/demos") +
                " --manifests " + p("manifests") + " --executor policy"),
            2);  // policy needs --ckpt
  write_json_file(p("badckpt.json"), json{{"format", "other"}});
  EXPECT_EQ(run("infer --ckpt " + p("badckpt.json") + " --state " + p("state.json")), 2);
}

}  // namespace
}  // namespace funcanon
