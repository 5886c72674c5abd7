// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "medusa/checkpoint.hpp"
#include "medusa/tree_io.hpp"
#include "test_support.hpp"

namespace medusa {
namespace {

using ::testing::HasSubstr;
using nlohmann::json;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::ofstream(path("model.json")) << config_to_json(testing::tiny_config(48, 3)).dump();
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string make_model(const std::string& name, std::uint64_t seed = 1) {
    const auto r = run({"--seed", std::to_string(seed), "init-model", "--config", path("model.json"),
                        "--out", path(name)});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(name);
  }
  std::filesystem::path dir_;
};

TEST_F(Cli, UsageErrorsExitTwo) {
  auto r = run({});
  EXPECT_EQ(r.code, 2);
  EXPECT_THAT(r.err, HasSubstr("Usage"));
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"build-tree", "--bogus"}).code, 2);
  EXPECT_EQ(run({"generate", "--prompt", "x"}).code, 2);  // missing --checkpoint
  EXPECT_EQ(run({"--precision", "half", "selftest"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  const auto r = run({"generate", "--checkpoint", path("absent.bin"), "--prompt", "hi"});
  EXPECT_EQ(r.code, 1);
  EXPECT_THAT(r.err, HasSubstr("cannot open"));
  std::ofstream(path("bad_tree.json")) << R"({"topk_per_head": [2], "paths": [[0, 0]]})";
  EXPECT_EQ(run({"build-tree", "--spec", path("bad_tree.json")}).code, 1);
}

TEST_F(Cli, BuildTreeFourNodeDump) {
  std::ofstream(path("t.json")) << R"({"topk_per_head": [2, 1], "paths": [[0], [1], [0, 0]]})";
  const auto r = run({"build-tree", "--spec", path("t.json"), "--out", path("buf.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto dump = json::parse(slurp(path("buf.json")));
  EXPECT_EQ(dump.at("T"), 4);
  EXPECT_EQ(dump.at("attn_mask"), json::parse("[[1,0,0,0],[1,1,0,0],[1,0,1,0],[1,1,0,1]]"));
  EXPECT_EQ(dump.at("tree_indices"), json::parse("[0,1,2,3]"));
  EXPECT_EQ(dump.at("retrieve_indices"), json::parse("[[0,2,-1],[0,1,3]]"));
  EXPECT_EQ(buffers_from_json(dump), compile_tree({{2, 1}, {{0}, {1}, {0, 0}}}));
}

TEST_F(Cli, GenerateModesAgree) {
  const auto ckpt = make_model("m.bin");
  for (const std::string precision : {"double", "single"}) {
    std::vector<std::string> tokens;
    for (const std::string mode : {"auto", "medusa"}) {
      const auto r = run({"--seed", "3", "--precision", precision, "generate", "--checkpoint", ckpt,
                          "--prompt", "hello world", "--max-tokens", "24", "--mode", mode});
      ASSERT_EQ(r.code, 0) << r.err;
      const auto j = json::parse(r.out);
      EXPECT_EQ(j.at("mode"), mode);
      EXPECT_LE(j.at("tokens").size(), 24u);
      tokens.push_back(j.at("tokens").dump());
    }
    EXPECT_EQ(tokens[0], tokens[1]) << precision;
  }
}

TEST_F(Cli, GenerateWithTreeFileAndIdPrompt) {
  const auto ckpt = make_model("m.bin");
  std::ofstream(path("chain.json")) << R"({"topk_per_head": [1, 1]})";
  const auto a = run({"generate", "--checkpoint", ckpt, "--tree", path("chain.json"), "--prompt",
                      "0,5,9", "--no-eos", "--max-tokens", "16"});
  const auto b = run({"generate", "--checkpoint", ckpt, "--prompt", "0,5,9", "--no-eos",
                      "--mode", "auto", "--max-tokens", "16"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(json::parse(a.out).at("tokens"), json::parse(b.out).at("tokens"));
  EXPECT_EQ(json::parse(a.out).at("tokens").size(), 16u);
  EXPECT_EQ(json::parse(a.out).at("prompt"), json::parse("[0,5,9]"));
}

TEST_F(Cli, ArtifactsAreByteIdenticalAcrossRuns) {
  for (const std::string suffix : {"a", "b"}) {
    ASSERT_EQ(run({"--seed", "11", "gen-corpus", "--out", path("c" + suffix + ".jsonl"), "-n", "20",
                   "--vocab", "48"})
                  .code,
              0);
    make_model("m" + suffix + ".bin", 11);
    const auto r = run({"--seed", "11", "train-heads", "--checkpoint", path("m" + suffix + ".bin"),
                        "--corpus", path("c" + suffix + ".jsonl"), "--samples", "12",
                        "--out", path("t" + suffix + ".bin"), "--loss-csv",
                        path("loss" + suffix + ".csv"), "--eval-json", path("eval" + suffix + ".json")});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const std::string f : {"c%.jsonl", "m%.bin", "t%.bin", "loss%.csv", "eval%.json"}) {
    auto a = f, b = f;
    a.replace(a.find('%'), 1, "a");
    b.replace(b.find('%'), 1, "b");
    EXPECT_EQ(slurp(path(a)), slurp(path(b))) << f;
  }
}

TEST_F(Cli, TrainHeadsKeepsBackboneAndWritesReports) {
  const auto ckpt = make_model("m.bin");
  std::ofstream(path("train.json")) << R"({"max_steps": 25, "batch_size": 16, "learning_rate": 0.005})";
  const auto r = run({"train-heads", "--checkpoint", ckpt, "--config", path("train.json"),
                      "--samples", "20", "--eval-samples", "10", "--no-preserve-special", "--out",
                      path("trained.bin"), "--loss-csv", path("loss.csv"), "--eval-json",
                      path("eval.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto before = load_checkpoint(ckpt), after = load_checkpoint(path("trained.bin"));
  EXPECT_EQ(backbone_digest(before.backbone), backbone_digest(after.backbone));
  EXPECT_NE(before.heads[0].weight, after.heads[0].weight);
  const auto csv = slurp(path("loss.csv"));
  EXPECT_EQ(csv.rfind("step,loss,lr\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 26);
  const auto eval = json::parse(slurp(path("eval.json")));
  EXPECT_EQ(eval.at("top1").size(), 3u);
  EXPECT_EQ(eval.at("steps"), 25);
}

TEST_F(Cli, BenchWritesCsv) {
  const auto ckpt = make_model("m.bin");
  std::ofstream(path("sweep.json")) << R"({"lengths": [12, 20], "reps": 3, "warmup": 1})";
  const auto r = run({"bench", "--checkpoint", ckpt, "--config", path("sweep.json"), "--out",
                      path("bench.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(path("bench.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "length,rep,ac,overhead,speedup_measured,speedup_model,steps,wall_ms_spec,wall_ms_auto");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6 + 2);
  EXPECT_THAT(csv, HasSubstr("\n20,median,"));
}

TEST_F(Cli, SelftestPasses) {
  const auto r = run({"selftest", "--trees", "50", "--trials", "8", "--grad-points", "3"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  std::istringstream in(r.out);
  int lines = 0;
  for (std::string line; std::getline(in, line); ++lines) EXPECT_TRUE(json::parse(line).at("ok"));
  EXPECT_EQ(lines, 3);
}

TEST(ParsePrompt, IdsAndText) {
  EXPECT_EQ(cli::parse_prompt("0,5, 9", 32), (std::vector<int>{0, 5, 9}));
  EXPECT_EQ(cli::parse_prompt("A", 32), (std::vector<int>{0, 4 + 65 % 28}));
  EXPECT_THROW(cli::parse_prompt("0,99", 32), std::invalid_argument);
  EXPECT_THROW(cli::parse_prompt("1,,2", 32), std::invalid_argument);
}

}  // namespace
}  // namespace medusa
