// Copyright 2026 The ebus-slowfast Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "ebus/cli.hpp"
#include "ebus/config.hpp"
#include "ebus/error.hpp"
#include "test_util.hpp"

namespace ebus {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ebus");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small enough for a few seconds end to end.
std::filesystem::path write_config(const std::filesystem::path& dir) {
  const auto path = dir / "cfg.json";
  std::ofstream(path) << R"({
    "output_dir": ")" << (dir / "run").string() << R"(",
    "seed": 3, "cases_per_class": 3, "frames_per_case": 24, "noise_pool_size": 4,
    "epochs": 1, "batch_size": 2, "eval_batch": 4
  })";
  return path;
}

TEST(RunConfig, ParseAndOverride) {
  auto cfg = parse_run_config(R"({"seed": 9, "lr": 0.5, "preset": "tiny"})");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.lr, 0.5);
  cfg.set("epochs", "3");
  cfg.set("preset", "\"paper\"");
  cfg.set("single_pathway", "true");
  EXPECT_EQ(cfg.epochs, 3);
  EXPECT_EQ(cfg.preset, "paper");
  EXPECT_TRUE(cfg.single_pathway);
  EXPECT_EQ(cfg.model().stage_blocks, (std::vector<std::int64_t>{3, 4, 6, 3}));
}

TEST(RunConfig, RejectsUnknownAndMistyped) {
  EXPECT_THROW(parse_run_config(R"({"sede": 1})"), Error);
  EXPECT_THROW(parse_run_config(R"({"epochs": "ten"})"), Error);
  EXPECT_THROW(parse_run_config(R"({"epochs": 2.5})"), Error);
  EXPECT_THROW(parse_run_config("[1, 2]"), Error);
  EXPECT_THROW(parse_run_config("{"), FormatError);
  RunConfig cfg;
  EXPECT_THROW(cfg.set("nope", "1"), Error);
  EXPECT_THROW(cfg.set("lr", "fast"), Error);
  cfg.preset = "huge";
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(RunConfig, EveryKeyIsSettable) {
  RunConfig cfg;
  for (const auto& key : run_config_keys()) {
    EXPECT_NO_THROW(cfg.set(key, key == "preset" ? "tiny" : key == "output_dir" || key == "model_name" ? "x" : "1"))
        << key;
  }
}

TEST(Cli, UsageErrors) {
  testing::TempDir dir("cli_usage");
  const auto cfg = write_config(dir.path()).string();
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate", "--config", cfg}).code, 2);
  EXPECT_EQ(cli({"eval"}).code, 2);
  auto r = cli({"eval", "--config", cfg, "--bogus_key=1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error code="), std::string::npos);
  EXPECT_NE(cli({"eval", "--config", (dir.path() / "missing.json").string()}).code, 0);
}

TEST(Cli, EvalWithoutCheckpointFails) {
  testing::TempDir dir("cli_nockpt");
  const auto cfg = write_config(dir.path()).string();
  ASSERT_EQ(cli({"synth", "--config", cfg}).code, 0);
  auto r = cli({"eval", "--config", cfg});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos);
}

TEST(Cli, PipelineAndDeterminism) {
  testing::TempDir a("cli_a"), b("cli_b");
  for (const auto* dir : {&a, &b}) {
    const auto cfg = write_config(dir->path()).string();
    for (const char* cmd : {"synth", "train", "eval", "noise-eval", "export-codes"}) {
      auto r = cli({cmd, "--config", cfg, "--deterministic"});
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
    ASSERT_EQ(cli({"export-codes", "--config", cfg, "--untrained=true"}).code, 0);
  }
  const auto ra = a.path() / "run", rb = b.path() / "run";
  for (const char* file : {"metrics.csv", "noise_metrics.csv", "codes.csv", "codes_untrained.csv",
                           "checkpoint.ebds"}) {
    ASSERT_TRUE(std::filesystem::exists(ra / file)) << file;
    EXPECT_EQ(slurp(ra / file), slurp(rb / file)) << file;
  }
  EXPECT_EQ(slurp(ra / "metrics.csv").rfind("model,auc,accuracy,precision,recall,specificity", 0), 0u);
  EXPECT_NE(slurp(ra / "noise_metrics.csv").find("delta_auc"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(ra / "train_stats.csv"));
}

TEST(Cli, SeedFlagOverridesConfig) {
  testing::TempDir a("cli_seed");
  const auto cfg = write_config(a.path()).string();
  ASSERT_EQ(cli({"synth", "--config", cfg, "--seed", "4"}).code, 0);
  const auto first = slurp(a.path() / "run" / "data" / "cases" / "benign_000" / "frame_0000.pgm");
  ASSERT_EQ(cli({"synth", "--config", cfg, "--seed", "5"}).code, 0);
  EXPECT_NE(slurp(a.path() / "run" / "data" / "cases" / "benign_000" / "frame_0000.pgm"), first);
}

}  // namespace
}  // namespace ebus
