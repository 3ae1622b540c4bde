// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "spimag/bench/bench.hpp"
#include "spimag/errors.hpp"
#include "spimag/wm/model_io.hpp"

namespace {

using namespace spimag;
using namespace spimag::bench;
namespace fs = std::filesystem;

constexpr const char* kToml = R"(
seed = 5
episodes = 3
checkpoint = "model.bin"
out_dir = "out"
strategies = ["random", "lhs", "atc"]
drop_ratios = [0.0, 0.5]
timing_serial = false
workers = 2

[env]
grid = 8
patch = 2
token_dim = 4

[data]
episodes = 20
length = 10

[model]
n_layers = 1
n_heads = 2
embed_dim = 8
mlp_hidden = 16
history_len = 1

[train]
epochs = 2
lr = 0.001
policy = "full"

[plan]
candidates = 8
elites = 2
cem_iterations = 2
horizon = 2
max_mpc_iterations = 2
)";

TEST(RunConfigToml, ParsesEverySection) {
  const RunConfig c = parse_run_config(kToml, "/base");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.episodes, 3u);
  EXPECT_EQ(c.checkpoint, fs::path("/base/model.bin"));
  EXPECT_EQ(c.out_dir, fs::path("/base/out"));
  EXPECT_EQ(c.strategies, (std::vector<plan::Strategy>{plan::Strategy::kRandom, plan::Strategy::kLhs,
                                                        plan::Strategy::kAtc}));
  EXPECT_EQ(c.drop_ratios, (std::vector<double>{0.0, 0.5}));
  EXPECT_FALSE(c.timing_serial);
  EXPECT_EQ(c.workers, 2u);
  EXPECT_EQ(c.env.grid, 8u);
  EXPECT_EQ(c.env.patch, 2u);
  EXPECT_EQ(c.dataset_episodes, 20u);
  EXPECT_EQ(c.episode_length, 10u);
  EXPECT_EQ(c.model.grid_h, 4u);
  EXPECT_EQ(c.model.token_dim, 4u);
  EXPECT_EQ(c.model.embed_dim, 8u);
  EXPECT_EQ(c.train.epochs, 2u);
  EXPECT_EQ(c.train.policy, wm::MaskPolicy::kFull);
  EXPECT_EQ(c.train.seed, 5u);
  EXPECT_EQ(c.plan.candidates, 8u);
  EXPECT_EQ(c.plan.horizon, 2u);
}

TEST(RunConfigToml, Defaults) {
  const RunConfig c = parse_run_config("");
  EXPECT_EQ(c.episodes, 30u);
  EXPECT_EQ(c.plan.candidates, 100u);
  EXPECT_EQ(c.plan.cem_iterations, 10u);
  EXPECT_EQ(c.plan.horizon, 5u);
  EXPECT_TRUE(c.timing_serial);
}

TEST(RunConfigToml, Errors) {
  EXPECT_THROW(parse_run_config("episodes = ["), ConfigError);
  EXPECT_THROW(parse_run_config("episodes = -3"), ConfigError);
  EXPECT_THROW(parse_run_config("episodes = \"many\""), ConfigError);
  EXPECT_THROW(parse_run_config("strategies = [\"nope\"]"), ConfigError);
  EXPECT_THROW(parse_run_config("drop_ratios = [0.0, 1.5]"), ConfigError);
  EXPECT_THROW(parse_run_config("episodes = 0"), ConfigError);
  EXPECT_THROW(parse_run_config("[env]\ngrid = 10\npatch = 4"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/run.toml"), Error);
}

TEST(RunConfigToml, HashTracksContent) {
  const RunConfig a = parse_run_config(kToml, "/base");
  RunConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed = 6;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Report, CsvRoundTrip) {
  const std::vector<BenchRecord> recs{{"full", 0.0, 0.9, 1.25, 0.0, 1000, 30},
                                      {"random", 0.5, 0.8, 0.6, -52.0, 800, 30},
                                      {"lhs", 0.9, 1.0 / 3.0, 0.1 / 3.0, -97.333333333333329, 750, 30}};
  const std::string csv = to_csv(recs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "strategy,p,success_rate,plan_seconds_per_iter,change_pct,forward_calls,episodes");
  EXPECT_EQ(parse_records_csv(csv), recs);
  const std::string table = format_table(recs);
  EXPECT_NE(table.find("random"), std::string::npos);
  EXPECT_NE(table.find("-52.0"), std::string::npos);
}

TEST(Report, Errors) {
  EXPECT_THROW(to_csv({}), DegenerateInputError);
  EXPECT_THROW(format_table({}), DegenerateInputError);
  EXPECT_THROW(parse_records_csv("a,b\n"), IoError);
  EXPECT_THROW(parse_records_csv("strategy,p,success_rate,plan_seconds_per_iter,change_pct,forward_calls,episodes\n"
                                 "full,0,1\n"),
               IoError);
}

TEST(Report, EpisodeCsvHeader) {
  plan::EpisodeResult r;
  r.success = true;
  r.mpc_iterations = 2;
  r.plan_seconds = {0.5, 1.5};
  r.forward_calls = 20;
  const EpisodeRow row = episode_row(r, 4, plan::Strategy::kLhs, 0.5);
  EXPECT_EQ(row.plan_seconds_per_iter, 1.0);
  const std::string csv = episodes_csv(std::vector<EpisodeRow>{row});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "episode,strategy,p,success,mpc_iters,plan_seconds_per_iter,forward_calls,final_distance");
  EXPECT_NE(csv.find("4,lhs,0.5,1,2,"), std::string::npos);
}

class BenchRun : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = parse_run_config(kToml, dir);
    cfg.strategies = {plan::Strategy::kRandom, plan::Strategy::kFixed, plan::Strategy::kAtc};
    cfg.drop_ratios = {0.5, 0.75};
  }
  fs::path dir = fs::temp_directory_path() / "spimag_bench_test";
  RunConfig cfg;
};

TEST_F(BenchRun, CellsAndPercentChange) {
  const wm::WorldModel model(cfg.model, wm::init_params(cfg.model, 1));
  const BenchResult r = run_bench(cfg, model);
  ASSERT_EQ(r.records.size(), 7u);
  EXPECT_EQ(r.records[0].strategy, "full");
  EXPECT_EQ(r.records[0].change_pct, 0.0);
  EXPECT_EQ(r.episodes.size(), 7u * 3u);
  for (const BenchRecord& rec : r.records) {
    EXPECT_EQ(rec.episodes, 3u);
    EXPECT_NEAR(rec.change_pct, 100.0 * (rec.plan_seconds - r.records[0].plan_seconds) / r.records[0].plan_seconds,
                1e-9);
    std::uint64_t calls = 0, iters = 0;
    double seconds = 0.0;
    std::size_t wins = 0;
    for (const EpisodeRow& e : r.episodes) {
      if (e.strategy != rec.strategy || e.p != rec.p) continue;
      calls += e.forward_calls;
      iters += e.mpc_iters;
      seconds += e.plan_seconds_per_iter * static_cast<double>(e.mpc_iters);
      wins += e.success ? 1 : 0;
      EXPECT_EQ(e.forward_calls, e.mpc_iters * cfg.plan.candidates * cfg.plan.cem_iterations * cfg.plan.horizon);
    }
    EXPECT_EQ(rec.forward_calls, calls);
    EXPECT_NEAR(rec.plan_seconds, seconds / static_cast<double>(iters), 1e-12);
    EXPECT_NEAR(rec.success_rate, static_cast<double>(wins) / 3.0, 1e-15);
  }
  EXPECT_EQ(r.manifest.at("config_hash").get<std::string>(), config_hash(cfg));
}

TEST_F(BenchRun, DeterministicAcrossRunsAndWorkers) {
  const wm::WorldModel model(cfg.model, wm::init_params(cfg.model, 1));
  cfg.timing_serial = true;
  const BenchResult a = run_bench(cfg, model);
  cfg.timing_serial = false;
  const BenchResult b = run_bench(cfg, model);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].success, b.episodes[i].success);
    EXPECT_EQ(a.episodes[i].final_distance, b.episodes[i].final_distance);
    EXPECT_EQ(a.episodes[i].forward_calls, b.episodes[i].forward_calls);
  }
}

TEST_F(BenchRun, MissingCheckpointFailsFast) {
  cfg.checkpoint = dir / "absent.bin";
  EXPECT_THROW(run_bench(cfg), ConfigError);
}

TEST_F(BenchRun, WritesArtifactsFromCheckpoint) {
  fs::create_directories(dir);
  cfg.checkpoint = dir / "model.bin";
  cfg.out_dir = dir / "out";
  cfg.strategies = {plan::Strategy::kLhs};
  cfg.drop_ratios = {0.5};
  cfg.episodes = 1;
  wm::save_checkpoint(cfg.checkpoint, wm::Checkpoint{cfg.model, wm::init_params(cfg.model, 2),
                                                     wm::MaskPolicy::kGrouped, cfg.env});
  const BenchResult r = run_bench(cfg);
  for (const char* f : {"records.csv", "episodes.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(cfg.out_dir / f)) << f;
  std::ifstream in(cfg.out_dir / "records.csv");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(parse_records_csv(text), r.records);
  EXPECT_EQ(r.manifest.at("mask_policy").get<std::string>(), "grouped");
  fs::remove_all(dir);
}

}  // namespace
