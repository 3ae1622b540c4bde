// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spimag/errors.hpp"
#include "spimag/plan/mpc.hpp"
#include "spimag/wm/trainer.hpp"

namespace {

using namespace spimag;
using namespace spimag::plan;

env::EnvConfig small_env() {
  env::EnvConfig e;
  e.grid = 8;
  e.patch = 2;
  e.token_dim = 4;
  return e;
}

wm::WorldModel small_model(const env::EnvConfig& e) {
  wm::ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.embed_dim = 8;
  c.mlp_hidden = 16;
  c.history_len = 1;
  c = wm::model_config_for(e, c);
  return wm::WorldModel(c, wm::init_params(c, 3));
}

MpcOptions opts(std::uint64_t seed) {
  MpcOptions o;
  o.seed = seed;
  return o;
}

PlanConfig small_plan(Strategy s, double p) {
  PlanConfig pc;
  pc.candidates = 8;
  pc.elites = 2;
  pc.cem_iterations = 2;
  pc.horizon = 2;
  pc.max_mpc_iterations = 3;
  pc.strategy = s;
  pc.drop_ratio = p;
  return pc;
}

TEST(Strategy, NamesRoundTrip) {
  for (Strategy s : {Strategy::kRandom, Strategy::kFixed, Strategy::kLhs, Strategy::kAttentionWm, Strategy::kAtc,
                     Strategy::kFull})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_EQ(to_string(Strategy::kAttentionWm), "attn-wm");
  EXPECT_THROW(parse_strategy("bogus"), ConfigError);
}

TEST(PlanConfigValidate, RejectsBadValues) {
  PlanConfig pc;
  pc.drop_ratio = 1.0;
  EXPECT_THROW(pc.validate(), ConfigError);
  pc = PlanConfig{};
  pc.elites = 0;
  EXPECT_THROW(pc.validate(), ConfigError);
}

TEST(Mpc, StartAtGoalNeedsNoIterations) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  const env::EnvState s = env::make_state(e, {0.2, 0.3});
  const EpisodeResult r = mpc_run(m, e, s, s, small_plan(Strategy::kRandom, 0.5), {});
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.mpc_iterations, 0u);
  EXPECT_EQ(r.forward_calls, 0u);
}

TEST(Mpc, ForwardCallsAreItersTimesKMH) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  const auto [start, goal] = episode_task(e, 1, 0);
  for (Strategy s : {Strategy::kRandom, Strategy::kFixed, Strategy::kLhs, Strategy::kAttentionWm, Strategy::kAtc,
                     Strategy::kFull}) {
    const PlanConfig pc = small_plan(s, 0.5);
    const EpisodeResult r = mpc_run(m, e, start, goal, pc, opts(4));
    ASSERT_TRUE(r.valid) << r.error;
    EXPECT_GE(r.mpc_iterations, 1u);
    EXPECT_EQ(r.forward_calls, r.mpc_iterations * pc.candidates * pc.cem_iterations * pc.horizon) << to_string(s);
    EXPECT_EQ(r.plan_seconds.size(), r.mpc_iterations);
    EXPECT_EQ(r.masks.size(), r.mpc_iterations);
    for (const wm::DropMask& mask : r.masks) {
      EXPECT_NO_THROW(mask.validate());
      EXPECT_EQ(mask.size(), s == Strategy::kFull ? e.n_tokens() : keep_count(e.n_tokens(), 0.5));
    }
  }
}

TEST(Mpc, FixedMaskIsConstantAcrossIterations) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  const env::EnvState start = env::make_state(e, {0.1, 0.1}), goal = env::make_state(e, {0.9, 0.9});
  const EpisodeResult r = mpc_run(m, e, start, goal, small_plan(Strategy::kFixed, 0.75), opts(2));
  ASSERT_EQ(r.masks.size(), 3u);
  EXPECT_EQ(r.masks[0], r.masks[1]);
  EXPECT_EQ(r.masks[1], r.masks[2]);
  const EpisodeResult rr = mpc_run(m, e, start, goal, small_plan(Strategy::kRandom, 0.75), opts(2));
  EXPECT_FALSE(rr.masks[0] == rr.masks[1] && rr.masks[1] == rr.masks[2]);
}

TEST(Mpc, RandomAtZeroRatioEqualsFull) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  const auto [start, goal] = episode_task(e, 3, 1);
  const EpisodeResult a = mpc_run(m, e, start, goal, small_plan(Strategy::kRandom, 0.0), opts(9));
  const EpisodeResult b = mpc_run(m, e, start, goal, small_plan(Strategy::kFull, 0.0), opts(9));
  EXPECT_EQ(a.success, b.success);
  EXPECT_EQ(a.mpc_iterations, b.mpc_iterations);
  EXPECT_EQ(a.final_distance, b.final_distance);
  EXPECT_EQ(a.masks, b.masks);
}

TEST(Mpc, Deterministic) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  const auto [start, goal] = episode_task(e, 5, 2);
  const EpisodeResult a = mpc_run(m, e, start, goal, small_plan(Strategy::kLhs, 0.5), opts(1));
  const EpisodeResult b = mpc_run(m, e, start, goal, small_plan(Strategy::kLhs, 0.5), opts(1));
  EXPECT_EQ(a.final_distance, b.final_distance);
  EXPECT_EQ(a.masks, b.masks);
}

TEST(Mpc, SinglePlanModeRunsOnce) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  const env::EnvState start = env::make_state(e, {0.1, 0.1}), goal = env::make_state(e, {0.9, 0.9});
  PlanConfig pc = small_plan(Strategy::kRandom, 0.5);
  pc.replan = false;
  const EpisodeResult r = mpc_run(m, e, start, goal, pc, {});
  EXPECT_EQ(r.mpc_iterations, 1u);
}

TEST(Mpc, MismatchedModelIsConfigError) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  env::EnvConfig other = e;
  other.patch = 4;
  const env::EnvState s = env::make_state(other, {0.2, 0.2});
  EXPECT_THROW(mpc_run(m, other, s, s, small_plan(Strategy::kFull, 0.0), {}), ConfigError);
}

TEST(EpisodeTask, SameForEveryCall) {
  const env::EnvConfig e = small_env();
  EXPECT_EQ(episode_task(e, 7, 3), episode_task(e, 7, 3));
  EXPECT_NE(episode_task(e, 7, 3), episode_task(e, 7, 4));
  const auto [s, g] = episode_task(e, 7, 3);
  const double d = env::distance(s.agent, g.agent);
  EXPECT_GE(d, e.goal_min_distance);
  EXPECT_LE(d, e.goal_max_distance);
}

TEST(AttentionImportance, Examples) {
  // Two frames of two tokens; keys frame-major.
  const diff::AttentionSink maps{Tensor::matrix({{0.1, 0.2, 0.3, 0.4}, {0.5, 0.0, 0.5, 0.0}})};
  const std::vector<double> s = attention_importance(maps, 2);
  EXPECT_NEAR(s[0], (0.4 + 1.0) / 2.0, 1e-15);
  EXPECT_NEAR(s[1], (0.6 + 0.0) / 2.0, 1e-15);
  const diff::AttentionSink two{Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 1}, {0, 1}, {0, 1}})};
  const std::vector<double> t = attention_importance(two, 2);
  EXPECT_NEAR(t[0], 0.25, 1e-15);
  EXPECT_NEAR(t[1], 0.75, 1e-15);
}

TEST(AttentionImportance, SumsToOneForStochasticRows) {
  const env::EnvConfig e = small_env();
  const wm::WorldModel m = small_model(e);
  std::mt19937_64 rng(1);
  wm::History h;
  h.frames = {oracle::random_tensor(rng, 16, 4), oracle::random_tensor(rng, 16, 4)};
  h.actions = {oracle::random_tensor(rng, 1, 2, 0.05)};
  const std::vector<double> s = score_attention_wm(m, h);
  ASSERT_EQ(s.size(), 16u);
  EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 1.0, 1e-12);
}

TEST(AttentionImportance, Errors) {
  EXPECT_THROW(attention_importance({Tensor({2, 3})}, 2), ShapeError);
  EXPECT_THROW(attention_importance({}, 2), DegenerateInputError);
}

}  // namespace
