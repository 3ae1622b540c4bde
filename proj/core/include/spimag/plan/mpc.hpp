// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spimag/env/wall_env.hpp"
#include "spimag/plan/cem.hpp"
#include "spimag/plan/masks.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::plan {

enum class Strategy { kRandom, kFixed, kLhs, kAttentionWm, kAtc, kFull };

std::string_view to_string(Strategy s);
// random | fixed | lhs | attn-wm | atc | full; throws ConfigError otherwise.
Strategy parse_strategy(std::string_view name);

struct PlanConfig {
  std::size_t candidates = 100;  // K
  std::size_t elites = 10;       // E
  std::size_t cem_iterations = 10;  // M
  std::size_t horizon = 5;       // H
  std::size_t max_mpc_iterations = 10;
  double drop_ratio = 0.0;  // p
  Strategy strategy = Strategy::kRandom;
  // false: one CEM call, execute its plan, stop; the drop mask is then
  // resampled for every CEM iteration.
  bool replan = true;

  void validate() const;
};

// Mean over maps and query rows of the weight each token position
// receives, summed over the frames it appears in. Every map is
// [queries x frames * n_tokens] with keys laid out frame-major.
std::vector<double> attention_importance(const diff::AttentionSink& maps, std::size_t n_tokens);

// One full-token forward pass over the history (the newest frame paired
// with a zero action) collecting every layer's attention maps. Not counted
// as a rollout call.
std::vector<double> score_attention_wm(const wm::WorldModel& model, const wm::History& history);

// Scores each plan by rolling it out under mask_for(iteration) and
// comparing the step-H prediction with the goal on the kept positions.
CemResult cem_plan(const wm::WorldModel& model, const wm::History& history, const Tensor& goal_tokens,
                   const CemConfig& cfg, const std::function<DropMask(std::size_t)>& mask_for,
                   wm::ForwardCounter& counter);

// Corruption applied to predictions during planning (noise-robustness
// harness). With it, rollouts keep every token, each step's predictions
// receive zero-mean Gaussian noise with per-element stddev
// sigma * ||token|| / sqrt(D), and the objective is restricted to a random
// mask of the strategy's drop ratio.
struct Corruption {
  double sigma = 0.0;
};

struct EpisodeResult {
  bool success = false;
  bool valid = true;
  std::size_t mpc_iterations = 0;
  std::vector<double> plan_seconds;  // one entry per MPC iteration
  std::uint64_t forward_calls = 0;
  double final_distance = 0.0;
  std::vector<DropMask> masks;  // mask used by each MPC iteration
  std::string error;

  double mean_plan_seconds() const;
};

struct MpcOptions {
  std::uint64_t seed = 0;
  std::optional<Corruption> corruption;
};

// Start and goal of benchmark episode `index`, identical for every
// strategy and drop ratio run with the same seed.
std::pair<env::EnvState, env::EnvState> episode_task(const env::EnvConfig& env, std::uint64_t seed,
                                                     std::size_t index);

// Seed of episode `index`'s planner streams.
std::uint64_t episode_seed(std::uint64_t seed, std::size_t index);

// Plan, execute all H actions (stopping early on success), observe, repeat
// until success or max_mpc_iterations. Timing covers mask selection and
// CEM only.
EpisodeResult mpc_run(const wm::WorldModel& model, const env::EnvConfig& env, const env::EnvState& start,
                      const env::EnvState& goal, const PlanConfig& cfg, const MpcOptions& opts);

}  // namespace spimag::plan
