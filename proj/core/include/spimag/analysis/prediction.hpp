// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spimag/env/dataset.hpp"
#include "spimag/plan/mpc.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::analysis {

// Per-row ||pred - target|| / ||target||, summed, skipping rows whose
// target norm is zero. Returns {sum, counted rows, skipped rows}.
struct RelativeError {
  double sum = 0.0;
  std::size_t counted = 0;
  std::size_t excluded = 0;

  double mean() const noexcept { return counted ? sum / static_cast<double>(counted) : 0.0; }
};
RelativeError relative_l2(const diff::Tensor& pred, const diff::Tensor& target);

struct PredErrorResult {
  double ratio = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> trials;
  std::size_t excluded_zero_norm = 0;  // summed over trials
  std::size_t counted = 0;
};

struct PredErrorConfig {
  std::size_t trials = 5;
  std::size_t max_windows = 512;
  std::uint64_t seed = 0;
};

// One random mask per trial. Every window of h+1 frames from `episodes` is
// fed with only the kept positions and scored against the next frame's
// kept tokens by mean relative L2 distance.
PredErrorResult prediction_error(const wm::WorldModel& model, std::span<const env::Episode* const> episodes,
                                 double ratio, const PredErrorConfig& cfg = {});

struct NoiseCell {
  double sigma = 0.0;
  double drop = 0.0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::vector<bool> outcomes;

  double success_rate() const noexcept {
    return episodes ? static_cast<double>(successes) / static_cast<double>(episodes) : 0.0;
  }
};

// Success rate of MPC-CEM driven by corrupted full-model predictions for
// every (sigma, drop) pair. Episode i uses the same task and planner seed
// in every cell.
std::vector<NoiseCell> noise_robustness(const wm::WorldModel& model, const env::EnvConfig& env,
                                        std::span<const double> sigmas, std::span<const double> drops,
                                        std::size_t episodes, const plan::PlanConfig& cfg, std::uint64_t seed);

// Uniform random actions for max_mpc_iterations * horizon steps, success as
// soon as the agent reaches the goal.
NoiseCell random_action_baseline(const env::EnvConfig& env, std::size_t episodes, const plan::PlanConfig& cfg,
                                 std::uint64_t seed);

}  // namespace spimag::analysis
