// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "spimag/diff/tensor.hpp"

namespace spimag::plan {

using diff::Tensor;

// Gaussian over action sequences, both [H x action_dim].
struct CemState {
  Tensor mean;
  Tensor stddev;
};

struct CemConfig {
  std::size_t candidates = 100;  // K
  std::size_t elites = 10;       // E
  std::size_t iterations = 10;   // M
  std::size_t horizon = 5;       // H
  std::size_t action_dim = 2;
  double action_max = 0.1;
  double std_floor = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // e.g. the MPC iteration
  // Keep the previous iteration's elites (with their cached scores) in
  // the selection pool. Only sound while the score function is fixed.
  bool carry_elites = true;

  void validate() const;
};

// Mean 0, stddev action_max / 2.
CemState initial_state(const CemConfig& cfg);

// Scores one batch of candidate plans; lower is better. `iteration` counts
// CEM iterations from 0.
using BatchScorer = std::function<std::vector<double>(std::size_t iteration, std::span<const Tensor> plans)>;

struct CemResult {
  Tensor plan;                    // final mean
  Tensor best_plan;               // lowest-scoring candidate seen
  std::vector<double> best_score;  // best elite score after each iteration
  CemState state;
};

// Candidate c of iteration m is drawn from its own stream seeded by
// (seed, stream, m, c), then clipped to [-action_max, action_max]. The
// distribution is refit to the elite mean and unbiased elite stddev,
// floored at std_floor. Throws PlanningError when every score in an
// iteration is non-finite.
CemResult cem_optimize(const CemConfig& cfg, const BatchScorer& score);

// Seed for (seed, stream, iteration, candidate).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t iteration, std::uint64_t index);

}  // namespace spimag::plan
