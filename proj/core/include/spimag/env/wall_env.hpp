// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace spimag::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

double distance(Vec2 a, Vec2 b);

// Vertical wall at x with a door spanning (gap_lo, gap_hi) in y.
struct Wall {
  double x = 0.5;
  double gap_lo = 0.375;
  double gap_hi = 0.625;
  friend bool operator==(const Wall&, const Wall&) = default;
};

// Static description of the two-room navigation task. The door position is
// global, shared by every episode.
struct EnvConfig {
  std::size_t grid = 16;         // frame side G in pixels
  std::size_t patch = 4;         // patch side P
  std::size_t token_dim = 16;    // tokenizer output D
  std::uint64_t tokenizer_seed = 7;
  Wall wall;
  double agent_radius = 0.15;    // disc radius in unit coordinates
  double action_max = 0.1;
  double contact_eps = 1e-4;
  double success_radius = 0.1;
  // Planning tasks place the goal this far from the start.
  double goal_min_distance = 0.2;
  double goal_max_distance = 0.5;

  std::size_t patches_per_side() const { return grid / patch; }
  std::size_t n_tokens() const { return patches_per_side() * patches_per_side(); }
  // Throws ConfigError on inconsistent values.
  void validate() const;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct EnvState {
  Vec2 agent;
  Wall wall;
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

EnvState make_state(const EnvConfig& cfg, Vec2 agent);

Vec2 clip_action(const EnvConfig& cfg, Vec2 a);

// Moves the agent by the clipped action. Crossing the wall line outside
// the door stops the agent contact_eps short of the wall at the crossing
// point.
EnvState step(const EnvConfig& cfg, const EnvState& s, Vec2 action);

// Grayscale G x G image, row-major, values in [0, 1]. Row 0 is y = 0.
struct Frame {
  std::size_t side = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * side + col]; }
  friend bool operator==(const Frame&, const Frame&) = default;
};

// Wall column at intensity 1 except rows whose centre lies inside the door;
// the agent is an anti-aliased filled disc (4x4 supersampling), combined
// with the wall by max.
Frame render(const EnvConfig& cfg, const EnvState& s);

// Column index of the wall in a rendered frame.
std::size_t wall_column(const EnvConfig& cfg);

bool is_success(const EnvConfig& cfg, const EnvState& s, Vec2 goal);

// Start and goal for one planning episode, both uniform in the unit square
// with their distance in [goal_min_distance, goal_max_distance].
std::pair<EnvState, EnvState> sample_task(const EnvConfig& cfg, std::mt19937_64& rng);

}  // namespace spimag::env
