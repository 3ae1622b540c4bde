// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "spimag/diff/tensor.hpp"
#include "spimag/env/wall_env.hpp"

namespace spimag::env {

// One random-action trajectory: frames, tokens and states have one more
// entry than actions.
struct Episode {
  std::uint64_t seed = 0;
  std::vector<Frame> frames;
  std::vector<diff::Tensor> tokens;
  std::vector<Vec2> actions;
  std::vector<EnvState> states;

  std::size_t length() const noexcept { return actions.size(); }
  friend bool operator==(const Episode&, const Episode&) = default;
};

struct Dataset {
  EnvConfig env;
  std::uint64_t seed = 0;
  std::vector<Episode> episodes;

  std::size_t total_transitions() const noexcept;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Episode e draws from its own stream seeded by (seed, e): a uniform start
// anywhere in the unit square, then i.i.d. uniform actions in
// [-action_max, action_max]^2.
Episode generate_episode(const EnvConfig& cfg, std::size_t ep_len, std::uint64_t seed, std::size_t index);
Dataset generate_dataset(const EnvConfig& cfg, std::size_t n_episodes, std::size_t ep_len, std::uint64_t seed);

// File layout: "SPIMAGD1" magic, u64 manifest length, JSON manifest (env
// config, tokenizer seed, per-episode index/seed/length/offset), then one
// little-endian float64 block per episode holding frames, tokens, actions
// and agent positions in that order.
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

nlohmann::json to_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const nlohmann::json& j);

// Deterministic split: the last `fraction` of episodes (at least one).
std::pair<std::vector<const Episode*>, std::vector<const Episode*>> split_episodes(const Dataset& ds,
                                                                                  double validation_fraction);

}  // namespace spimag::env
