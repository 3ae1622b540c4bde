// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spimag/diff/adam.hpp"
#include "spimag/env/dataset.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::wm {

enum class MaskPolicy { kGrouped, kFull };

std::string_view to_string(MaskPolicy policy);
// Accepts "grouped" or "full"; throws ConfigError otherwise.
MaskPolicy parse_mask_policy(std::string_view name);

// A training window: h+1 consecutive frames of an episode starting at
// `start`, each paired with the frame that follows it.
struct Window {
  const env::Episode* episode = nullptr;
  std::size_t start = 0;
};

std::vector<Window> make_windows(std::span<const env::Episode* const> episodes, std::size_t context_frames);

// Inputs plus next-frame targets for every frame of every window, laid out
// like SequenceBatch::tokens.
struct TrainBatch {
  SequenceBatch inputs;
  Tensor targets;
};

// With kGrouped every sequence draws its own GroupAssignment, shared by all
// of its frames.
TrainBatch make_batch(const ModelConfig& cfg, std::span<const Window> windows, MaskPolicy policy,
                      std::mt19937_64& rng);

// One Adam update on the mean squared next-token error over every token of
// the batch. Throws NumericError naming `batch_index` on a non-finite loss.
double train_step(const ModelConfig& cfg, diff::ParamSet& params, diff::AdamState& adam, const TrainBatch& batch,
                  std::mt19937_64& rng, std::size_t batch_index = 0);

// Loss without dropout or parameter updates.
double evaluate_loss(const ModelConfig& cfg, const diff::ParamSet& params, const TrainBatch& batch);

struct TrainConfig {
  std::size_t epochs = 8;
  std::size_t batch_size = 32;
  double lr = 5e-4;
  std::uint64_t seed = 0;
  MaskPolicy policy = MaskPolicy::kGrouped;
  double validation_fraction = 0.1;
  std::size_t max_steps = 0;  // 0 = no cap
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  diff::ParamSet params;
  std::vector<double> step_losses;
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Windows are shuffled each epoch; the validation split holds the last
// episodes of the dataset.
TrainResult train(const ModelConfig& cfg, const env::Dataset& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

// Model config matching the dataset's token grid.
ModelConfig model_config_for(const env::EnvConfig& env, ModelConfig base = {});

}  // namespace spimag::wm
