// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spimag/diff/params.hpp"
#include "spimag/diff/tensor.hpp"
#include "spimag/env/dataset.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::analysis {

using diff::Tensor;

// Cross-attention pooling of a token set into one learnable query, then
// LayerNorm and a 2-layer GeLU MLP, then a linear read-out.
struct ProbeConfig {
  std::size_t feature_dim = 32;
  std::size_t n_heads = 4;
  std::size_t mlp_mult = 4;
  std::size_t out_dim = 2;
  std::size_t epochs = 500;
  std::size_t batch_size = 128;
  double lr = 1e-5;
  bool cosine_schedule = true;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

diff::ParamSet init_probe(const ProbeConfig& cfg, std::size_t token_dim, std::uint64_t seed);

// Predictions [samples x out_dim] for samples of equal token count.
Tensor probe_predict(const ProbeConfig& cfg, const diff::ParamSet& params, std::span<const Tensor> samples);

struct ProbeResult {
  diff::ParamSet params;
  std::vector<double> train_loss;       // per epoch
  std::vector<double> validation_loss;  // per epoch, MSE
  double target_variance = 0.0;         // validation MSE of predicting the training mean
};

// Trains on the kept rows of every sample. The last validation_fraction of
// samples is held out. Throws NumericError when the loss diverges.
ProbeResult train_probe(std::span<const Tensor> tokens, const Tensor& targets, const wm::DropMask& mask,
                        const ProbeConfig& cfg);

// Frames and agent positions drawn from a dataset for probing.
struct ProbeData {
  std::vector<Tensor> tokens;
  Tensor targets;
};
ProbeData probe_data(const env::Dataset& data, std::size_t samples, std::uint64_t seed);

}  // namespace spimag::analysis
