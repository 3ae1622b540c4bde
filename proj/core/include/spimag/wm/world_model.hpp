// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "spimag/diff/graph.hpp"
#include "spimag/diff/ops.hpp"
#include "spimag/diff/params.hpp"

namespace spimag::wm {

using diff::AttentionMask;
using diff::Tensor;

// Architecture of the causal transformer world model. The context window
// holds history_len + 1 frames of grid_h * grid_w tokens each.
struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t embed_dim = 64;
  std::size_t mlp_hidden = 256;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  std::size_t token_dim = 16;
  std::size_t action_dim = 2;
  std::size_t action_proj_dim = 8;
  std::size_t history_len = 2;
  double dropout = 0.1;  // residual-stream dropout, training only

  std::size_t n_tokens() const noexcept { return grid_h * grid_w; }
  std::size_t context_frames() const noexcept { return history_len + 1; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Two-way split of token positions used for grouped-attention training.
// One assignment covers every frame of a training sequence.
struct GroupAssignment {
  std::vector<std::uint8_t> group;  // 0 or 1 per token position
  std::size_t group0_size = 0;
};

// Group-0 size uniform on {1, ..., n-1}; members a uniform subset of it.
GroupAssignment sample_group_assignment(std::mt19937_64& rng, std::size_t n_tokens);

// allowed(i, j) <=> frame(j) <= frame(i) and, when groups are given,
// group(pos i) == group(pos j). Positions are listed frame-major with
// `positions` (token indices) repeated in every frame.
AttentionMask build_mask(std::size_t n_frames, std::span<const std::size_t> positions,
                         const std::optional<GroupAssignment>& groups = std::nullopt);
AttentionMask build_mask(const ModelConfig& cfg, const std::optional<GroupAssignment>& groups = std::nullopt);

// Sorted, unique token positions kept for a sparse forward pass, with the
// drop fraction that produced them.
struct DropMask {
  std::vector<std::size_t> kept;
  double p = 0.0;
  std::size_t n_tokens = 0;

  static DropMask all(std::size_t n_tokens);
  std::size_t size() const noexcept { return kept.size(); }
  // Throws ShapeError if indices are unsorted, duplicated or out of range.
  void validate() const;
  friend bool operator==(const DropMask&, const DropMask&) = default;
};

// B sequences sharing frame count and kept positions.
//   tokens:  [B * frames * n, token_dim], frame-major within a sequence
//   actions: [B * frames, action_dim], the action taken at each frame
//   masks:   empty (causal mask over the kept positions), one shared, or B
struct SequenceBatch {
  std::size_t batch = 1;
  std::size_t frames = 1;
  std::vector<std::size_t> positions;
  Tensor tokens;
  Tensor actions;
  std::vector<AttentionMask> masks;

  std::size_t tokens_per_seq() const noexcept { return frames * positions.size(); }
};

struct ForwardOptions {
  bool training = false;                   // enables residual dropout
  std::mt19937_64* rng = nullptr;          // required when training with dropout > 0
  bool last_frame_only = true;             // predictions for the newest frame only
  diff::AttentionSink* attention = nullptr;  // collects every layer's weights
};

// Binds parameters as graph leaves (variables when the graph records).
std::vector<diff::NodeId> bind_params(diff::Graph& g, const diff::ParamSet& params);

// Appends the forward pass to `g`. The returned node holds next-frame
// predictions, [B * n, D] (or [B * frames * n, D] when last_frame_only is
// false), computed as the input token plus a linear read-out.
diff::NodeId build_forward(diff::Graph& g, const ModelConfig& cfg, std::span<const diff::NodeId> params,
                           const SequenceBatch& batch, const ForwardOptions& opts);

diff::ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed);

// Counts world-model forward calls, one per sequence per prediction step.
class ForwardCounter {
 public:
  void add(std::uint64_t n) noexcept { count_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t value() const noexcept { return count_.load(std::memory_order_relaxed); }
  void reset() noexcept { count_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

ForwardCounter& global_forward_counter();

// Past observations for planning: frames (N x D tokens, oldest first) and
// the actions executed after every frame but the newest.
struct History {
  std::vector<Tensor> frames;
  std::vector<Tensor> actions;  // each [1 x action_dim]; frames.size() - 1 of them

  void push(Tensor executed_action, Tensor next_frame);
  // Drops frames older than the newest `max_frames`.
  void trim(std::size_t max_frames);
};

// Applied to each step's batched predictions [B * n, D] before they are fed
// back; `step` counts from 0.
using PredictionHook = std::function<void(std::size_t step, Tensor& predictions)>;

// Frozen parameters plus the inference entry points. Safe to share across
// threads; every call builds its own graph.
class WorldModel {
 public:
  WorldModel(ModelConfig cfg, diff::ParamSet params);

  const ModelConfig& config() const noexcept { return cfg_; }
  const diff::ParamSet& params() const noexcept { return params_; }
  diff::ParamSet& params() noexcept { return params_; }

  // Next-frame predictions for the newest frame of every sequence, [B * n, D].
  Tensor predict(const SequenceBatch& batch, diff::AttentionSink* attention = nullptr) const;

  // Single-sequence form. `history` holds 1..h+1 full token grids and one
  // action [1 x action_dim] per frame. With `keep`, only kept positions are
  // embedded, attended and predicted. `mask` overrides the causal mask.
  Tensor forward(std::span<const Tensor> history, std::span<const Tensor> actions,
                 const std::optional<DropMask>& keep = std::nullopt,
                 const std::optional<AttentionMask>& mask = std::nullopt,
                 diff::AttentionSink* attention = nullptr) const;

  // Autoregressive rollout of K plans, each [H x action_dim], from a shared
  // history. Returns the step-H predictions restricted to `keep`, one
  // [n_kept x D] tensor per plan, and adds K * H to `counter`.
  std::vector<Tensor> rollout_batch(const History& history, std::span<const Tensor> plans, const DropMask& keep,
                                    ForwardCounter& counter = global_forward_counter(),
                                    const PredictionHook& hook = {}) const;

  Tensor rollout(const History& history, const Tensor& plan, const DropMask& keep,
                 ForwardCounter& counter = global_forward_counter()) const;

 private:
  ModelConfig cfg_;
  diff::ParamSet params_;
};

}  // namespace spimag::wm
