// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "spimag/diff/graph.hpp"

namespace spimag::diff {

// Logit assigned to forbidden (query, key) pairs before softmax.
inline constexpr double kMaskedLogit = -1e9;

inline constexpr double kLayerNormEps = 1e-5;

// Boolean allow-matrix over (query, key) pairs.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t n_queries, std::size_t n_keys, bool allowed = true)
      : n_queries_(n_queries), n_keys_(n_keys), bits_(n_queries * n_keys, allowed ? 1 : 0) {}

  std::size_t n_queries() const noexcept { return n_queries_; }
  std::size_t n_keys() const noexcept { return n_keys_; }
  bool allowed(std::size_t q, std::size_t k) const noexcept { return bits_[q * n_keys_ + k] != 0; }
  void set(std::size_t q, std::size_t k, bool allowed) noexcept { bits_[q * n_keys_ + k] = allowed ? 1 : 0; }
  const std::uint8_t* row(std::size_t q) const noexcept { return bits_.data() + q * n_keys_; }

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t n_queries_ = 0;
  std::size_t n_keys_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Layout of a batched attention call: q holds batch * queries_per_seq rows,
// k and v hold batch * keys_per_seq rows; columns are split into n_heads
// equal head slices.
struct AttentionLayout {
  std::size_t n_heads = 1;
  std::size_t queries_per_seq = 0;
  std::size_t keys_per_seq = 0;
};

// Receives the post-softmax weights of every (sequence, head) block, in
// sequence-major order, each as a [queries x keys] tensor.
using AttentionSink = std::vector<Tensor>;

NodeId matmul(Graph& g, NodeId a, NodeId b);
NodeId add(Graph& g, NodeId a, NodeId b);
// x + broadcast of a [1 x cols] row to every row of x.
NodeId add_row(Graph& g, NodeId x, NodeId row);
NodeId scale(Graph& g, NodeId x, double factor);
// Per-row normalization over the last axis, then gain * x_hat + bias.
NodeId layernorm(Graph& g, NodeId x, NodeId gain, NodeId bias);
// tanh approximation.
NodeId gelu(Graph& g, NodeId x);
NodeId concat_cols(Graph& g, NodeId a, NodeId b);
// out[i] = table[indices[i]]; backward scatter-adds.
NodeId gather_rows(Graph& g, NodeId table, std::vector<std::size_t> indices);
// Inverted dropout; identity when p == 0.
NodeId dropout(Graph& g, NodeId x, double p, std::mt19937_64& rng);
// (1 / rows) * sum_r ||pred_r - target_r||^2 as a [1x1] tensor.
NodeId mse_rows(Graph& g, NodeId pred, NodeId target);
NodeId sum(Graph& g, NodeId x);

// Convenience: x W + b.
NodeId linear(Graph& g, NodeId x, NodeId weight, NodeId bias);

// softmax(q k^T / sqrt(d) + bias) v per sequence and head. `masks` is
// empty (everything allowed), a single mask shared by every sequence, or
// one mask per sequence.
NodeId multi_head_attention(Graph& g, NodeId q, NodeId k, NodeId v, const AttentionLayout& layout,
                            std::vector<AttentionMask> masks, AttentionSink* sink = nullptr);

// Single-head, single-sequence form.
NodeId masked_attention(Graph& g, NodeId q, NodeId k, NodeId v, const AttentionMask& mask,
                        AttentionSink* sink = nullptr);

}  // namespace spimag::diff
