// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "spimag/diff/tensor.hpp"
#include "spimag/env/wall_env.hpp"

namespace spimag::env {

// Frozen patch encoder: every P x P patch is flattened row-major and
// multiplied by a fixed Gaussian projection (P*P x D) drawn from a seed.
// Never trained.
class Tokenizer {
 public:
  Tokenizer(std::size_t patch, std::size_t token_dim, std::uint64_t seed);
  explicit Tokenizer(const EnvConfig& cfg) : Tokenizer(cfg.patch, cfg.token_dim, cfg.tokenizer_seed) {}

  // N x D tokens, N = (G / P)^2, in row-major patch-grid order.
  diff::Tensor tokenize(const Frame& frame) const;

  const diff::Tensor& projection() const noexcept { return projection_; }
  std::size_t patch() const noexcept { return patch_; }
  std::size_t token_dim() const noexcept { return token_dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::size_t patch_;
  std::size_t token_dim_;
  std::uint64_t seed_;
  diff::Tensor projection_;
};

}  // namespace spimag::env
