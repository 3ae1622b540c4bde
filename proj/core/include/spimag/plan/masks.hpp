// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "spimag/wm/world_model.hpp"

namespace spimag::plan {

using wm::DropMask;

// round((1 - p) * n), at least 1. Throws ConfigError unless p is in [0, 1).
std::size_t keep_count(std::size_t n_tokens, double p);

// Uniform random subset of keep_count(n_tokens, p) positions.
DropMask sample_mask_random(std::mt19937_64& rng, std::size_t n_tokens, double p);

// Latin-hypercube style selection of k tokens on an hp x wp grid: rows and
// columns each receive balanced counts (differing by at most one), spread
// over contiguous strata, and are paired at random without repeating a
// cell. For k <= min(hp, wp) every token gets its own row and column.
// Throws ConfigError if k > hp * wp or k == 0.
DropMask sample_mask_lhs(std::mt19937_64& rng, std::size_t hp, std::size_t wp, std::size_t k);
DropMask sample_mask_lhs_ratio(std::mt19937_64& rng, std::size_t hp, std::size_t wp, double p);

// The k highest scores; ties go to the lower index. Result is sorted.
DropMask top_k(std::span<const double> scores, std::size_t k);

}  // namespace spimag::plan
