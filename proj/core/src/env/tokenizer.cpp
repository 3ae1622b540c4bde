// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/env/tokenizer.hpp"

#include <cmath>
#include <random>
#include <string>

#include "spimag/errors.hpp"

namespace spimag::env {

Tokenizer::Tokenizer(std::size_t patch, std::size_t token_dim, std::uint64_t seed)
    : patch_(patch), token_dim_(token_dim), seed_(seed), projection_({patch * patch, token_dim}) {
  if (patch == 0 || token_dim == 0) throw ConfigError("tokenizer needs positive patch size and token_dim");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(patch * patch)));
  for (double& w : projection_.values()) w = normal(rng);
}

diff::Tensor Tokenizer::tokenize(const Frame& frame) const {
  if (frame.side == 0 || frame.side % patch_ != 0) {
    throw ConfigError("frame side " + std::to_string(frame.side) + " is not divisible by patch size " +
                      std::to_string(patch_));
  }
  const std::size_t per_side = frame.side / patch_;
  const std::size_t pp = patch_ * patch_;
  diff::Tensor tokens({per_side * per_side, token_dim_});
  std::vector<double> flat(pp);
  for (std::size_t pr = 0; pr < per_side; ++pr) {
    for (std::size_t pc = 0; pc < per_side; ++pc) {
      for (std::size_t i = 0; i < patch_; ++i) {
        for (std::size_t j = 0; j < patch_; ++j) flat[i * patch_ + j] = frame.at(pr * patch_ + i, pc * patch_ + j);
      }
      double* out = tokens.data() + (pr * per_side + pc) * token_dim_;
      for (std::size_t k = 0; k < pp; ++k) {
        if (flat[k] == 0.0) continue;
        const double* w = projection_.data() + k * token_dim_;
        for (std::size_t d = 0; d < token_dim_; ++d) out[d] += flat[k] * w[d];
      }
    }
  }
  return tokens;
}

}  // namespace spimag::env
