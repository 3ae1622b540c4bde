// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "spimag/diff/params.hpp"

namespace spimag::diff {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators shaped like the parameters they track.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParamSet& params, AdamConfig config);

  const AdamConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }
  std::uint64_t step() const noexcept { return step_; }
  const ParamSet& first_moment() const noexcept { return m_; }
  const ParamSet& second_moment() const noexcept { return v_; }

  friend void adam_step(ParamSet& params, const GradSet& grads, AdamState& state);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  ParamSet m_;
  ParamSet v_;
};

// Bias-corrected Adam update. Throws NumericError naming the first
// parameter whose gradient holds a NaN/Inf; parameters are untouched then.
void adam_step(ParamSet& params, const GradSet& grads, AdamState& state);

}  // namespace spimag::diff
