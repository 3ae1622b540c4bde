// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/diff/adam.hpp"

#include <cmath>

#include "spimag/errors.hpp"

namespace spimag::diff {

AdamState::AdamState(const ParamSet& params, AdamConfig config)
    : config_(config), m_(params.zeros_like()), v_(params.zeros_like()) {}

void adam_step(ParamSet& params, const GradSet& grads, AdamState& state) {
  auto& pe = params.entries();
  const auto& ge = grads.entries();
  if (pe.size() != ge.size() || pe.size() != state.m_.size()) {
    throw ShapeError("adam_step: parameter/gradient/state counts differ");
  }
  for (std::size_t i = 0; i < pe.size(); ++i) {
    if (pe[i].name != ge[i].name || pe[i].value.shape() != ge[i].value.shape()) {
      throw ShapeError("adam_step: gradient '" + ge[i].name + "' " + ge[i].value.shape_string() +
                       " does not match parameter '" + pe[i].name + "' " + pe[i].value.shape_string());
    }
    if (!ge[i].value.all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + pe[i].name + "'");
    }
  }

  ++state.step_;
  const AdamConfig& c = state.config_;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < pe.size(); ++i) {
    Tensor& p = pe[i].value;
    const Tensor& g = ge[i].value;
    Tensor& m = state.m_.entries()[i].value;
    Tensor& v = state.v_.entries()[i].value;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace spimag::diff
