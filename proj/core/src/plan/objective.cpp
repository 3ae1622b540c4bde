// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/plan/objective.hpp"

#include <string>

#include "spimag/errors.hpp"

namespace spimag::plan {

double objective(const diff::Tensor& pred, const diff::Tensor& goal, const wm::DropMask& mask) {
  const std::size_t k = mask.kept.size();
  if (k == 0) throw ShapeError("objective over an empty mask");
  if (pred.rows() != k || pred.cols() != goal.cols()) {
    throw ShapeError("prediction " + pred.shape_string() + " does not match " + std::to_string(k) +
                     " kept rows of goal " + goal.shape_string());
  }
  const std::size_t d = goal.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t pos = mask.kept[i];
    if (pos >= goal.rows()) {
      throw ShapeError("mask index " + std::to_string(pos) + " out of range for " + std::to_string(goal.rows()) +
                       " goal tokens");
    }
    const double* p = pred.data() + i * d;
    const double* g = goal.data() + pos * d;
    for (std::size_t j = 0; j < d; ++j) total += (p[j] - g[j]) * (p[j] - g[j]);
  }
  return total / static_cast<double>(k);
}

}  // namespace spimag::plan
