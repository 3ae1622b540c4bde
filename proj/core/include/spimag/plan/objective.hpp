// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "spimag/diff/tensor.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::plan {

// sum_i ||pred_i - goal[kept_i]||^2 / |kept|. `pred` holds one row per kept
// position, `goal` all N tokens. Throws ShapeError on out-of-range indices
// or mismatched shapes.
double objective(const diff::Tensor& pred, const diff::Tensor& goal, const wm::DropMask& mask);

}  // namespace spimag::plan
