// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spimag/diff/tensor.hpp"
#include "spimag/env/dataset.hpp"

namespace spimag::analysis {

using diff::Tensor;

enum class KernelKind { kLinear, kRbf };

// RBF bandwidth defaults to the median heuristic when unset.
struct KernelSpec {
  KernelKind kind = KernelKind::kLinear;
  std::optional<double> bandwidth;

  static KernelSpec linear() { return {KernelKind::kLinear, std::nullopt}; }
  static KernelSpec rbf(std::optional<double> bw = std::nullopt) { return {KernelKind::kRbf, bw}; }
};

// Median of the pairwise Euclidean distances between distinct rows; 1.0
// when that median is zero.
double median_bandwidth(const Tensor& x);

// n x n Gram matrix. RBF uses exp(-||a - b||^2 / (2 sigma^2)).
Tensor kernel_matrix(const Tensor& x, const KernelSpec& spec);

// tr(K H L H) / (n - 1)^2 with H = I - 11^T / n, floored at 0. Rows are
// samples. Throws DegenerateInputError for n < 4, ShapeError when the
// sample counts differ.
double hsic(const Tensor& x, const Tensor& y, const KernelSpec& kx, const KernelSpec& ky);

// hsic(X, Y) / sqrt(hsic(X, X) hsic(Y, Y)) clamped to [0, 1]; 0 when the
// denominator vanishes.
double nhsic(const Tensor& x, const Tensor& y, const KernelSpec& kx, const KernelSpec& ky);

struct HsicRow {
  double ratio = 0.0;
  std::size_t kept = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> values;
};

struct HsicSweepConfig {
  std::size_t samples = 128;
  std::size_t masks_per_ratio = 20;
  std::uint64_t seed = 0;
};

// nHSIC between kept tokens (flattened feature-wise per sample, linear
// kernel) and the agent position (RBF, median heuristic) on frames drawn
// uniformly from the dataset. One mask is shared by every sample of a
// repeat; ratio 0 has a single repeat.
std::vector<HsicRow> hsic_sweep(const env::Dataset& data, std::span<const double> ratios,
                                const HsicSweepConfig& cfg = {});

}  // namespace spimag::analysis
