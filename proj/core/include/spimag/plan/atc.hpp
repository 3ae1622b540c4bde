// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "spimag/diff/tensor.hpp"
#include "spimag/wm/world_model.hpp"

namespace spimag::plan {

using diff::Tensor;

struct ClusterSet {
  std::vector<std::size_t> assignment;  // cluster id per token
  Tensor centroids;                     // [C x D] member means
  std::vector<std::size_t> sizes;

  std::size_t count() const noexcept { return sizes.size(); }
};

inline constexpr std::size_t kMaxLloydIterations = 20;

// Without an anchor: average-linkage agglomerative clustering under L2
// distance down to C clusters (closest pair merges first, ties to the
// lowest ids); cluster ids follow their smallest member. With an anchor:
// k-means started from the anchor centroids, at most 20 Lloyd iterations;
// a cluster left empty takes the token farthest from its centroid.
ClusterSet atc_cluster(const Tensor& tokens, std::size_t clusters, const ClusterSet* anchor = nullptr);

// Member closest to each centroid (ties to the lower index).
std::vector<std::size_t> medoids(const Tensor& tokens, const ClusterSet& set);

struct Assignment {
  std::vector<std::size_t> col_of_row;
  double cost = 0.0;
};

// Minimum-cost perfect matching on a square matrix, O(C^3). Throws
// NumericError on non-finite entries, ShapeError if not square.
Assignment hungarian_match(const Tensor& cost);

// Hungarian-matched, size-weighted squared distance between predicted
// cluster tokens and goal centroids:
//   sum over matched (i, j) of (pred_size_i + goal_size_j) / 2 * ||p_i - g_j||^2
// divided by the total token count.
double atc_objective(const Tensor& pred, std::span<const std::size_t> pred_sizes, const ClusterSet& goal);

}  // namespace spimag::plan
