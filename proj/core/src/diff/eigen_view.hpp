// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include "spimag/diff/tensor.hpp"
#include "spimag/errors.hpp"

namespace spimag::diff::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got " + t.shape_string());
  }
}

inline MatMap view(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }
inline ConstMatMap view(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }

}  // namespace spimag::diff::detail
