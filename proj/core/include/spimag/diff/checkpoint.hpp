// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include <json.hpp>

#include "spimag/diff/params.hpp"

namespace spimag::diff {

// Tensor container layout:
//   "SPIMAGT1"                    8-byte magic
//   u64 (little-endian)           header length in bytes
//   header                        UTF-8 JSON, see below
//   payload                       float64 little-endian, tensors back to back
//
// Header fields: format ("spimag.tensors"), version (1), dtype ("float64"),
// byte_order ("little"), tensors [{name, shape, offset, nbytes}] with
// offsets relative to the payload start, and a free-form metadata object.
inline constexpr int kCheckpointVersion = 1;

void save_tensors(const std::filesystem::path& path, const ParamSet& params,
                  const nlohmann::json& metadata = nlohmann::json::object());

ParamSet load_tensors(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace spimag::diff
