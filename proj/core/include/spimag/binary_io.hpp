// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

namespace spimag::io {

// Little-endian primitives used by the tensor container and dataset files.
void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_f64s(std::ostream& out, std::span<const double> values);
void read_f64s(std::istream& in, std::span<double> values);

// Magic (8 bytes) + u64 header length + header text.
void write_preamble(std::ostream& out, std::string_view magic, const std::string& header);
std::string read_preamble(std::istream& in, std::string_view magic);

// 64-bit FNV-1a, stable across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace spimag::io
