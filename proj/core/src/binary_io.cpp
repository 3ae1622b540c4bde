// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <vector>

#include "spimag/errors.hpp"

namespace spimag::io {

namespace {

constexpr std::size_t kChunk = 4096;

void check(std::ios& s, const char* what) {
  if (!s) throw IoError(std::string("stream failure while ") + what);
}

}  // namespace

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 8);
  check(out, "writing u64");
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  check(in, "reading u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64s(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    std::vector<char> buf;
    buf.reserve(kChunk * 8);
    for (double d : values) {
      const auto bits = std::bit_cast<std::uint64_t>(d);
      for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
      if (buf.size() >= kChunk * 8) {
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        buf.clear();
      }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  check(out, "writing f64 payload");
}

void read_f64s(std::istream& in, std::span<double> values) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  check(in, "reading f64 payload");
  if constexpr (std::endian::native != std::endian::little) {
    for (double& d : values) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &d, 8);
      std::uint64_t swapped = 0;
      for (int i = 0; i < 8; ++i) swapped |= ((bits >> (8 * i)) & 0xffu) << (8 * (7 - i));
      d = std::bit_cast<double>(swapped);
    }
  }
}

void write_preamble(std::ostream& out, std::string_view magic, const std::string& header) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  check(out, "writing header");
}

std::string read_preamble(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw IoError("bad magic: expected '" + std::string(magic) + "'");
  const std::uint64_t len = read_u64(in);
  if (len > (std::uint64_t{1} << 32)) throw IoError("header length implausible");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  check(in, "reading header");
  return header;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace spimag::io
