// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/diff/checkpoint.hpp"

#include <fstream>

#include "spimag/binary_io.hpp"
#include "spimag/errors.hpp"

namespace spimag::diff {

namespace {
constexpr std::string_view kMagic = "SPIMAGT1";
}

void save_tensors(const std::filesystem::path& path, const ParamSet& params, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format"] = "spimag.tensors";
  header["version"] = kCheckpointVersion;
  header["dtype"] = "float64";
  header["byte_order"] = "little";
  header["metadata"] = metadata;
  auto& list = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : params) {
    const std::uint64_t nbytes = e.value.size() * sizeof(double);
    list.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  io::write_preamble(out, kMagic, header.dump());
  for (const auto& e : params) io::write_f64s(out, e.value.values());
}

ParamSet load_tensors(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(io::read_preamble(in, kMagic));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint header in '" + path.string() + "': " + e.what());
  }
  if (header.value("version", 0) != kCheckpointVersion || header.value("dtype", "") != "float64") {
    throw IoError("unsupported checkpoint version or dtype in '" + path.string() + "'");
  }
  ParamSet params;
  for (const auto& t : header.at("tensors")) {
    Tensor value(t.at("shape").get<Shape>());
    if (t.at("nbytes").get<std::uint64_t>() != value.size() * sizeof(double)) {
      throw IoError("tensor '" + t.at("name").get<std::string>() + "' size disagrees with shape");
    }
    io::read_f64s(in, value.values());
    params.add(t.at("name").get<std::string>(), std::move(value));
  }
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  return params;
}

}  // namespace spimag::diff
