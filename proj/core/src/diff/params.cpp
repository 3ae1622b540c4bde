// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/diff/params.hpp"

#include <algorithm>

#include "spimag/errors.hpp"

namespace spimag::diff {

void ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

Tensor& ParamSet::at(std::string_view name) {
  for (Entry& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Tensor& ParamSet::at(std::string_view name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

std::size_t ParamSet::total_elements() const noexcept {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const Entry& e : entries_) out.entries_.push_back({e.name, Tensor(e.value.shape())});
  return out;
}

}  // namespace spimag::diff
