// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "spimag/diff/tensor.hpp"

namespace spimag::diff {

// Ordered collection of named tensors. Insertion order is the canonical
// order for optimizers and checkpoints.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  void add(std::string name, Tensor value);

  bool contains(std::string_view name) const noexcept;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t total_elements() const noexcept;

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  // Same names and shapes, zero-filled.
  ParamSet zeros_like() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<Entry> entries_;
};

using GradSet = ParamSet;

}  // namespace spimag::diff
