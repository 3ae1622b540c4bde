// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spimag/diff/tensor.hpp"

namespace spimag::diff {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kAddRow,
  kScale,
  kLayerNorm,
  kGelu,
  kAttention,
  kConcatCols,
  kGatherRows,
  kDropout,
  kMseRows,
  kSum,
};

const char* op_name(OpKind kind);

class Graph;

// Reads the gradient of `self` and accumulates into its inputs' gradients.
using BackwardFn = std::function<void(Graph&, NodeId self)>;

// Tape of operations in creation order, which is a topological order:
// every node's inputs were created before it.
//
// A graph built with record_grad = false stores values only; no backward
// closures are kept, so it doubles as the inference engine.
class Graph {
 public:
  explicit Graph(bool record_grad = true) : record_grad_(record_grad) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  NodeId constant(Tensor value);
  NodeId variable(Tensor value);

  const Tensor& value(NodeId id) const { return nodes_[id.index].value; }
  OpKind kind(NodeId id) const { return nodes_[id.index].kind; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_[id.index].inputs; }
  bool requires_grad(NodeId id) const { return nodes_[id.index].requires_grad; }
  bool recording() const noexcept { return record_grad_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient of the last backward() root with respect to `id`; zeros when
  // the node does not influence the root.
  const Tensor& grad(NodeId id);

  // Mutable gradient buffer, allocated on first use. For op implementations.
  Tensor& grad_buffer(NodeId id);

  // Reverse sweep from a scalar ([1x1]) root. Each node is visited once.
  void backward(NodeId root);

  // Number of backward closures executed by the last backward() call.
  std::size_t last_backward_visits() const noexcept { return last_visits_; }

  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);

 private:
  struct Node {
    OpKind kind = OpKind::kLeaf;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool record_grad_ = true;
  std::size_t last_visits_ = 0;
};

}  // namespace spimag::diff
