// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/diff/graph.hpp"

#include <string>

#include "spimag/errors.hpp"

namespace spimag::diff {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kScale: return "scale";
    case OpKind::kLayerNorm: return "layernorm";
    case OpKind::kGelu: return "gelu";
    case OpKind::kAttention: return "attention";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kDropout: return "dropout";
    case OpKind::kMseRows: return "mse_rows";
    case OpKind::kSum: return "sum";
  }
  return "unknown";
}

NodeId Graph::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::variable(Tensor value) {
  NodeId id = constant(std::move(value));
  nodes_[id.index].requires_grad = record_grad_;
  return id;
}

NodeId Graph::push(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op_name(kind));
  }
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  if (record_grad_) {
    for (NodeId in : inputs) n.requires_grad = n.requires_grad || nodes_[in.index].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_[id.index];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Graph::grad(NodeId id) { return grad_buffer(id); }

void Graph::backward(NodeId root) {
  const Tensor& rv = nodes_[root.index].value;
  if (rv.size() != 1) throw ShapeError("backward root must be scalar, got " + rv.shape_string());
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(root)[0] = 1.0;
  last_visits_ = 0;
  for (std::size_t i = root.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, NodeId{static_cast<std::uint32_t>(i)});
    ++last_visits_;
    if (!nodes_[i].grad.all_finite()) {
      throw NumericError(std::string("non-finite gradient at ") + op_name(nodes_[i].kind));
    }
  }
}

}  // namespace spimag::diff
