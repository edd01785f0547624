// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evlm/params.hpp"
#include "evlm/tensor.hpp"

namespace evlm {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  [[nodiscard]] const Tensor& value() const;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid reverse topological order and backward() visits
/// each node once. Single-threaded; distinct graphs share nothing.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  explicit Graph(const ParameterStore& store) : store_(&store) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf bound to a stored parameter. Repeated calls return the same node.
  Var param(ParamId id);

  [[nodiscard]] const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() target w.r.t. v (zeros if unreached).
  [[nodiscard]] Tensor grad(Var v) const;
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold a single value.
  void backward(Var loss);
  /// Adds parameter-leaf gradients into store.grad (+=).
  void accumulate_param_grads(ParameterStore& store) const;

  /// Appends an op node; throws NumericError if `value` is not finite.
  Var record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward);
  /// grad[id] += g. For use inside BackwardFn implementations.
  void accumulate(std::size_t id, const Tensor& g);

  [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(Tensor value, bool requires_grad);

  const ParameterStore* store_ = nullptr;
  std::vector<Node> nodes_;
  std::unordered_map<ParamId, std::size_t> param_nodes_;
};

// Differentiable operations. All operands must belong to the same graph.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a[m x n] + row[n] broadcast over rows.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a * s where s holds a single value.
Var scale_by(Var a, Var s);
/// Row i of a multiplied by g(i, column).
Var mul_col(Var a, Var g, std::size_t column);
Var tanh(Var a);
Var gelu(Var a);
/// Row-wise normalization with affine gamma/beta (each of extent n).
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Row-wise softmax over the allowed entries; disallowed entries are exactly 0.
/// Throws ContractError for a row with no allowed entry.
Var softmax_masked(Var scores, const BoolMatrix& mask);
/// Mean negative log-likelihood over rows with loss_mask true. Returns [1].
Var cross_entropy(Var logits, std::span<const int> targets, const std::vector<bool>& loss_mask);
/// Gathers rows of `table`; gradients scatter-add back.
Var embedding(Var table, std::span<const std::size_t> ids);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);
Var sum(Var a);

/// Non-differentiable helpers on plain tensors, shared by tests and oracles.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_masked(const Tensor& scores, const BoolMatrix& mask);

}  // namespace evlm
