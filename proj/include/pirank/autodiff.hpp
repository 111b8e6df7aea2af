#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Graph is an append-only tape. Every operator evaluates eagerly, records
// its output together with a backward closure, and returns a Var handle.
// Graph::backward walks the tape in reverse from a scalar root. A Graph is
// single-threaded; independent Graphs may be driven from different threads.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "pirank/tensor.hpp"

namespace pirank {

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// What a backward closure sees. `grads[i]` is null when input i does not
/// require a gradient.
struct BackwardContext {
  const Tensor& grad_out;
  const Tensor& out;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// d(root)/d(v) for every node that requires a gradient.
class Gradients {
 public:
  /// Zero tensor for nodes the root does not depend on; throws for constants.
  const Tensor& operator[](Var v) const;

 private:
  friend class Graph;
  std::vector<Tensor> grads_;
  std::vector<bool> tracked_;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Differentiable input (model parameters, scores under test).
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);

  /// Appends an operator output. Inputs must belong to this graph.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Root must hold exactly one element.
  Gradients backward(Var root) const;

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  // deque keeps references to earlier values stable while the tape grows.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

// ---- operators --------------------------------------------------------------
// Elementwise ops accept equal shapes, or one single-element operand that is
// broadcast. No other broadcasting exists; align ranks with reshape.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// a + c elementwise.
Var shift(Var a, double c);
Var abs(Var a);
Var relu(Var a);
/// log(sigmoid(a)), stable for large |a|.
Var log_sigmoid(Var a);

Var matmul(Var a, Var b);
/// Batched matmul: (B, m, n) x (B, n, p) -> (B, m, p).
Var bmm(Var a, Var b);

/// Softmax over the last axis.
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

/// Sum of all elements, shape (1).
Var sum(Var a);
/// Sum along one axis; the axis is removed.
Var sum(Var a, std::size_t axis);

Var reshape(Var a, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Axis permutation: output axis i is input axis perm[i].
Var permute(Var a, const std::vector<std::size_t>& perm);
/// out[t] = flat(a)[indices[t]], shape (indices.size()).
Var gather(Var a, const std::vector<std::size_t>& indices);

/// Forward value `hard`, gradient passed to `relaxed` unchanged.
Var straight_through(Var relaxed, const Tensor& hard);

/// r[s,c] = sum_c' |y[s,c] - y[s,c']| over the last axis of y.
Var pairwise_abs_rowsum(Var y);
/// Unimodal sorting logits for each block of the last axis of y (shape
/// (..., n)): output (..., rows, n) with
/// z[l,c] = ((n + 1 - 2l) y_c - sum_c' |y_c - y_c'|) / tau for l = 1..rows.
Var neuralsort_logits(Var y, std::size_t rows, double tau);

}  // namespace pirank
