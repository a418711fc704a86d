#pragma once

// Tape-based reverse-mode differentiation over dense matrices. Every op
// appends a node whose parents were appended earlier, so the node list is a
// topological order and backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "assg/matrix.hpp"

namespace assg {

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  /// Leaf whose gradient is tracked.
  Var parameter(Matrix value);
  /// Leaf excluded from differentiation.
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() loss; zero for nodes the loss never reached.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node. Throws if loss is not 1x1.
  void backward(Var loss);

  /// Used by op implementations.
  Var push(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient buffer of a parent; allocated as zeros on first use.
  Matrix& accumulator(std::size_t id);
  bool tracks(std::size_t id) const { return nodes_[id].requires_grad; }
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- value kernels (pure) -------------------------------------------------

/// out[:, t] = W * X[:, t] + b for every column t.
Matrix pointwise_affine(const Matrix& w, const Matrix& b, const Matrix& x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix relu(const Matrix& x);
/// Column-wise softmax with max subtraction.
Matrix softmax_columns(const Matrix& x);
Matrix log_softmax_columns(const Matrix& x);
/// Row-wise softmax (normalizes along the column axis).
Matrix softmax_rows(const Matrix& x);

// ---- differentiable ops ---------------------------------------------------

Var pointwise_affine(Graph& g, Var w, Var b, Var x);
Var matmul(Graph& g, Var a, Var b);
Var relu(Graph& g, Var x);
Var negate(Graph& g, Var x);
Var scale(Graph& g, Var x, double factor);
Var multiply(Graph& g, Var a, Var b);
/// Stacks `top` above `bottom`; both must have the same column count.
Var concat_rows(Graph& g, Var top, Var bottom);
Var transpose(Graph& g, Var x);
Var softmax_columns(Graph& g, Var x);
Var log_softmax_columns(Graph& g, Var x);
Var softmax_rows(Graph& g, Var x);
Var log_softmax_rows(Graph& g, Var x);
/// 1xN: sum over the rows of each column.
Var sum_rows(Graph& g, Var x);
/// Rx1: max over each row's entries. Ties route the gradient to the first maximum.
Var max_columns(Graph& g, Var x);
/// Rx1: mean over each row's entries.
Var mean_columns(Graph& g, Var x);
/// Zeroes every column t with drop[t] set. The mask is a constant.
Var mask_columns(Graph& g, Var x, const std::vector<bool>& drop);
/// 1x1: sum of weights .* x, weights constant and shaped like x.
Var weighted_sum(Graph& g, Var x, const Matrix& weights);
Var sum(Graph& g, Var x);

// ---- gradient checking ----------------------------------------------------

/// Builds a scalar loss from parameter handles.
using GraphFn = std::function<Var(Graph&, std::span<const Var>)>;

/// Evaluates f once with backward for analytic gradients and then 2 forward
/// passes per coordinate for central differences. Returns
/// max |g_analytic - g_fd| / max(1, |g_fd|) over all coordinates.
double finite_diff_check(const GraphFn& f, const std::vector<Matrix>& params,
                         double h = 1e-3);

}  // namespace assg
