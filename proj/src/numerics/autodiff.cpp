#include "assg/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace assg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMut = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

MapConst view(const Matrix& m) {
  return MapConst(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

MapMut view(Matrix& m) {
  return MapMut(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

void check_scalar(const Matrix& m, const char* what) {
  if (m.rows() != 1 || m.cols() != 1) {
    throw DimensionError(std::string(what) + ": expected a 1x1 value, got " + m.shape_string());
  }
}

// Column softmax into `out`; out may alias nothing.
void softmax_columns_into(const Matrix& x, Matrix& out) {
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t t = 0; t < cols; ++t) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rows; ++r) peak = std::max(peak, x(r, t));
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      out(r, t) = std::exp(x(r, t) - peak);
      total += out(r, t);
    }
    for (std::size_t r = 0; r < rows; ++r) out(r, t) /= total;
  }
}

}  // namespace

// ---- Graph ------------------------------------------------------------------

Var Graph::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::push(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [this](std::size_t p) { return nodes_[p].requires_grad; });
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Matrix& Graph::grad(Var v) const { return nodes_.at(v.id).grad; }

Matrix& Graph::accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw std::out_of_range("backward: unknown node");
  check_scalar(nodes_[loss.id].value, "backward");
  for (auto& n : nodes_) n.grad = Matrix();
  nodes_[loss.id].grad = Matrix(1, 1, 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.requires_grad && n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  }
}

// ---- value kernels ----------------------------------------------------------

Matrix pointwise_affine(const Matrix& w, const Matrix& b, const Matrix& x) {
  if (w.cols() != x.rows() || b.rows() != w.rows() || b.cols() != 1) {
    throw DimensionError("pointwise_affine: W " + w.shape_string() + ", b " + b.shape_string() +
                         ", X " + x.shape_string());
  }
  Matrix out(w.rows(), x.cols());
  auto o = view(out);
  o.noalias() = view(w) * view(x);
  o.colwise() += view(b).col(0);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix softmax_columns(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  softmax_columns_into(x, out);
  return out;
}

Matrix log_softmax_columns(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.cols(); ++t) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < x.rows(); ++r) peak = std::max(peak, x(r, t));
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) total += std::exp(x(r, t) - peak);
    const double lse = peak + std::log(total);
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, t) = x(r, t) - lse;
  }
  return out;
}

Matrix softmax_rows(const Matrix& x) { return softmax_columns(x.transposed()).transposed(); }

// ---- differentiable ops -----------------------------------------------------

Var pointwise_affine(Graph& g, Var w, Var b, Var x) {
  Matrix out = pointwise_affine(g.value(w), g.value(b), g.value(x));
  return g.push(std::move(out), {w.id, b.id, x.id}, [](Graph& gr, std::size_t self) {
    const auto& ps = gr.parents(self);
    const auto up = view(gr.grad_of(self));
    if (gr.tracks(ps[0])) view(gr.accumulator(ps[0])).noalias() += up * view(gr.value_of(ps[2])).transpose();
    if (gr.tracks(ps[1])) view(gr.accumulator(ps[1])).col(0) += up.rowwise().sum();
    if (gr.tracks(ps[2])) view(gr.accumulator(ps[2])).noalias() += view(gr.value_of(ps[0])).transpose() * up;
  });
}

Var matmul(Graph& g, Var a, Var b) {
  Matrix out = matmul(g.value(a), g.value(b));
  return g.push(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
    const auto& ps = gr.parents(self);
    const auto up = view(gr.grad_of(self));
    if (gr.tracks(ps[0])) view(gr.accumulator(ps[0])).noalias() += up * view(gr.value_of(ps[1])).transpose();
    if (gr.tracks(ps[1])) view(gr.accumulator(ps[1])).noalias() += view(gr.value_of(ps[0])).transpose() * up;
  });
}

Var relu(Graph& g, Var x) {
  return g.push(relu(g.value(x)), {x.id}, [](Graph& gr, std::size_t self) {
    const std::size_t p = gr.parents(self)[0];
    const auto in = gr.value_of(p).data();
    const auto up = gr.grad_of(self).data();
    auto acc = gr.accumulator(p).data();
    for (std::size_t i = 0; i < acc.size(); ++i)
      if (in[i] > 0.0) acc[i] += up[i];
  });
}

Var negate(Graph& g, Var x) { return scale(g, x, -1.0); }

Var scale(Graph& g, Var x, double factor) {
  Matrix out = g.value(x);
  for (double& v : out.data()) v *= factor;
  return g.push(std::move(out), {x.id}, [factor](Graph& gr, std::size_t self) {
    const auto up = gr.grad_of(self).data();
    auto acc = gr.accumulator(gr.parents(self)[0]).data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += factor * up[i];
  });
}

Var multiply(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "multiply");
  Matrix out = g.value(a);
  const auto bv = g.value(b).data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] *= bv[i];
  return g.push(std::move(out), {a.id, b.id}, [](Graph& gr, std::size_t self) {
    const auto& ps = gr.parents(self);
    const auto up = gr.grad_of(self).data();
    for (int side = 0; side < 2; ++side) {
      if (!gr.tracks(ps[side])) continue;
      const auto other = gr.value_of(ps[1 - side]).data();
      auto acc = gr.accumulator(ps[side]).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += up[i] * other[i];
    }
  });
}

Var concat_rows(Graph& g, Var top, Var bottom) {
  const Matrix& a = g.value(top);
  const Matrix& b = g.value(bottom);
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: " + a.shape_string() + " over " + b.shape_string());
  }
  Matrix out(a.rows() + b.rows(), a.cols());
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return g.push(std::move(out), {top.id, bottom.id}, [](Graph& gr, std::size_t self) {
    const auto& ps = gr.parents(self);
    const auto up = gr.grad_of(self).data();
    const std::size_t split = gr.value_of(ps[0]).size();
    if (gr.tracks(ps[0])) {
      auto acc = gr.accumulator(ps[0]).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += up[i];
    }
    if (gr.tracks(ps[1])) {
      auto acc = gr.accumulator(ps[1]).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += up[split + i];
    }
  });
}

Var transpose(Graph& g, Var x) {
  return g.push(g.value(x).transposed(), {x.id}, [](Graph& gr, std::size_t self) {
    const std::size_t p = gr.parents(self)[0];
    view(gr.accumulator(p)) += view(gr.grad_of(self)).transpose();
  });
}

Var softmax_columns(Graph& g, Var x) {
  return g.push(softmax_columns(g.value(x)), {x.id}, [](Graph& gr, std::size_t self) {
    const std::size_t p = gr.parents(self)[0];
    const Matrix& y = gr.value_of(self);
    const Matrix& up = gr.grad_of(self);
    Matrix& acc = gr.accumulator(p);
    for (std::size_t t = 0; t < y.cols(); ++t) {
      double inner = 0.0;
      for (std::size_t r = 0; r < y.rows(); ++r) inner += up(r, t) * y(r, t);
      for (std::size_t r = 0; r < y.rows(); ++r) acc(r, t) += y(r, t) * (up(r, t) - inner);
    }
  });
}

Var log_softmax_columns(Graph& g, Var x) {
  return g.push(log_softmax_columns(g.value(x)), {x.id}, [](Graph& gr, std::size_t self) {
    const std::size_t p = gr.parents(self)[0];
    const Matrix& y = gr.value_of(self);
    const Matrix& up = gr.grad_of(self);
    Matrix& acc = gr.accumulator(p);
    for (std::size_t t = 0; t < y.cols(); ++t) {
      double total = 0.0;
      for (std::size_t r = 0; r < y.rows(); ++r) total += up(r, t);
      for (std::size_t r = 0; r < y.rows(); ++r) acc(r, t) += up(r, t) - std::exp(y(r, t)) * total;
    }
  });
}

Var softmax_rows(Graph& g, Var x) {
  return transpose(g, softmax_columns(g, transpose(g, x)));
}

Var log_softmax_rows(Graph& g, Var x) {
  return transpose(g, log_softmax_columns(g, transpose(g, x)));
}

Var sum_rows(Graph& g, Var x) {
  const Matrix& in = g.value(x);
  Matrix out(1, in.cols());
  view(out).row(0) = view(in).colwise().sum();
  return g.push(std::move(out), {x.id}, [](Graph& gr, std::size_t self) {
    const std::size_t p = gr.parents(self)[0];
    view(gr.accumulator(p)).rowwise() += view(gr.grad_of(self)).row(0);
  });
}

Var max_columns(Graph& g, Var x) {
  const Matrix& in = g.value(x);
  if (in.cols() == 0) throw DimensionError("max_columns: no columns");
  Matrix out(in.rows(), 1);
  std::vector<std::size_t> arg(in.rows(), 0);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    for (std::size_t t = 1; t < in.cols(); ++t)
      if (in(r, t) > in(r, arg[r])) arg[r] = t;
    out(r, 0) = in(r, arg[r]);
  }
  return g.push(std::move(out), {x.id}, [arg = std::move(arg)](Graph& gr, std::size_t self) {
    Matrix& acc = gr.accumulator(gr.parents(self)[0]);
    const Matrix& up = gr.grad_of(self);
    for (std::size_t r = 0; r < arg.size(); ++r) acc(r, arg[r]) += up(r, 0);
  });
}

Var mean_columns(Graph& g, Var x) {
  const Matrix& in = g.value(x);
  if (in.cols() == 0) throw DimensionError("mean_columns: no columns");
  Matrix out(in.rows(), 1);
  view(out).col(0) = view(in).rowwise().mean();
  return g.push(std::move(out), {x.id}, [](Graph& gr, std::size_t self) {
    Matrix& acc = gr.accumulator(gr.parents(self)[0]);
    const double inv = 1.0 / static_cast<double>(acc.cols());
    view(acc).colwise() += inv * view(gr.grad_of(self)).col(0);
  });
}

Var mask_columns(Graph& g, Var x, const std::vector<bool>& drop) {
  const Matrix& in = g.value(x);
  if (drop.size() != in.cols()) {
    throw DimensionError("mask_columns: mask length " + std::to_string(drop.size()) +
                         " for " + in.shape_string());
  }
  Matrix out = in;
  std::vector<bool> mask = drop;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t t = 0; t < out.cols(); ++t)
      if (mask[t]) out(r, t) = 0.0;
  return g.push(std::move(out), {x.id}, [mask = std::move(mask)](Graph& gr, std::size_t self) {
    Matrix& acc = gr.accumulator(gr.parents(self)[0]);
    const Matrix& up = gr.grad_of(self);
    for (std::size_t r = 0; r < acc.rows(); ++r)
      for (std::size_t t = 0; t < acc.cols(); ++t)
        if (!mask[t]) acc(r, t) += up(r, t);
  });
}

Var weighted_sum(Graph& g, Var x, const Matrix& weights) {
  require_same_shape(g.value(x), weights, "weighted_sum");
  double total = 0.0;
  const auto xv = g.value(x).data();
  const auto wv = weights.data();
  for (std::size_t i = 0; i < xv.size(); ++i) total += wv[i] * xv[i];
  return g.push(Matrix(1, 1, total), {x.id}, [weights](Graph& gr, std::size_t self) {
    const double up = gr.grad_of(self)(0, 0);
    auto acc = gr.accumulator(gr.parents(self)[0]).data();
    const auto wv = weights.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += up * wv[i];
  });
}

Var sum(Graph& g, Var x) {
  double total = 0.0;
  for (double v : g.value(x).data()) total += v;
  return g.push(Matrix(1, 1, total), {x.id}, [](Graph& gr, std::size_t self) {
    const double up = gr.grad_of(self)(0, 0);
    for (double& a : gr.accumulator(gr.parents(self)[0]).data()) a += up;
  });
}

// ---- gradient checking ------------------------------------------------------

double finite_diff_check(const GraphFn& f, const std::vector<Matrix>& params, double h) {
  auto evaluate = [&](const std::vector<Matrix>& ps, std::vector<Matrix>* grads) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(ps.size());
    for (const auto& p : ps) vars.push_back(g.parameter(p));
    const Var loss = f(g, vars);
    check_scalar(g.value(loss), "finite_diff_check");
    if (grads) {
      g.backward(loss);
      for (const Var v : vars) grads->push_back(g.grad(v));
    }
    return g.value(loss)(0, 0);
  };

  std::vector<Matrix> analytic;
  evaluate(params, &analytic);

  double worst = 0.0;
  std::vector<Matrix> probe = params;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    auto coords = probe[k].data();
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double saved = coords[i];
      coords[i] = saved + h;
      const double up = evaluate(probe, nullptr);
      coords[i] = saved - h;
      const double down = evaluate(probe, nullptr);
      coords[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[k].data()[i] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace assg
