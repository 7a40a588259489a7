/*
 * Copyright 2026 The rgcl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgcl/graph.hpp"
#include "rgcl/types.hpp"

namespace rgcl::diff {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
};

inline constexpr double kNormFloor = 1e-12;

/// Numerically stable ln(sigmoid(x)), via the softplus identity.
inline double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Row-wise log-sum-exp with max subtraction.
inline Vector logsumexp_rows(const Matrix& x) {
  Vector out(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out(r) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  return out;
}

/// Records a fixed set of matrix primitives and replays their closed-form adjoints in reverse.
///
/// Every primitive appends exactly one node, so record order is a topological order and
/// backward() is a single reverse sweep. Values are dense row-major matrices; scalars are 1x1
/// and per-row reductions are n x 1.
class Tape {
 public:
  Var leaf(Matrix value, bool requires_grad = true) { return push(std::move(value), requires_grad, true, nullptr); }
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& value(Var v) const { return node(v).value; }
  double scalar(Var v) const {
    const Matrix& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("tape value is not a scalar");
    return m(0, 0);
  }
  std::size_t size() const { return nodes_.size(); }

  Var propagate(const graph::NormalizedAdjacency& adj, Var x) {
    Matrix out = graph::propagate(adj, value(x));
    return push(std::move(out), needs(x), false, [x, &adj](Tape& t, std::size_t self) {
      t.accumulate(x, graph::propagate(adj, t.nodes_[self].grad));
    });
  }

  Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    return push(value(a) + value(b), needs(a) || needs(b), false, [a, b](Tape& t, std::size_t self) {
      t.accumulate(a, t.nodes_[self].grad);
      t.accumulate(b, t.nodes_[self].grad);
    });
  }

  Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    return push(value(a) - value(b), needs(a) || needs(b), false, [a, b](Tape& t, std::size_t self) {
      t.accumulate(a, t.nodes_[self].grad);
      t.accumulate(b, -t.nodes_[self].grad);
    });
  }

  Var scale(Var a, double c) {
    return push(c * value(a), needs(a), false, [a, c](Tape& t, std::size_t self) {
      t.accumulate(a, c * t.nodes_[self].grad);
    });
  }

  Var gather_rows(Var x, std::vector<Index> rows) {
    const Matrix& src = value(x);
    Matrix out(static_cast<Index>(rows.size()), src.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k] < 0 || rows[k] >= src.rows()) throw std::out_of_range("gather_rows: row index out of range");
      out.row(static_cast<Index>(k)) = src.row(rows[k]);
    }
    return push(std::move(out), needs(x), false, [x, rows = std::move(rows)](Tape& t, std::size_t self) {
      Node& in = t.nodes_[x.id];
      if (!in.requires_grad) return;
      const Matrix& g = t.nodes_[self].grad;
      for (std::size_t k = 0; k < rows.size(); ++k) in.grad.row(rows[k]) += g.row(static_cast<Index>(k));
    });
  }

  /// y_r = x_r / max(||x_r||, 1e-12).
  Var row_normalize(Var x) {
    const Matrix& src = value(x);
    Vector norms = src.rowwise().norm();
    Matrix out(src.rows(), src.cols());
    for (Index r = 0; r < src.rows(); ++r) out.row(r) = src.row(r) / std::max(norms(r), kNormFloor);
    return push(std::move(out), needs(x), false, [x, norms = std::move(norms)](Tape& t, std::size_t self) {
      const Matrix& y = t.nodes_[self].value;
      const Matrix& g = t.nodes_[self].grad;
      Matrix gx(g.rows(), g.cols());
      for (Index r = 0; r < g.rows(); ++r) {
        if (norms(r) > kNormFloor) {
          gx.row(r) = (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norms(r);
        } else {
          gx.row(r) = g.row(r) / kNormFloor;
        }
      }
      t.accumulate(x, gx);
    });
  }

  /// out_r = <a_r, b_r>, n x 1.
  Var rowwise_dot(Var a, Var b) {
    check_same_shape(a, b, "rowwise_dot");
    Matrix out = (value(a).array() * value(b).array()).rowwise().sum().matrix();
    return push(std::move(out), needs(a) || needs(b), false, [a, b](Tape& t, std::size_t self) {
      const Vector g = t.nodes_[self].grad.col(0);
      if (t.needs(a)) t.accumulate(a, g.asDiagonal() * t.value(b));
      if (t.needs(b)) t.accumulate(b, g.asDiagonal() * t.value(a));
    });
  }

  /// out = a b^T (pairwise row inner products).
  Var matmul_nt(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) throw std::invalid_argument("matmul_nt: column mismatch");
    Matrix out = value(a) * value(b).transpose();
    return push(std::move(out), needs(a) || needs(b), false, [a, b](Tape& t, std::size_t self) {
      const Matrix& g = t.nodes_[self].grad;
      if (t.needs(a)) t.accumulate(a, g * t.value(b));
      if (t.needs(b)) t.accumulate(b, g.transpose() * t.value(a));
    });
  }

  /// out_r = log sum_j exp(x_rj), n x 1.
  Var logsumexp_rows(Var x) {
    Matrix out = diff::logsumexp_rows(value(x));
    return push(std::move(out), needs(x), false, [x](Tape& t, std::size_t self) {
      const Matrix& src = t.value(x);
      const Matrix& lse = t.nodes_[self].value;
      const Matrix& g = t.nodes_[self].grad;
      Matrix gx(src.rows(), src.cols());
      for (Index r = 0; r < src.rows(); ++r) gx.row(r) = g(r, 0) * (src.row(r).array() - lse(r, 0)).exp().matrix();
      t.accumulate(x, gx);
    });
  }

  /// Elementwise ln(sigmoid(x)).
  Var log_sigmoid(Var x) {
    Matrix out = value(x).unaryExpr([](double v) { return diff::log_sigmoid(v); });
    return push(std::move(out), needs(x), false, [x](Tape& t, std::size_t self) {
      const Matrix d = t.value(x).unaryExpr([](double v) { return diff::sigmoid(-v); });
      t.accumulate(x, (t.nodes_[self].grad.array() * d.array()).matrix());
    });
  }

  /// Sum of all entries, 1 x 1.
  Var sum(Var x) {
    Matrix out(1, 1);
    out(0, 0) = value(x).sum();
    return push(std::move(out), needs(x), false, [x](Tape& t, std::size_t self) {
      const Matrix& src = t.value(x);
      t.accumulate(x, Matrix::Constant(src.rows(), src.cols(), t.nodes_[self].grad(0, 0)));
    });
  }

  /// Reverse sweep from `out` seeded with `seed` (same shape as out's value).
  void backward(Var out, const Matrix& seed) {
    const Node& o = node(out);
    if (seed.rows() != o.value.rows() || seed.cols() != o.value.cols()) {
      throw std::invalid_argument("backward: seed shape does not match output");
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    if (!o.requires_grad) {
      backward_done_ = true;
      return;
    }
    nodes_[out.id].grad = seed;
    for (std::size_t k = out.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.requires_grad || !n.adjoint) continue;
      n.adjoint(*this, k);
    }
    backward_done_ = true;
  }

  void backward(Var scalar_out) { backward(scalar_out, Matrix::Ones(1, 1)); }

  /// Gradient of the last backward() output with respect to a recorded leaf.
  const Matrix& grad(Var leaf) const {
    const Node& n = node(leaf);
    if (!n.is_leaf || !n.requires_grad) {
      throw std::invalid_argument("grad: node " + std::to_string(leaf.id) + " is not a differentiable leaf");
    }
    if (!backward_done_) throw std::logic_error("grad: backward() has not run");
    return n.grad;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::function<void(Tape&, std::size_t)> adjoint;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw std::invalid_argument("tape: unrecorded variable");
    return nodes_[v.id];
  }
  bool needs(Var v) const { return node(v).requires_grad; }

  void check_same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }
  }

  Var push(Matrix value, bool requires_grad, bool is_leaf, std::function<void(Tape&, std::size_t)> adjoint) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, is_leaf, std::move(adjoint)});
    backward_done_ = false;
    return Var{nodes_.size() - 1};
  }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id];
    if (n.requires_grad) n.grad += g;
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// max_j |analytic_j - central_j| / max(1, |central_j|), central differences with step h.
template <typename F>
double grad_check(F&& f, const Matrix& analytic, const Matrix& point, double h) {
  if (analytic.rows() != point.rows() || analytic.cols() != point.cols()) {
    throw std::invalid_argument("grad_check: gradient shape does not match point");
  }
  Matrix probe = point;
  double worst = 0.0;
  for (Index r = 0; r < point.rows(); ++r) {
    for (Index c = 0; c < point.cols(); ++c) {
      const double saved = probe(r, c);
      probe(r, c) = saved + h;
      const double up = f(static_cast<const Matrix&>(probe));
      probe(r, c) = saved - h;
      const double down = f(static_cast<const Matrix&>(probe));
      probe(r, c) = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericalError("grad_check: non-finite function value");
      const double central = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic(r, c) - central) / std::max(1.0, std::abs(central)));
    }
  }
  return worst;
}

}  // namespace rgcl::diff
