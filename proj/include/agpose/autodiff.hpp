// Copyright 2026 The AGPose Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Each node stores its
// value and a closure that pushes the node's gradient to its parents.
// backward() replays the closures in reverse order. Nodes that do not depend
// on a leaf created with requires_grad carry no gradient.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace agpose::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix<T>& value() const { return tape->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, {}); }
  Var<T> leaf(Matrix<T> value) { return push(std::move(value), true, {}); }

  const Matrix<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }

  /// Gradient of the last backward() output w.r.t. v; zeros if v received none.
  Matrix<T> grad(Var<T> v) const {
    const auto& n = nodes_[v.id];
    if (n.grad.size() == 0) return Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Seeds d(output)/d(output) = 1 for a 1×1 output and propagates.
  void backward(Var<T> output) {
    if (value(output).size() != 1) throw std::invalid_argument("backward needs a scalar output");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[output.id].grad = Matrix<T>::Ones(1, 1);
    for (int i = output.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Used by the operation implementations below.
  using Backward = std::function<void(const Matrix<T>&)>;

  Var<T> push(Matrix<T> value, bool requires_grad, Backward backward) {
    nodes_.push_back({std::move(value), Matrix<T>(), requires_grad, std::move(backward)});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  template <typename Expr>
  void accumulate(Var<T> v, const Expr& g) {
    auto& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  Matrix<T>& grad_slot(Var<T> v) {
    auto& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace detail {
template <typename T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  for (auto v : vs) {
    if (v.tape->requires_grad(v)) return true;
  }
  return false;
}

template <typename T>
Var<T> make(Tape<T>& tape, std::type_identity_t<Matrix<T>> value, bool needs_grad,
             typename Tape<T>::Backward backward) {
  if (!needs_grad) return tape.push(std::move(value), false, {});
  return tape.push(std::move(value), true, std::move(backward));
}

inline void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix<T> out = a.value() * b.value();
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

/// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Matrix<T> out = a.value() * b.value().transpose();
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b));
    if (tp.requires_grad(b)) tp.accumulate(b, g.transpose() * tp.value(a));
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value().transpose();
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a](const Matrix<T>& g) { tp.accumulate(a, g.transpose()); });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix<T> out = a.value() + b.value();
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Matrix<T> out = a.value() - b.value();
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, -g);
  });
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }

/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix<T> out = a.value().cwiseProduct(b.value());
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value() * s;
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a, s](const Matrix<T>& g) { tp.accumulate(a, g * s); });
}

/// s (1×1) times a.
template <typename T>
Var<T> scale_by(Var<T> a, Var<T> s) {
  auto& tp = *a.tape;
  detail::check(s.value().size() == 1, "scale_by: scalar expected");
  Matrix<T> out = a.value() * s.value()(0, 0);
  return detail::make(tp, std::move(out), detail::any_grad({a, s}), [&tp, a, s](const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(s)(0, 0));
    if (tp.requires_grad(s)) {
      tp.accumulate(s, Matrix<T>::Constant(1, 1, g.cwiseProduct(tp.value(a)).sum()));
    }
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T c) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value().array() + c;
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a](const Matrix<T>& g) { tp.accumulate(a, g); });
}

/// a + broadcast of the 1×C row b to every row.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(b.rows() == 1 && b.cols() == a.cols(), "add_row: shape mismatch");
  Matrix<T> out = a.value().rowwise() + b.value().row(0);
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, g.colwise().sum());
  });
}

/// a ⊙ broadcast of the 1×C row r.
template <typename T>
Var<T> mul_row(Var<T> a, Var<T> r) {
  auto& tp = *a.tape;
  detail::check(r.rows() == 1 && r.cols() == a.cols(), "mul_row: shape mismatch");
  Matrix<T> out = a.value().array().rowwise() * r.value().row(0).array();
  return detail::make(tp, std::move(out), detail::any_grad({a, r}), [&tp, a, r](const Matrix<T>& g) {
    if (tp.requires_grad(a)) {
      tp.accumulate(a, (g.array().rowwise() * tp.value(r).row(0).array()).matrix());
    }
    if (tp.requires_grad(r)) tp.accumulate(r, g.cwiseProduct(tp.value(a)).colwise().sum());
  });
}

/// a ⊙ broadcast of the N×1 column c.
template <typename T>
Var<T> mul_col(Var<T> a, Var<T> c) {
  auto& tp = *a.tape;
  detail::check(c.cols() == 1 && c.rows() == a.rows(), "mul_col: shape mismatch");
  Matrix<T> out = a.value().array().colwise() * c.value().col(0).array();
  return detail::make(tp, std::move(out), detail::any_grad({a, c}), [&tp, a, c](const Matrix<T>& g) {
    if (tp.requires_grad(a)) {
      tp.accumulate(a, (g.array().colwise() * tp.value(c).col(0).array()).matrix());
    }
    if (tp.requires_grad(c)) tp.accumulate(c, g.cwiseProduct(tp.value(a)).rowwise().sum());
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value().cwiseMax(T(0));
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a](const Matrix<T>& g) {
    tp.accumulate(a, (tp.value(a).array() > T(0)).select(g, T(0)).matrix());
  });
}

template <typename T>
Var<T> abs(Var<T> a) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value().cwiseAbs();
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a](const Matrix<T>& g) {
    tp.accumulate(a, g.cwiseProduct(tp.value(a).unaryExpr([](T x) {
      return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
    })));
  });
}

template <typename T>
Var<T> exp(Var<T> a) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value().array().exp();
  auto id = tp.size();
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a, id](const Matrix<T>& g) {
                        const Var<T> self{&tp, static_cast<int>(id)};
                        tp.accumulate(a, g.cwiseProduct(tp.value(self)));
                      });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  auto& tp = *a.tape;
  Matrix<T> out(a.rows(), a.cols());
  const auto& x = a.value();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  const auto id = tp.size();
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a, id](const Matrix<T>& g) {
    const auto& y = tp.value(Var<T>{&tp, static_cast<int>(id)});
    const Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    tp.accumulate(a, (y.array() * (g.array().colwise() - dot.array())).matrix());
  });
}

/// Zero-mean, unit-variance normalization of each row (no affine part).
template <typename T>
Var<T> layer_norm_rows(Var<T> a, T eps = T(1e-5)) {
  auto& tp = *a.tape;
  const auto& x = a.value();
  Matrix<T> out(x.rows(), x.cols());
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(x.rows());
  const T c = static_cast<T>(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T mu = x.row(i).mean();
    const T var = (x.row(i).array() - mu).square().sum() / c;
    inv_std(i) = T(1) / std::sqrt(var + eps);
    out.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  const auto id = tp.size();
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a, id, inv_std, c](const Matrix<T>& g) {
                        const auto& y = tp.value(Var<T>{&tp, static_cast<int>(id)});
                        Matrix<T> dx(y.rows(), y.cols());
                        for (Eigen::Index i = 0; i < y.rows(); ++i) {
                          const T mg = g.row(i).sum() / c;
                          const T mgy = g.row(i).dot(y.row(i)) / c;
                          dx.row(i) = inv_std(i) * (g.row(i).array() - mg - y.row(i).array() * mgy);
                        }
                        tp.accumulate(a, dx);
                      });
}

/// x / sqrt(|x|^2 + eps) per row.
template <typename T>
Var<T> l2_normalize_rows(Var<T> a, T eps = T(1e-12)) {
  auto& tp = *a.tape;
  const auto& x = a.value();
  Eigen::Matrix<T, Eigen::Dynamic, 1> norms = (x.rowwise().squaredNorm().array() + eps).sqrt();
  Matrix<T> out = x.array().colwise() / norms.array();
  const auto id = tp.size();
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a, id, norms](const Matrix<T>& g) {
    const auto& y = tp.value(Var<T>{&tp, static_cast<int>(id)});
    const Eigen::Matrix<T, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    Matrix<T> dx = ((g - (y.array().colwise() * dot.array()).matrix()).array().colwise() /
                    norms.array()).matrix();
    tp.accumulate(a, dx);
  });
}

/// Euclidean norm of each row, N×1. The gradient at a zero row is zero.
template <typename T>
Var<T> row_norms(Var<T> a) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value().rowwise().norm();
  const auto id = tp.size();
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a, id](const Matrix<T>& g) {
    const auto& n = tp.value(Var<T>{&tp, static_cast<int>(id)});
    const auto& x = tp.value(a);
    Matrix<T> dx(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      dx.row(i) = n(i, 0) > T(0) ? (x.row(i) * (g(i, 0) / n(i, 0))).eval()
                                 : Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(x.cols()).eval();
    }
    tp.accumulate(a, dx);
  });
}

/// Frobenius norm, 1×1. Zero gradient at the origin.
template <typename T>
Var<T> frobenius_norm(Var<T> a) {
  auto& tp = *a.tape;
  const T n = a.value().norm();
  return detail::make(tp, Matrix<T>::Constant(1, 1, n), detail::any_grad({a}),
                      [&tp, a, n](const Matrix<T>& g) {
                        if (n > T(0)) tp.accumulate(a, tp.value(a) * (g(0, 0) / n));
                      });
}

/// Row-wise dot product, N×1.
template <typename T>
Var<T> row_dot(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(a.rows() == b.rows() && a.cols() == b.cols(), "row_dot: shape mismatch");
  Matrix<T> out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    if (tp.requires_grad(a)) {
      tp.accumulate(a, (tp.value(b).array().colwise() * g.col(0).array()).matrix());
    }
    if (tp.requires_grad(b)) {
      tp.accumulate(b, (tp.value(a).array().colwise() * g.col(0).array()).matrix());
    }
  });
}

/// Row-wise cross product of N×3 inputs.
template <typename T>
Var<T> cross_rows(Var<T> a, Var<T> b) {
  auto& tp = *a.tape;
  detail::check(a.cols() == 3 && b.cols() == 3 && a.rows() == b.rows(), "cross_rows: N×3 expected");
  using V3 = Eigen::Matrix<T, 3, 1>;
  Matrix<T> out(a.rows(), 3);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const V3 x = a.value().row(i).transpose();
    const V3 y = b.value().row(i).transpose();
    out.row(i) = x.cross(y).transpose();
  }
  return detail::make(tp, std::move(out), detail::any_grad({a, b}), [&tp, a, b](const Matrix<T>& g) {
    Matrix<T> da(g.rows(), 3), db(g.rows(), 3);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const V3 x = tp.value(a).row(i).transpose();
      const V3 y = tp.value(b).row(i).transpose();
      const V3 gi = g.row(i).transpose();
      da.row(i) = y.cross(gi).transpose();
      db.row(i) = gi.cross(x).transpose();
    }
    tp.accumulate(a, da);
    tp.accumulate(b, db);
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  detail::check(!parts.empty(), "concat_cols: no inputs");
  auto& tp = *parts[0].tape;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (auto p : parts) {
    detail::check(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || tp.requires_grad(p);
  }
  Matrix<T> out(rows, cols);
  Eigen::Index off = 0;
  for (auto p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Var<T>> ps(parts.begin(), parts.end());
  return detail::make(tp, std::move(out), needs, [&tp, ps](const Matrix<T>& g) {
    Eigen::Index o = 0;
    for (auto p : ps) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(o, p.cols()));
      o += p.cols();
    }
  });
}

template <typename T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
  return concat_cols(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  detail::check(!parts.empty(), "concat_rows: no inputs");
  auto& tp = *parts[0].tape;
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool needs = false;
  for (auto p : parts) {
    detail::check(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
    needs = needs || tp.requires_grad(p);
  }
  Matrix<T> out(rows, cols);
  Eigen::Index off = 0;
  for (auto p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  std::vector<Var<T>> ps(parts.begin(), parts.end());
  return detail::make(tp, std::move(out), needs, [&tp, ps](const Matrix<T>& g) {
    Eigen::Index o = 0;
    for (auto p : ps) {
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleRows(o, p.rows()));
      o += p.rows();
    }
  });
}

template <typename T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
  return concat_rows(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <typename T>
Var<T> slice_cols(Var<T> a, Eigen::Index start, Eigen::Index count) {
  auto& tp = *a.tape;
  detail::check(start >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix<T> out = a.value().middleCols(start, count);
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a, start, count](const Matrix<T>& g) {
                        tp.grad_slot(a).middleCols(start, count) += g;
                      });
}

template <typename T>
Var<T> slice_rows(Var<T> a, Eigen::Index start, Eigen::Index count) {
  auto& tp = *a.tape;
  detail::check(start >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Matrix<T> out = a.value().middleRows(start, count);
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a, start, count](const Matrix<T>& g) {
                        tp.grad_slot(a).middleRows(start, count) += g;
                      });
}

/// Row-major reshape.
template <typename T>
Var<T> reshape(Var<T> a, Eigen::Index rows, Eigen::Index cols) {
  auto& tp = *a.tape;
  detail::check(rows * cols == a.value().size(), "reshape: size mismatch");
  Matrix<T> out = Eigen::Map<const Matrix<T>>(a.value().data(), rows, cols);
  const Eigen::Index r0 = a.rows();
  const Eigen::Index c0 = a.cols();
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a, r0, c0](const Matrix<T>& g) {
                        tp.accumulate(a, Eigen::Map<const Matrix<T>>(g.data(), r0, c0));
                      });
}

/// out[k] = a[index[k]]; gradients scatter-add back.
template <typename T>
Var<T> gather_rows(Var<T> a, std::vector<int> index) {
  auto& tp = *a.tape;
  Matrix<T> out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    detail::check(index[k] >= 0 && index[k] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(index[k]);
  }
  return detail::make(tp, std::move(out), detail::any_grad({a}),
                      [&tp, a, index = std::move(index)](const Matrix<T>& g) {
                        auto& ga = tp.grad_slot(a);
                        for (std::size_t k = 0; k < index.size(); ++k) {
                          ga.row(index[k]) += g.row(static_cast<Eigen::Index>(k));
                        }
                      });
}

/// Column-wise max over consecutive groups of `group` rows.
template <typename T>
Var<T> segment_max(Var<T> a, Eigen::Index group) {
  auto& tp = *a.tape;
  detail::check(group > 0 && a.rows() % group == 0, "segment_max: rows not divisible by group");
  const Eigen::Index n = a.rows() / group;
  const auto& x = a.value();
  Matrix<T> out(n, x.cols());
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = i * group;
      for (Eigen::Index r = i * group + 1; r < (i + 1) * group; ++r) {
        if (x(r, c) > x(best, c)) best = r;
      }
      out(i, c) = x(best, c);
      arg(i, c) = static_cast<int>(best);
    }
  }
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a, arg](const Matrix<T>& g) {
    auto& ga = tp.grad_slot(a);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) ga(arg(i, c), c) += g(i, c);
    }
  });
}

/// Mean over consecutive groups of `group` rows.
template <typename T>
Var<T> segment_mean(Var<T> a, Eigen::Index group) {
  auto& tp = *a.tape;
  detail::check(group > 0 && a.rows() % group == 0, "segment_mean: rows not divisible by group");
  const Eigen::Index n = a.rows() / group;
  const auto& x = a.value();
  Matrix<T> out(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = x.middleRows(i * group, group).colwise().mean();
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a, group](const Matrix<T>& g) {
    auto& ga = tp.grad_slot(a);
    const T inv = T(1) / static_cast<T>(group);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      ga.middleRows(i * group, group).rowwise() += g.row(i) * inv;
    }
  });
}

/// Weighted sum within groups: out[i] = sum_j w(i, j) * a[i * K + j], with
/// w of shape n×K and a of shape (n·K)×C.
template <typename T>
Var<T> segment_weighted_sum(Var<T> w, Var<T> a) {
  auto& tp = *a.tape;
  const Eigen::Index n = w.rows();
  const Eigen::Index k = w.cols();
  detail::check(a.rows() == n * k, "segment_weighted_sum: shape mismatch");
  Matrix<T> out(n, a.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = w.value().row(i) * a.value().middleRows(i * k, k);
  }
  return detail::make(tp, std::move(out), detail::any_grad({w, a}),
                      [&tp, w, a, n, k](const Matrix<T>& g) {
                        if (tp.requires_grad(w)) {
                          Matrix<T> dw(n, k);
                          for (Eigen::Index i = 0; i < n; ++i) {
                            dw.row(i) = g.row(i) * tp.value(a).middleRows(i * k, k).transpose();
                          }
                          tp.accumulate(w, dw);
                        }
                        if (tp.requires_grad(a)) {
                          auto& ga = tp.grad_slot(a);
                          for (Eigen::Index i = 0; i < n; ++i) {
                            ga.middleRows(i * k, k) +=
                                tp.value(w).row(i).transpose() * g.row(i);
                          }
                        }
                      });
}

/// Column means, 1×C.
template <typename T>
Var<T> mean_rows(Var<T> a) {
  auto& tp = *a.tape;
  Matrix<T> out = a.value().colwise().mean();
  const T inv = T(1) / static_cast<T>(a.rows());
  return detail::make(tp, std::move(out), detail::any_grad({a}), [&tp, a, inv](const Matrix<T>& g) {
    tp.grad_slot(a).rowwise() += g.row(0) * inv;
  });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  auto& tp = *a.tape;
  return detail::make(tp, Matrix<T>::Constant(1, 1, a.value().sum()), detail::any_grad({a}),
                      [&tp, a](const Matrix<T>& g) {
                        tp.grad_slot(a).array() += g(0, 0);
                      });
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.value().size()));
}

/// Mean smooth-L1 between a and a constant target with transition delta.
template <typename T>
Var<T> smooth_l1_mean(Var<T> a, const Matrix<T>& target, T delta) {
  auto& tp = *a.tape;
  detail::check(a.rows() == target.rows() && a.cols() == target.cols(), "smooth_l1: shape mismatch");
  const Matrix<T> diff = a.value() - target;
  const T inv = T(1) / static_cast<T>(diff.size());
  const T value = diff.unaryExpr([delta](T d) {
                        const T ad = std::abs(d);
                        return ad < delta ? T(0.5) * d * d / delta : ad - T(0.5) * delta;
                      }).sum() * inv;
  return detail::make(tp, Matrix<T>::Constant(1, 1, value), detail::any_grad({a}),
                      [&tp, a, diff, delta, inv](const Matrix<T>& g) {
                        tp.accumulate(a, diff.unaryExpr([delta](T d) {
                                               return std::abs(d) < delta
                                                          ? d / delta
                                                          : (d > T(0) ? T(1) : T(-1));
                                             }) * (g(0, 0) * inv));
                      });
}

}  // namespace agpose::ad
