#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drl4route/errors.hpp"
#include "drl4route/numerics/parameter_store.hpp"

namespace drl4route::numerics {

class Tape;

// Handle to a matrix-valued node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

// Records matrix operations for reverse-mode differentiation. A tape built
// with record=false only evaluates values (no closures, no gradients).
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value) { return push(std::move(value), false); }

  Var constant_scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // Leaf bound to a stored parameter. Reused within one tape.
  Var param(ParameterStore& store, const std::string& name) {
    Parameter* p = &store.at(name);
    if (auto it = param_nodes_.find(p); it != param_nodes_.end()) return Var{this, it->second};
    Var v = push(p->value, record_);
    nodes_[v.id].param = p;
    param_nodes_.emplace(p, v.id);
    return v;
  }

  // New node; backward(self_id) reads its own grad and adds into inputs via grad_of().
  template <class Backward>
  Var op(Matrix value, std::span<const Var> inputs, Backward&& backward) {
    bool needs = false;
    if (record_) {
      for (const Var& in : inputs) needs = needs || nodes_[in.id].needs_grad;
    }
    Var out = push(std::move(value), needs);
    if (needs) nodes_[out.id].backward = std::forward<Backward>(backward);
    return out;
  }

  template <class Backward>
  Var op(Matrix value, std::initializer_list<Var> inputs, Backward&& backward) {
    return op(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::forward<Backward>(backward));
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Gradient slot of a node, allocated on first use.
  Matrix& grad_of(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }

  // Propagates d(loss)/d(node) and adds parameter gradients into their
  // Parameter::grad slots.
  void backward(Var loss) {
    if (loss.tape != this) throw InputError("loss belongs to another tape");
    if (nodes_[loss.id].value.size() != 1) throw InputError("loss is not scalar");
    if (!record_) throw InputError("tape was built without recording");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_of(loss.id)(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(i);
      if (n.param) n.param->grad += nodes_[i].grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(std::size_t)> backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Matrix value, bool needs) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.needs_grad = needs;
    return Var{this, nodes_.size() - 1};
  }

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline double Var::scalar() const {
  if (value().size() != 1) throw InputError("value is not scalar");
  return value()(0, 0);
}

// Zeroes grads, then backpropagates. With accumulate=true existing grads are kept.
inline void backprop(Var loss, ParameterStore& params, bool accumulate = false) {
  if (!accumulate) params.zero_grad();
  loss.tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Operations. Each captures node ids only; the tape owns all storage.

namespace detail {
inline void require(bool cond, const char* what) {
  if (!cond) throw InputError(std::string("shape mismatch: ") + what);
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::require(a.cols() == b.rows(), "matmul");
  Tape& t = *a.tape;
  Matrix v = a.value() * b.value();
  return t.op(std::move(v), {a, b}, [&t, a = a.id, b = b.id](std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.grad_of(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad_of(b).noalias() += t.value(a).transpose() * g;
  });
}

// a * b^T
inline Var matmul_nt(Var a, Var b) {
  detail::require(a.cols() == b.cols(), "matmul_nt");
  Tape& t = *a.tape;
  Matrix v = a.value() * b.value().transpose();
  return t.op(std::move(v), {a, b}, [&t, a = a.id, b = b.id](std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.grad_of(a).noalias() += g * t.value(b);
    if (t.needs_grad(b)) t.grad_of(b).noalias() += g.transpose() * t.value(a);
  });
}

inline Var add(Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  Tape& t = *a.tape;
  Matrix v = a.value() + b.value();
  return t.op(std::move(v), {a, b}, [&t, a = a.id, b = b.id](std::size_t self) {
    if (t.needs_grad(a)) t.grad_of(a) += t.grad(self);
    if (t.needs_grad(b)) t.grad_of(b) += t.grad(self);
  });
}

inline Var sub(Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  Tape& t = *a.tape;
  Matrix v = a.value() - b.value();
  return t.op(std::move(v), {a, b}, [&t, a = a.id, b = b.id](std::size_t self) {
    if (t.needs_grad(a)) t.grad_of(a) += t.grad(self);
    if (t.needs_grad(b)) t.grad_of(b) -= t.grad(self);
  });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

// Adds a 1 x c row to every row of a.
inline Var add_row(Var a, Var row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row");
  Tape& t = *a.tape;
  Matrix v = a.value().rowwise() + row.value().row(0);
  return t.op(std::move(v), {a, row}, [&t, a = a.id, r = row.id](std::size_t self) {
    if (t.needs_grad(a)) t.grad_of(a) += t.grad(self);
    if (t.needs_grad(r)) t.grad_of(r) += t.grad(self).colwise().sum();
  });
}

// Scales every row of a elementwise by a 1 x c row.
inline Var mul_row(Var a, Var row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "mul_row");
  Tape& t = *a.tape;
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return t.op(std::move(v), {a, row}, [&t, a = a.id, r = row.id](std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.grad_of(a).array() += g.array().rowwise() * t.value(r).row(0).array();
    if (t.needs_grad(r)) t.grad_of(r) += (g.array() * t.value(a).array()).colwise().sum().matrix();
  });
}

inline Var cwise_mul(Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_mul");
  Tape& t = *a.tape;
  Matrix v = a.value().cwiseProduct(b.value());
  return t.op(std::move(v), {a, b}, [&t, a = a.id, b = b.id](std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.grad_of(a) += g.cwiseProduct(t.value(b));
    if (t.needs_grad(b)) t.grad_of(b) += g.cwiseProduct(t.value(a));
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Matrix v = a.value() * s;
  return t.op(std::move(v), {a}, [&t, a = a.id, s](std::size_t self) {
    t.grad_of(a) += t.grad(self) * s;
  });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().array().tanh().matrix();
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    const Matrix& y = t.value(self);
    t.grad_of(a).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    const Matrix& y = t.value(self);
    t.grad_of(a).array() += t.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().cwiseMax(0.0);
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    t.grad_of(a).array() += (t.value(a).array() > 0.0).select(t.grad(self).array(), 0.0);
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().transpose();
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    t.grad_of(a) += t.grad(self).transpose();
  });
}

// Row-wise softmax (no mask).
inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Matrix v(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mx = a.value().row(r).maxCoeff();
    v.row(r) = (a.value().row(r).array() - mx).exp().matrix();
    v.row(r) /= v.row(r).sum();
  }
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_of(a);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
    }
  });
}

// Log-softmax of a 1 x n row restricted to feasible entries; infeasible
// entries get -inf and receive no gradient.
inline Var masked_log_softmax(Var scores, const std::vector<bool>& feasible) {
  detail::require(scores.rows() == 1 && static_cast<std::size_t>(scores.cols()) == feasible.size(),
                  "masked_log_softmax");
  Tape& t = *scores.tape;
  const auto& s = scores.value();
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < feasible.size(); ++j) {
    if (!feasible[j]) continue;
    const double v = s(0, static_cast<Eigen::Index>(j));
    if (std::isnan(v)) throw DivergenceError("NaN score in masked log-softmax");
    mx = std::max(mx, v);
    any = true;
  }
  if (!any) throw NoFeasibleAction();
  double z = 0.0;
  for (std::size_t j = 0; j < feasible.size(); ++j)
    if (feasible[j]) z += std::exp(s(0, static_cast<Eigen::Index>(j)) - mx);
  const double log_z = mx + std::log(z);
  Matrix v(1, scores.cols());
  for (std::size_t j = 0; j < feasible.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    v(0, jj) = feasible[j] ? s(0, jj) - log_z : -std::numeric_limits<double>::infinity();
  }
  return t.op(std::move(v), {scores}, [&t, a = scores.id, feasible](std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    double gsum = 0.0;
    for (std::size_t j = 0; j < feasible.size(); ++j)
      if (feasible[j]) gsum += g(0, static_cast<Eigen::Index>(j));
    Matrix& ga = t.grad_of(a);
    for (std::size_t j = 0; j < feasible.size(); ++j) {
      if (!feasible[j]) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      ga(0, jj) += g(0, jj) - std::exp(y(0, jj)) * gsum;
    }
  });
}

inline Var exp(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().array().exp().matrix();
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    t.grad_of(a).array() += t.grad(self).array() * t.value(self).array();
  });
}

inline Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && start + count <= a.cols(), "slice_cols");
  Tape& t = *a.tape;
  Matrix v = a.value().middleCols(start, count);
  return t.op(std::move(v), {a}, [&t, a = a.id, start, count](std::size_t self) {
    t.grad_of(a).middleCols(start, count) += t.grad(self);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols of nothing");
  Tape& t = *parts.front().tape;
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    detail::require(p.rows() == parts.front().rows(), "concat_cols");
    cols += p.cols();
  }
  Matrix v(parts.front().rows(), cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  return t.op(std::move(v), std::span<const Var>(parts), [&t, ids](std::size_t self) {
    Eigen::Index off = 0;
    for (std::size_t id : ids) {
      const auto c = t.value(id).cols();
      if (t.needs_grad(id)) t.grad_of(id) += t.grad(self).middleCols(off, c);
      off += c;
    }
  });
}

// Stacks 1 x c rows into a k x c matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  detail::require(!rows.empty(), "stack_rows of nothing");
  Tape& t = *rows.front().tape;
  Matrix v(static_cast<Eigen::Index>(rows.size()), rows.front().cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail::require(rows[i].rows() == 1 && rows[i].cols() == v.cols(), "stack_rows");
    v.row(static_cast<Eigen::Index>(i)) = rows[i].value().row(0);
  }
  std::vector<std::size_t> ids;
  for (const Var& r : rows) ids.push_back(r.id);
  return t.op(std::move(v), std::span<const Var>(rows), [&t, ids](std::size_t self) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.needs_grad(ids[i])) t.grad_of(ids[i]).row(0) += t.grad(self).row(static_cast<Eigen::Index>(i));
  });
}

inline Var row(Var a, Eigen::Index r) {
  detail::require(r >= 0 && r < a.rows(), "row");
  Tape& t = *a.tape;
  Matrix v = a.value().row(r);
  return t.op(std::move(v), {a}, [&t, a = a.id, r](std::size_t self) {
    t.grad_of(a).row(r) += t.grad(self).row(0);
  });
}

inline Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix v = a.value().colwise().sum() * inv;
  return t.op(std::move(v), {a}, [&t, a = a.id, inv](std::size_t self) {
    t.grad_of(a).rowwise() += t.grad(self).row(0) * inv;
  });
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    t.grad_of(a).array() += t.grad(self)(0, 0);
  });
}

inline Var pick(Var a, Eigen::Index r, Eigen::Index c) {
  detail::require(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "pick");
  Tape& t = *a.tape;
  Matrix v(1, 1);
  v(0, 0) = a.value()(r, c);
  return t.op(std::move(v), {a}, [&t, a = a.id, r, c](std::size_t self) {
    t.grad_of(a)(r, c) += t.grad(self)(0, 0);
  });
}

// Zero-pads columns on the right up to width.
inline Var pad_cols(Var a, Eigen::Index width) {
  detail::require(width >= a.cols(), "pad_cols");
  Tape& t = *a.tape;
  Matrix v = Matrix::Zero(a.rows(), width);
  v.leftCols(a.cols()) = a.value();
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    const auto c = t.value(a).cols();
    t.grad_of(a) += t.grad(self).leftCols(c);
  });
}

// Same value, no gradient flow.
inline Var detach(Var a) { return a.tape->constant(a.value()); }

// Normalizes each column over the rows (batch statistics, no affine).
inline Var batch_norm_rows(Var a, double eps) {
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().sum() / n;
  Matrix centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().sum() / n;
  const Eigen::RowVectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix v = centered.array().rowwise() * inv_std.array();
  return t.op(std::move(v), {a}, [&t, a = a.id, inv_std, n](std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    const Eigen::RowVectorXd g_mean = g.colwise().sum() / n;
    const Eigen::RowVectorXd gy_mean = (g.array() * y.array()).colwise().sum().matrix() / n;
    Matrix dx = (g.rowwise() - g_mean) - (y.array().rowwise() * gy_mean.array()).matrix();
    t.grad_of(a).array() += dx.array().rowwise() * inv_std.array();
  });
}

inline Var smooth_l1(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().unaryExpr([](double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
  });
  return t.op(std::move(v), {a}, [&t, a = a.id](std::size_t self) {
    const Matrix d = t.value(a).unaryExpr([](double x) {
      return std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0);
    });
    t.grad_of(a) += t.grad(self).cwiseProduct(d);
  });
}

// Sum of scalar Vars on one tape.
inline Var add_all(Tape& tape, std::span<const Var> terms) {
  if (terms.empty()) return tape.constant_scalar(0.0);
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace drl4route::numerics
