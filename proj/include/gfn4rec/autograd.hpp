#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tensor is a shared handle to a graph node. Operations record their
// parents and a backward closure only when at least one input requires a
// gradient and no NoGradGuard is active, so inference builds no graph.
// Rows are samples, columns are features throughout the library.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gfn4rec/errors.hpp"

namespace gfn4rec::ag {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad{false};

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

/// Disables graph construction on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value) {
    auto n = std::make_shared<detail::Node>();
    n->value = std::move(value);
    return Tensor(std::move(n));
  }

  /// A leaf that accumulates gradients (a trainable parameter).
  static Tensor parameter(Matrix value) {
    auto n = std::make_shared<detail::Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient accumulated by backward(); a zero matrix if nothing flowed here.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  double item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() requires a 1x1 tensor");
    return node_->value(0, 0);
  }

  /// Back-propagates from this scalar tensor into every reachable parameter.
  void backward() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("backward() requires a scalar tensor");
    if (!node_->requires_grad) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        detail::Node* p = n->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
  }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

  friend Tensor make_op(Matrix, std::initializer_list<Tensor>, std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Creates the result node of an operation. The backward closure receives
/// the result node; it must only touch parents through raw pointers it
/// captured, never through the result's own shared handle.
inline Tensor make_op(Matrix value, std::initializer_list<Tensor> parents,
                      std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

namespace detail {
inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}
inline void push(Node* p, const Matrix& g) {
  if (p->requires_grad) p->accumulate(g);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  auto* pa = a.node();
  auto* pb = b.node();
  return make_op(a.value() * b.value(), {a, b}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad * pb->value.transpose());
    if (pb->requires_grad) pb->accumulate(pa->value.transpose() * self.grad);
  });
}

/// a * b^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  auto* pa = a.node();
  auto* pb = b.node();
  return make_op(a.value() * b.value().transpose(), {a, b}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad * pb->value);
    if (pb->requires_grad) pb->accumulate(self.grad.transpose() * pa->value);
  });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  auto* pa = a.node();
  auto* pb = b.node();
  return make_op(a.value() + b.value(), {a, b}, [pa, pb](detail::Node& self) {
    detail::push(pa, self.grad);
    detail::push(pb, self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  auto* pa = a.node();
  auto* pb = b.node();
  return make_op(a.value() - b.value(), {a, b}, [pa, pb](detail::Node& self) {
    detail::push(pa, self.grad);
    if (pb->requires_grad) pb->accumulate(-self.grad);
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  auto* pa = a.node();
  auto* pb = b.node();
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad.cwiseProduct(pb->value));
    if (pb->requires_grad) pb->accumulate(self.grad.cwiseProduct(pa->value));
  });
}

/// Adds a 1 x n row vector to every row of a.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias shape mismatch");
  auto* pa = a.node();
  auto* pr = row.node();
  Matrix v = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(v), {a, row}, [pa, pr](detail::Node& self) {
    detail::push(pa, self.grad);
    if (pr->requires_grad) pr->accumulate(self.grad.colwise().sum());
  });
}

inline Tensor scale(const Tensor& a, double c) {
  auto* pa = a.node();
  return make_op(a.value() * c, {a}, [pa, c](detail::Node& self) { pa->accumulate(self.grad * c); });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  auto* pa = a.node();
  return make_op(a.value().array() + c, {a}, [pa](detail::Node& self) { pa->accumulate(self.grad); });
}

/// Multiplies row r of a by the constant weights[r].
inline Tensor scale_rows(const Tensor& a, const Eigen::VectorXd& weights) {
  if (weights.size() != a.rows()) throw ShapeError("scale_rows: weight count mismatch");
  auto* pa = a.node();
  Matrix v = weights.asDiagonal() * a.value();
  return make_op(std::move(v), {a}, [pa, weights](detail::Node& self) {
    pa->accumulate(weights.asDiagonal() * self.grad);
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Tensor tanh(const Tensor& a) {
  auto* pa = a.node();
  Matrix v = a.value().array().tanh();
  return make_op(std::move(v), {a}, [pa](detail::Node& self) {
    pa->accumulate((self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

inline Tensor sigmoid(const Tensor& a) {
  auto* pa = a.node();
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_op(std::move(v), {a}, [pa](detail::Node& self) {
    pa->accumulate((self.grad.array() * self.value.array() * (1.0 - self.value.array())).matrix());
  });
}

/// GELU, tanh approximation. Smooth everywhere, unlike ReLU, which keeps
/// finite-difference checks meaningful.
inline Tensor gelu(const Tensor& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  auto* pa = a.node();
  const Matrix& x = a.value();
  Eigen::ArrayXXd t = (k * (x.array() + c * x.array().cube())).tanh();
  Matrix v = (0.5 * x.array() * (1.0 + t)).matrix();
  return make_op(std::move(v), {a}, [pa, t, k, c](detail::Node& self) {
    const auto& xa = pa->value.array();
    Eigen::ArrayXXd d = 0.5 * (1.0 + t) + 0.5 * xa * (1.0 - t.square()) * k * (1.0 + 3.0 * c * xa.square());
    pa->accumulate((self.grad.array() * d).matrix());
  });
}

inline Tensor exp(const Tensor& a) {
  auto* pa = a.node();
  Matrix v = a.value().array().exp();
  return make_op(std::move(v), {a}, [pa](detail::Node& self) {
    pa->accumulate(self.grad.cwiseProduct(self.value));
  });
}

inline Tensor log(const Tensor& a) {
  auto* pa = a.node();
  Matrix v = a.value().array().log();
  return make_op(std::move(v), {a}, [pa](detail::Node& self) {
    pa->accumulate((self.grad.array() / pa->value.array()).matrix());
  });
}

inline Tensor square(const Tensor& a) {
  auto* pa = a.node();
  return make_op(a.value().array().square().matrix(), {a}, [pa](detail::Node& self) {
    pa->accumulate((2.0 * self.grad.array() * pa->value.array()).matrix());
  });
}

/// log(1 + exp(x)), computed stably.
inline Tensor softplus(const Tensor& a) {
  auto* pa = a.node();
  Matrix v = a.value().unaryExpr([](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
  return make_op(std::move(v), {a}, [pa](detail::Node& self) {
    Matrix s = pa->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    pa->accumulate(self.grad.cwiseProduct(s));
  });
}

/// log(exp(x) + shift) for a constant shift >= 0: the log of a probability
/// given in log space, shifted by a constant. shift == 0 is the identity.
inline Tensor log_shifted_exp(const Tensor& a, double shift) {
  if (shift < 0) throw PreconditionError("log_shifted_exp: shift must be >= 0");
  if (shift == 0.0) return a;
  const double log_shift = std::log(shift);
  auto* pa = a.node();
  Matrix v = a.value().unaryExpr([log_shift](double x) {
    const double m = std::max(x, log_shift);
    return m + std::log(std::exp(x - m) + std::exp(log_shift - m));
  });
  return make_op(std::move(v), {a}, [pa, log_shift](detail::Node& self) {
    Matrix s = pa->value.unaryExpr([log_shift](double x) { return 1.0 / (1.0 + std::exp(log_shift - x)); });
    pa->accumulate(self.grad.cwiseProduct(s));
  });
}

/// Elementwise clamp; zero gradient where the clamp is active.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  auto* pa = a.node();
  Matrix v = a.value().cwiseMax(lo).cwiseMin(hi);
  return make_op(std::move(v), {a}, [pa, lo, hi](detail::Node& self) {
    Matrix g = self.grad;
    for (Index i = 0; i < g.size(); ++i) {
      const double x = pa->value.data()[i];
      if (x < lo || x > hi) g.data()[i] = 0.0;
    }
    pa->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Tensor sum(const Tensor& a) {
  auto* pa = a.node();
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [pa](detail::Node& self) {
    pa->accumulate(Matrix::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0)));
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Row sums as an n x 1 column.
inline Tensor row_sum(const Tensor& a) {
  auto* pa = a.node();
  Matrix v = a.value().rowwise().sum();
  return make_op(std::move(v), {a}, [pa](detail::Node& self) {
    pa->accumulate(self.grad.replicate(1, pa->value.cols()));
  });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row count mismatch");
  auto* pa = a.node();
  auto* pb = b.node();
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return make_op(std::move(v), {a, b}, [pa, pb, ca, cb](detail::Node& self) {
    if (pa->requires_grad) pa->accumulate(self.grad.leftCols(ca));
    if (pb->requires_grad) pb->accumulate(self.grad.rightCols(cb));
  });
}

/// Embedding lookup: out row r is table row ids[r].
inline Tensor gather_rows(const Tensor& table, std::vector<Index> ids) {
  Matrix v(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= table.rows()) throw ShapeError("gather_rows: index out of range");
    v.row(static_cast<Index>(r)) = table.value().row(ids[r]);
  }
  auto* pt = table.node();
  return make_op(std::move(v), {table}, [pt, ids = std::move(ids)](detail::Node& self) {
    Matrix g = Matrix::Zero(pt->value.rows(), pt->value.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) g.row(ids[r]) += self.grad.row(static_cast<Index>(r));
    pt->accumulate(g);
  });
}

/// One term of a sparse row combination: out[out_row] += weight * in[in_row].
struct RowTerm {
  Index out_row;
  Index in_row;
  double weight;
};

/// Sparse linear combination of rows (pooling, means over selected items).
inline Tensor combine_rows(const Tensor& a, Index out_rows, std::vector<RowTerm> terms) {
  Matrix v = Matrix::Zero(out_rows, a.cols());
  for (const auto& t : terms) {
    if (t.out_row < 0 || t.out_row >= out_rows || t.in_row < 0 || t.in_row >= a.rows()) {
      throw ShapeError("combine_rows: index out of range");
    }
    v.row(t.out_row) += t.weight * a.value().row(t.in_row);
  }
  auto* pa = a.node();
  return make_op(std::move(v), {a}, [pa, terms = std::move(terms)](detail::Node& self) {
    Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
    for (const auto& t : terms) g.row(t.in_row) += t.weight * self.grad.row(t.out_row);
    pa->accumulate(g);
  });
}

/// Picks a[r, cols[r]] for every row into an n x 1 column.
inline Tensor pick(const Tensor& a, std::vector<Index> cols) {
  if (static_cast<Index>(cols.size()) != a.rows()) throw ShapeError("pick: one column per row required");
  Matrix v(a.rows(), 1);
  for (Index r = 0; r < a.rows(); ++r) {
    if (cols[r] < 0 || cols[r] >= a.cols()) throw ShapeError("pick: column out of range");
    v(r, 0) = a.value()(r, cols[r]);
  }
  auto* pa = a.node();
  return make_op(std::move(v), {a}, [pa, cols = std::move(cols)](detail::Node& self) {
    Matrix g = Matrix::Zero(pa->value.rows(), pa->value.cols());
    for (Index r = 0; r < g.rows(); ++r) g(r, cols[r]) = self.grad(r, 0);
    pa->accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Normalization and attention

/// Row-wise log-softmax over entries where eligible is true. Ineligible
/// entries come out as -inf and receive no gradient.
inline Tensor masked_log_softmax(const Tensor& a, const BoolMatrix& eligible) {
  if (eligible.rows() != a.rows() || eligible.cols() != a.cols()) {
    throw ShapeError("masked_log_softmax: mask shape mismatch");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Matrix v(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    double m = kNegInf;
    for (Index c = 0; c < a.cols(); ++c) {
      if (eligible(r, c)) m = std::max(m, a.value()(r, c));
    }
    if (m == kNegInf) throw PreconditionError("masked_log_softmax: row without eligible entries");
    double z = 0.0;
    for (Index c = 0; c < a.cols(); ++c) {
      if (eligible(r, c)) z += std::exp(a.value()(r, c) - m);
    }
    const double lse = m + std::log(z);
    for (Index c = 0; c < a.cols(); ++c) v(r, c) = eligible(r, c) ? a.value()(r, c) - lse : kNegInf;
  }
  auto* pa = a.node();
  return make_op(std::move(v), {a}, [pa, eligible](detail::Node& self) {
    Matrix g = Matrix::Zero(self.value.rows(), self.value.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      double total = 0.0;
      for (Index c = 0; c < g.cols(); ++c) {
        if (eligible(r, c)) total += self.grad(r, c);
      }
      for (Index c = 0; c < g.cols(); ++c) {
        if (eligible(r, c)) g(r, c) = self.grad(r, c) - std::exp(self.value(r, c)) * total;
      }
    }
    pa->accumulate(g);
  });
}

/// Row-wise layer normalization with learnable gain and bias (1 x n each).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm: parameter shape mismatch");
  }
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix v = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  v.rowwise() += bias.value().row(0);
  auto* px = x.node();
  auto* pg = gain.node();
  auto* pb = bias.node();
  return make_op(std::move(v), {x, gain, bias}, [px, pg, pb, xhat, inv_std, n](detail::Node& self) {
    if (pg->requires_grad) pg->accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
    if (pb->requires_grad) pb->accumulate(self.grad.colwise().sum());
    if (px->requires_grad) {
      Matrix dxhat = (self.grad.array().rowwise() * pg->value.row(0).array()).matrix();
      Matrix dx(dxhat.rows(), n);
      for (Index r = 0; r < dxhat.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
      px->accumulate(dx);
    }
  });
}

/// Multi-head scaled dot-product self-attention over a batch of equal-length
/// sequences stacked row-wise: q, k and v are (n_seq * seq_len) x d.
/// key_valid(s, j) marks real (non-padding) positions; queries attend only
/// to valid keys and a sequence with no valid key produces zero output.
inline Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, Index seq_len,
                                   Index n_heads, const BoolMatrix& key_valid) {
  detail::check_same_shape(q, k, "attention");
  detail::check_same_shape(q, v, "attention");
  const Index d = q.cols();
  if (seq_len <= 0 || q.rows() % seq_len != 0) throw ShapeError("attention: rows not a multiple of seq_len");
  if (n_heads <= 0 || d % n_heads != 0) throw ShapeError("attention: dim not divisible by heads");
  const Index n_seq = q.rows() / seq_len;
  if (key_valid.rows() != n_seq || key_valid.cols() != seq_len) throw ShapeError("attention: mask shape");
  const Index hd = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  // Attention weights per (sequence, head), kept for the backward pass.
  auto weights = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(n_seq * n_heads));
  Matrix out = Matrix::Zero(q.rows(), d);
  for (Index s = 0; s < n_seq; ++s) {
    const bool any_valid = key_valid.row(s).any();
    for (Index h = 0; h < n_heads; ++h) {
      Matrix& a = (*weights)[static_cast<std::size_t>(s * n_heads + h)];
      a = Matrix::Zero(seq_len, seq_len);
      if (!any_valid) continue;
      auto qh = q.value().block(s * seq_len, h * hd, seq_len, hd);
      auto kh = k.value().block(s * seq_len, h * hd, seq_len, hd);
      Matrix scores = qh * kh.transpose() * inv_sqrt;
      for (Index i = 0; i < seq_len; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < seq_len; ++j) {
          if (key_valid(s, j)) m = std::max(m, scores(i, j));
        }
        double z = 0.0;
        for (Index j = 0; j < seq_len; ++j) {
          if (key_valid(s, j)) {
            a(i, j) = std::exp(scores(i, j) - m);
            z += a(i, j);
          }
        }
        a.row(i) /= z;
      }
      out.block(s * seq_len, h * hd, seq_len, hd) = a * v.value().block(s * seq_len, h * hd, seq_len, hd);
    }
  }
  auto* pq = q.node();
  auto* pk = k.node();
  auto* pv = v.node();
  return make_op(std::move(out), {q, k, v},
                 [pq, pk, pv, weights, seq_len, n_heads, hd, n_seq, inv_sqrt](detail::Node& self) {
                   Matrix dq = Matrix::Zero(self.value.rows(), self.value.cols());
                   Matrix dk = dq;
                   Matrix dv = dq;
                   for (Index s = 0; s < n_seq; ++s) {
                     for (Index h = 0; h < n_heads; ++h) {
                       const Matrix& a = (*weights)[static_cast<std::size_t>(s * n_heads + h)];
                       auto go = self.grad.block(s * seq_len, h * hd, seq_len, hd);
                       auto vh = pv->value.block(s * seq_len, h * hd, seq_len, hd);
                       auto qh = pq->value.block(s * seq_len, h * hd, seq_len, hd);
                       auto kh = pk->value.block(s * seq_len, h * hd, seq_len, hd);
                       dv.block(s * seq_len, h * hd, seq_len, hd) = a.transpose() * go;
                       Matrix da = go * vh.transpose();
                       Eigen::VectorXd rs = da.cwiseProduct(a).rowwise().sum();
                       Matrix ds = (a.array() * (da.colwise() - rs).array()).matrix() * inv_sqrt;
                       dq.block(s * seq_len, h * hd, seq_len, hd) = ds * kh;
                       dk.block(s * seq_len, h * hd, seq_len, hd) = ds.transpose() * qh;
                     }
                   }
                   detail::push(pq, dq);
                   detail::push(pk, dk);
                   detail::push(pv, dv);
                 });
}

}  // namespace gfn4rec::ag
