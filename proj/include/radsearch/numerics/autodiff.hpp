#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Var is a shared handle to a graph node. Parameters are long-lived leaf
// nodes; every op builds a fresh node whose backward closure pushes its
// gradient into its parents. Graphs are single-owner and single-threaded.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "radsearch/numerics/ops.hpp"

namespace radsearch::ad {

template <typename Real>
struct Node {
  Matrix<Real> value;
  Matrix<Real> grad;
  bool grad_ready = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Matrix<Real>& grad_buffer() {
    if (!grad_ready) {
      grad = Matrix<Real>(value.rows(), value.cols());
      grad_ready = true;
    }
    return grad;
  }

  void accumulate(const Matrix<Real>& g) {
    auto& buf = grad_buffer();
    auto dst = buf.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
};

template <typename Real>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Real>>;

  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Matrix<Real> value) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var parameter(Matrix<Real> value) {
    auto n = std::make_shared<Node<Real>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  const Matrix<Real>& value() const { return node_->value; }
  Matrix<Real>& mutable_value() { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad_ready; }

  // Zero matrix of the value's shape when nothing has flowed back yet.
  Matrix<Real> grad() const {
    if (node_->grad_ready) return node_->grad;
    return Matrix<Real>(rows(), cols());
  }

  void zero_grad() {
    node_->grad_ready = false;
    node_->grad = Matrix<Real>();
  }

  Node<Real>& node() const { return *node_; }
  const NodePtr& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

template <typename Real, typename Fn>
Var<Real> make_op(Matrix<Real> value, std::initializer_list<Var<Real>> parents, Fn&& fn) {
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  for (const auto& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
  if (node->requires_grad) {
    for (const auto& p : parents) node->parents.push_back(p.ptr());
    node->backward_fn = std::forward<Fn>(fn);
  }
  return Var<Real>(std::move(node));
}

// Reverse sweep from a scalar. Returns the number of nodes visited; each
// reachable node that requires gradients is visited exactly once.
template <typename Real>
std::size_t backward(const Var<Real>& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward() needs a 1x1 loss, got " + loss.value().shape_string());
  }
  if (!loss.requires_grad()) return 0;

  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> seen;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Real>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node().grad_buffer()(0, 0) += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (node->backward_fn && node->grad_ready) node->backward_fn(*node);
  }
  return order.size();
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops

template <typename Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  return make_op(radsearch::matmul(a.value(), b.value()), {a, b}, [](Node<Real>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(matmul_nt(self.grad, pb.value));
    if (pb.requires_grad) pb.accumulate(matmul_tn(pa.value, self.grad));
  });
}

// a * b^T
template <typename Real>
Var<Real> matmul_nt(const Var<Real>& a, const Var<Real>& b) {
  return make_op(radsearch::matmul_nt(a.value(), b.value()), {a, b}, [](Node<Real>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(radsearch::matmul(self.grad, pb.value));
    if (pb.requires_grad) pb.accumulate(matmul_tn(self.grad, pa.value));
  });
}

template <typename Real>
Var<Real> transpose(const Var<Real>& a) {
  return make_op(a.value().transposed(), {a}, [](Node<Real>& self) {
    self.parents[0]->accumulate(self.grad.transposed());
  });
}

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError("add shape mismatch (" + a.value().shape_string() + " vs " +
                         b.value().shape_string() + ")");
  }
  Matrix<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.value().data()[i];
  return make_op(std::move(out), {a, b}, [](Node<Real>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad);
  });
}

template <typename Real>
Var<Real> scale(const Var<Real>& a, double factor) {
  Matrix<Real> out = a.value();
  for (auto& v : out.data()) v = static_cast<Real>(v * factor);
  return make_op(std::move(out), {a}, [factor](Node<Real>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      g.data()[i] += static_cast<Real>(self.grad.data()[i] * factor);
  });
}

template <typename Real>
Var<Real> hadamard(const Var<Real>& a, const Var<Real>& b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError("hadamard shape mismatch (" + a.value().shape_string() + " vs " +
                         b.value().shape_string() + ")");
  }
  Matrix<Real> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return make_op(std::move(out), {a, b}, [](Node<Real>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += self.grad.data()[i] * pb.value.data()[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += self.grad.data()[i] * pa.value.data()[i];
    }
  });
}

template <typename Real>
Var<Real> sum(const Var<Real>& a) {
  double s = 0.0;
  for (Real v : a.value().data()) s += v;
  return make_op(Matrix<Real>(1, 1, static_cast<Real>(s)), {a}, [](Node<Real>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const Real up = self.grad(0, 0);
    for (auto& v : g.data()) v += up;
  });
}

// x (b x k) + bias (1 x k) broadcast over rows.
template <typename Real>
Var<Real> add_row(const Var<Real>& x, const Var<Real>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("bias shape " + bias.value().shape_string() +
                         " does not broadcast over " + x.value().shape_string());
  }
  Matrix<Real> out = x.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias.value()(0, j);
  }
  return make_op(std::move(out), {x, bias}, [](Node<Real>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) px.accumulate(self.grad);
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t j = 0; j < g.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < self.grad.rows(); ++i) s += self.grad(i, j);
        g(0, j) += static_cast<Real>(s);
      }
    }
  });
}

enum class Activation { kIdentity, kTanh, kSilu };

template <typename Real>
Var<Real> activate(const Var<Real>& x, Activation act) {
  if (act == Activation::kIdentity) return x;
  Matrix<Real> out(x.rows(), x.cols());
  const auto in = x.value().data();
  auto o = out.data();
  if (act == Activation::kTanh) {
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = static_cast<Real>(std::tanh(static_cast<double>(in[i])));
    return make_op(std::move(out), {x}, [](Node<Real>& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = self.value.data()[i];
        g.data()[i] += static_cast<Real>(self.grad.data()[i] * (1.0 - y * y));
      }
    });
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    o[i] = static_cast<Real>(v / (1.0 + std::exp(-v)));
  }
  return make_op(std::move(out), {x}, [](Node<Real>& self) {
    auto& parent = *self.parents[0];
    auto& g = parent.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = parent.value.data()[i];
      const double s = 1.0 / (1.0 + std::exp(-v));
      g.data()[i] += static_cast<Real>(self.grad.data()[i] * s * (1.0 + v * (1.0 - s)));
    }
  });
}

// ---------------------------------------------------------------------------
// Row-wise ops used by the similarity and loss computations

template <typename Real>
Var<Real> normalize_rows(const Var<Real>& x) {
  const auto norms = row_norms(x.value());
  require_nonzero_rows<Real>(norms, "normalize_rows input");
  Matrix<Real> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.value().row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = static_cast<Real>(in[j] / norms[i]);
  }
  return make_op(std::move(out), {x}, [norms](Node<Real>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto y = self.value.row(i);
      auto up = self.grad.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) dot += static_cast<double>(y[j]) * up[j];
      auto dst = g.row(i);
      for (std::size_t j = 0; j < y.size(); ++j)
        dst[j] += static_cast<Real>((up[j] - y[j] * dot) / norms[i]);
    }
  });
}

template <typename Real>
Var<Real> cosine_rows(const Var<Real>& a, const Var<Real>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("cosine_rows column mismatch (" + a.value().shape_string() + " vs " +
                         b.value().shape_string() + ")");
  }
  if (a.ptr() == b.ptr()) {
    auto n = normalize_rows(a);
    return matmul_nt(n, n);
  }
  return matmul_nt(normalize_rows(a), normalize_rows(b));
}

template <typename Real>
Var<Real> softmax_rows(const Var<Real>& x) {
  return make_op(radsearch::softmax_rows(x.value()), {x}, [](Node<Real>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto y = self.value.row(i);
      auto up = self.grad.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) dot += static_cast<double>(y[j]) * up[j];
      auto dst = g.row(i);
      for (std::size_t j = 0; j < y.size(); ++j) dst[j] += static_cast<Real>(y[j] * (up[j] - dot));
    }
  });
}

// Mean over rows of -sum_j targets_ij * log softmax(logits)_ij. Differentiable
// in both arguments.
template <typename Real>
Var<Real> soft_cross_entropy(const Var<Real>& logits, const Var<Real>& targets) {
  if (!logits.value().same_shape(targets.value())) {
    throw ContractError("cross-entropy shape mismatch (" + logits.value().shape_string() +
                        " vs " + targets.value().shape_string() + ")");
  }
  const auto logp = log_softmax_rows(Matrix<double>::cast(logits.value()));
  const std::size_t rows = logits.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    auto t = targets.value().row(i);
    auto lp = logp.row(i);
    for (std::size_t j = 0; j < t.size(); ++j) total -= static_cast<double>(t[j]) * lp[j];
  }
  const double inv_rows = rows == 0 ? 0.0 : 1.0 / static_cast<double>(rows);
  return make_op(Matrix<Real>(1, 1, static_cast<Real>(total * inv_rows)), {logits, targets},
                 [logp, inv_rows](Node<Real>& self) {
                   const double up = self.grad(0, 0) * inv_rows;
                   auto& pl = *self.parents[0];
                   auto& pt = *self.parents[1];
                   if (pl.requires_grad) {
                     auto& g = pl.grad_buffer();
                     for (std::size_t i = 0; i < g.rows(); ++i) {
                       auto t = pt.value.row(i);
                       double tsum = 0.0;
                       for (Real v : t) tsum += v;
                       auto lp = logp.row(i);
                       auto dst = g.row(i);
                       for (std::size_t j = 0; j < dst.size(); ++j)
                         dst[j] += static_cast<Real>(up * (std::exp(lp[j]) * tsum - t[j]));
                     }
                   }
                   if (pt.requires_grad) {
                     auto& g = pt.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       g.data()[i] += static_cast<Real>(-up * logp.data()[i]);
                   }
                 });
}

}  // namespace radsearch::ad
