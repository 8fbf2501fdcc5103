#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "snmt/tensor.hpp"

namespace snmt {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;

  Graph<Scalar>* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Matrix<Scalar>& value() const { return graph_->value(*this); }
  const Matrix<Scalar>& grad() const { return graph_->grad(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Shape shape() const { return shape_of(value()); }

  /// Value of a 1 x 1 node.
  Scalar item() const {
    if (rows() != 1 || cols() != 1) {
      throw DimensionError("item() on non-scalar node " + to_string(shape()));
    }
    return value()(0, 0);
  }

 private:
  friend class Graph<Scalar>;
  Var(Graph<Scalar>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<Scalar>* graph_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { kRecord, kDisabled };

/// Tape of recorded operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the tape is always
/// topologically sorted. backward() walks it in reverse, accumulating into
/// every node that (transitively) depends on a gradient-tracking leaf, and
/// finally adds each leaf's total into its bound Tensor::grad(). A graph is
/// confined to one thread; bound tensors are only read in kDisabled mode.
template <typename Scalar>
class Graph {
 public:
  using MatrixType = Matrix<Scalar>;
  using BackwardFn =
      std::function<void(Graph&, const MatrixType& out_grad, const MatrixType& out_value)>;

  explicit Graph(GradMode mode = GradMode::kRecord) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return mode_ == GradMode::kRecord; }
  std::size_t size() const { return nodes_.size(); }

  /// Binds a tensor as a leaf. Gradients reach `t.grad()` on backward when
  /// the graph records and the tensor tracks gradients. Binding the same
  /// tensor twice returns the same node.
  Var<Scalar> parameter(Tensor<Scalar>& t) {
    return bind(t, recording() && t.requires_grad() ? &t : nullptr);
  }

  /// Read-only binding; never written to.
  Var<Scalar> parameter(const Tensor<Scalar>& t) { return bind(t, nullptr); }

  Var<Scalar> constant(MatrixType value) {
    Node node;
    node.own = std::move(value);
    return push(std::move(node));
  }

  /// Appends an operation output. `backward` receives the output gradient
  /// and must accumulate into the operands through accumulate()/grad_slot().
  Var<Scalar> record(MatrixType value, std::initializer_list<Var<Scalar>> inputs,
                     BackwardFn backward) {
    return record(std::move(value), std::vector<Var<Scalar>>(inputs), std::move(backward));
  }

  Var<Scalar> record(MatrixType value, const std::vector<Var<Scalar>>& inputs,
                     BackwardFn backward) {
    Node node;
    node.own = std::move(value);
    if (recording()) {
      for (const auto& in : inputs) {
        check_owner(in);
        node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
      }
      if (node.needs_grad) node.backward = std::move(backward);
    }
    return push(std::move(node));
  }

  const MatrixType& value(const Var<Scalar>& v) const {
    check_owner(v);
    return nodes_[v.id()].value();
  }

  /// Gradient of the last backward() target with respect to `v`; zeros if
  /// nothing flowed into it.
  const MatrixType& grad(const Var<Scalar>& v) {
    check_owner(v);
    Node& node = nodes_[v.id()];
    if (node.grad.size() == 0) {
      node.grad = MatrixType::Zero(node.value().rows(), node.value().cols());
    }
    return node.grad;
  }

  bool needs_grad(const Var<Scalar>& v) const {
    check_owner(v);
    return nodes_[v.id()].needs_grad;
  }

  template <typename Expr>
  void accumulate(const Var<Scalar>& v, const Expr& g) {
    Node& node = nodes_[v.id()];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  /// Zero-initialized gradient buffer of `v` for sparse updates, or nullptr
  /// when `v` does not need a gradient.
  MatrixType* grad_slot(const Var<Scalar>& v) {
    Node& node = nodes_[v.id()];
    if (!node.needs_grad) return nullptr;
    if (node.grad.size() == 0) {
      node.grad = MatrixType::Zero(node.value().rows(), node.value().cols());
    }
    return &node.grad;
  }

  void backward(const Var<Scalar>& loss) {
    check_owner(loss);
    if (!recording()) throw Error("backward on a graph built with gradients disabled");
    if (backward_done_) throw Error("backward already ran on this graph; call reset_grads() first");
    const MatrixType& out = nodes_[loss.id()].value();
    if (out.rows() != 1 || out.cols() != 1) {
      throw DimensionError("backward needs a scalar loss, got " + to_string(shape_of(out)));
    }
    backward_done_ = true;
    nodes_[loss.id()].grad = MatrixType::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.needs_grad || node.grad.size() == 0) continue;
      if (node.backward) node.backward(*this, node.grad, node.value());
      if (node.leaf != nullptr) node.leaf->grad() += node.grad;
    }
  }

  /// Clears node gradients so backward() may run again. Bound tensors keep
  /// whatever was already accumulated into them.
  void reset_grads() {
    for (auto& node : nodes_) node.grad.resize(0, 0);
    backward_done_ = false;
  }

 private:
  struct Node {
    MatrixType own;
    const MatrixType* external = nullptr;
    MatrixType grad;
    Tensor<Scalar>* leaf = nullptr;
    bool needs_grad = false;
    BackwardFn backward;

    const MatrixType& value() const { return external != nullptr ? *external : own; }
  };

  Var<Scalar> bind(const Tensor<Scalar>& t, Tensor<Scalar>* leaf) {
    if (auto it = bound_.find(&t); it != bound_.end()) return Var<Scalar>(this, it->second);
    if (t.empty()) throw DimensionError("binding an empty tensor");
    Node node;
    node.external = &t.value();
    node.leaf = leaf;
    node.needs_grad = leaf != nullptr;
    Var<Scalar> v = push(std::move(node));
    bound_.emplace(&t, v.id());
    return v;
  }

  Var<Scalar> push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  void check_owner(const Var<Scalar>& v) const {
    if (v.graph() != this || v.id() >= nodes_.size()) {
      throw Error("variable does not belong to this graph");
    }
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Tensor<Scalar>*, std::size_t> bound_;
  GradMode mode_;
  bool backward_done_ = false;
};

namespace detail {

template <typename Scalar>
Graph<Scalar>& same_graph(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.graph() != b.graph() || a.graph() == nullptr) {
    throw Error("operands belong to different graphs");
  }
  return *a.graph();
}

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

template <typename Scalar>
void require_vector(const char* op, const Var<Scalar>& a) {
  if (a.rows() != 1 && a.cols() != 1) {
    throw DimensionError(std::string(op) + ": expected a vector, got " + to_string(a.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& g = detail::same_graph(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  Matrix<Scalar> out = a.value() * b.value();
  return g.record(std::move(out), {a, b},
                  [a, b](Graph<Scalar>& g, const Matrix<Scalar>& dc, const Matrix<Scalar>&) {
                    g.accumulate(a, dc * b.value().transpose());
                    g.accumulate(b, a.value().transpose() * dc);
                  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  auto& g = *a.graph();
  return g.record(a.value().transpose(), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    g.accumulate(a, d.transpose());
                  });
}

/// Elementwise sum. `b` may also be a column with a's row count, in which
/// case it is added to every column of `a`.
template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& g = detail::same_graph(a, b);
  if (a.shape() == b.shape()) {
    return g.record(a.value() + b.value(), {a, b},
                    [a, b](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                      g.accumulate(a, d);
                      g.accumulate(b, d);
                    });
  }
  if (b.cols() == 1 && b.rows() == a.rows()) {
    Matrix<Scalar> out = a.value().colwise() + b.value().col(0);
    return g.record(std::move(out), {a, b},
                    [a, b](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                      g.accumulate(a, d);
                      g.accumulate(b, d.rowwise().sum());
                    });
  }
  throw DimensionError("add: shape mismatch " + to_string(a.shape()) + " vs " +
                       to_string(b.shape()));
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& g = detail::same_graph(a, b);
  detail::require_same_shape("sub", a, b);
  return g.record(a.value() - b.value(), {a, b},
                  [a, b](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    g.accumulate(a, d);
                    g.accumulate(b, -d);
                  });
}

template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& g = detail::same_graph(a, b);
  detail::require_same_shape("cwise_product", a, b);
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return g.record(std::move(out), {a, b},
                  [a, b](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    g.accumulate(a, d.cwiseProduct(b.value()));
                    g.accumulate(b, d.cwiseProduct(a.value()));
                  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) {
  auto& g = *a.graph();
  return g.record(a.value() * s, {a},
                  [a, s](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    g.accumulate(a, d * s);
                  });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) {
  return a * s;
}

/// 1 - a, elementwise.
template <typename Scalar>
Var<Scalar> one_minus(const Var<Scalar>& a) {
  auto& g = *a.graph();
  Matrix<Scalar> out = (Scalar(1) - a.value().array()).matrix();
  return g.record(std::move(out), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    g.accumulate(a, -d);
                  });
}

/// Sum of all entries, as a 1 x 1 node.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  auto& g = *a.graph();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return g.record(std::move(out), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    g.accumulate(a, Matrix<Scalar>::Constant(a.rows(), a.cols(), d(0, 0)));
                  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  auto& g = *a.graph();
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return g.record(std::move(out), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>& y) {
                    g.accumulate(a, (d.array() * (Scalar(1) - y.array().square())).matrix());
                  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  auto& g = *a.graph();
  Matrix<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  return g.record(std::move(out), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>& y) {
                    g.accumulate(a, (d.array() * y.array() * (Scalar(1) - y.array())).matrix());
                  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  auto& g = *a.graph();
  Matrix<Scalar> out = a.value().array().exp().matrix();
  return g.record(std::move(out), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>& y) {
                    g.accumulate(a, d.cwiseProduct(y));
                  });
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& a) {
  auto& g = *a.graph();
  if ((a.value().array() <= Scalar(0)).any()) throw DomainError("log of a non-positive entry");
  Matrix<Scalar> out = a.value().array().log().matrix();
  return g.record(std::move(out), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    g.accumulate(a, d.cwiseQuotient(a.value()));
                  });
}

// ---------------------------------------------------------------------------
// Normalization and losses

/// Softmax over all entries of `a` (a row or column in practice).
template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& a) {
  auto& g = *a.graph();
  return g.record(softmax(a.value()), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>& y) {
                    const Scalar inner = d.cwiseProduct(y).sum();
                    g.accumulate(a, (y.array() * (d.array() - inner)).matrix());
                  });
}

template <typename Scalar>
Var<Scalar> log_softmax(const Var<Scalar>& a) {
  auto& g = *a.graph();
  return g.record(log_softmax(a.value()), {a},
                  [a](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>& y) {
                    const Scalar total = d.sum();
                    g.accumulate(a, (d.array() - y.array().exp() * total).matrix());
                  });
}

/// Entry `i` of a vector as a 1 x 1 node.
template <typename Scalar>
Var<Scalar> pick(const Var<Scalar>& a, Index i) {
  detail::require_vector("pick", a);
  if (i < 0 || i >= a.value().size()) {
    throw DomainError("pick: index " + std::to_string(i) + " outside " + to_string(a.shape()));
  }
  auto& g = *a.graph();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value()(i);
  return g.record(std::move(out), {a},
                  [a, i](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    if (auto* slot = g.grad_slot(a)) (*slot)(i) += d(0, 0);
                  });
}

/// -log softmax(logits)[target], fused. The gradient with respect to the
/// logits is softmax(logits) - onehot(target).
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, Index target) {
  detail::require_vector("cross_entropy", logits);
  if (target < 0 || target >= logits.value().size()) {
    throw DomainError("cross_entropy: class " + std::to_string(target) + " outside " +
                      to_string(logits.shape()));
  }
  auto& g = *logits.graph();
  Matrix<Scalar> logp = log_softmax(logits.value());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = -logp(target);
  return g.record(std::move(out), {logits},
                  [logits, target, logp = std::move(logp)](Graph<Scalar>& g,
                                                           const Matrix<Scalar>& d,
                                                           const Matrix<Scalar>&) {
                    Matrix<Scalar> dz = logp.array().exp().matrix();
                    dz(target) -= Scalar(1);
                    g.accumulate(logits, dz * d(0, 0));
                  });
}

// ---------------------------------------------------------------------------
// Structural ops

/// Row `id` of an embedding table, returned as a column vector.
template <typename Scalar>
Var<Scalar> lookup(const Var<Scalar>& table, Index id) {
  if (id < 0 || id >= table.rows()) {
    throw DomainError("lookup: id " + std::to_string(id) + " outside table of " +
                      std::to_string(table.rows()) + " rows");
  }
  auto& g = *table.graph();
  return g.record(table.value().row(id).transpose(), {table},
                  [table, id](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    if (auto* slot = g.grad_slot(table)) slot->row(id) += d.transpose();
                  });
}

/// Vertical stack of operands sharing a column count.
template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  auto& g = *parts.front().graph();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    detail::same_graph(parts.front(), p);
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + to_string(parts.front().shape()) +
                           " vs " + to_string(p.shape()));
    }
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return g.record(std::move(out), parts,
                  [parts](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    Index offset = 0;
                    for (const auto& p : parts) {
                      g.accumulate(p, d.middleRows(offset, p.rows()));
                      offset += p.rows();
                    }
                  });
}

/// Horizontal stack of operands sharing a row count.
template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  auto& g = *parts.front().graph();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    detail::same_graph(parts.front(), p);
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + to_string(parts.front().shape()) +
                           " vs " + to_string(p.shape()));
    }
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return g.record(std::move(out), parts,
                  [parts](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    Index offset = 0;
                    for (const auto& p : parts) {
                      g.accumulate(p, d.middleCols(offset, p.cols()));
                      offset += p.cols();
                    }
                  });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Index start, Index count) {
  if (start < 0 || count < 1 || start + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + to_string(a.shape()));
  }
  auto& g = *a.graph();
  return g.record(a.value().middleRows(start, count), {a},
                  [a, start, count](Graph<Scalar>& g, const Matrix<Scalar>& d,
                                    const Matrix<Scalar>&) {
                    if (auto* slot = g.grad_slot(a)) slot->middleRows(start, count) += d;
                  });
}

template <typename Scalar>
Var<Scalar> column(const Var<Scalar>& a, Index j) {
  if (j < 0 || j >= a.cols()) {
    throw DimensionError("column " + std::to_string(j) + " outside " + to_string(a.shape()));
  }
  auto& g = *a.graph();
  return g.record(a.value().col(j), {a},
                  [a, j](Graph<Scalar>& g, const Matrix<Scalar>& d, const Matrix<Scalar>&) {
                    if (auto* slot = g.grad_slot(a)) slot->col(j) += d;
                  });
}

}  // namespace snmt
