#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "snmt/error.hpp"

namespace snmt {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Shape = std::array<Index, 2>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[' << shape[0] << 'x' << shape[1] << ']';
  return os.str();
}

template <typename Derived>
Shape shape_of(const Eigen::EigenBase<Derived>& m) {
  return {m.rows(), m.cols()};
}

/// Dense row/column array with an optional gradient accumulator.
///
/// Vectors are stored as n x 1 columns and scalars as 1 x 1, so every
/// tensor is a matrix as far as Eigen is concerned. The gradient exists iff
/// requires_grad() and always has the shape of the value.
template <typename Scalar>
class Tensor {
 public:
  using MatrixType = Matrix<Scalar>;

  Tensor() = default;

  explicit Tensor(MatrixType value, bool requires_grad = false)
      : value_(std::move(value)) {
    if (value_.rows() < 1 || value_.cols() < 1) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           to_string(shape_of(value_)));
    }
    set_requires_grad(requires_grad);
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return Tensor(MatrixType::Zero(rows, cols), requires_grad);
  }

  Shape shape() const { return shape_of(value_); }
  Index rows() const { return value_.rows(); }
  Index cols() const { return value_.cols(); }
  Index size() const { return value_.size(); }
  bool empty() const { return value_.size() == 0; }

  const MatrixType& value() const { return value_; }
  MatrixType& value() { return value_; }

  bool requires_grad() const { return requires_grad_; }

  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) {
      grad_ = MatrixType::Zero(value_.rows(), value_.cols());
    } else {
      grad_.resize(0, 0);
    }
  }

  const MatrixType& grad() const {
    if (!requires_grad_) throw Error("tensor does not track gradients");
    return grad_;
  }
  MatrixType& grad() {
    if (!requires_grad_) throw Error("tensor does not track gradients");
    return grad_;
  }

  void zero_grad() {
    if (requires_grad_) grad_.setZero();
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(value_.template cast<Other>(), requires_grad_);
  }

 private:
  MatrixType value_;
  MatrixType grad_;
  bool requires_grad_ = false;
};

/// Numerically stable softmax over every entry of `logits`.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw DomainError("softmax of an empty tensor");
  if (!logits.allFinite()) throw DomainError("softmax input contains non-finite values");
  const Scalar shift = logits.maxCoeff();
  Matrix<Scalar> out = (logits.array() - shift).exp().matrix();
  out /= out.sum();
  return out;
}

/// log(softmax(logits)) via log-sum-exp.
template <typename Derived>
Matrix<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw DomainError("log_softmax of an empty tensor");
  if (!logits.allFinite()) throw DomainError("log_softmax input contains non-finite values");
  const Scalar shift = logits.maxCoeff();
  const Scalar log_norm = shift + std::log((logits.array() - shift).exp().sum());
  return (logits.array() - log_norm).matrix();
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& v) {
  return Tensor<Scalar>(softmax(v.value()));
}

}  // namespace snmt
