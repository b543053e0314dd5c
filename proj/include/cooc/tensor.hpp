#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "cooc/errors.hpp"

namespace cooc {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Descriptor = Vector<Scalar>;

struct Shape {
  Index rows = 0;
  Index cols = 0;
  Index depth = 0;

  Index locations() const { return rows * cols; }
  Index size() const { return rows * cols * depth; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s.rows << 'x' << s.cols << 'x' << s.depth;
  return os.str();
}

/// Dense M x N x D tensor stored location-major with the channel index
/// varying fastest, i.e. element (i, j, k) lives at (i * N + j) * D + k.
///
/// The storage is exposed as a (M*N) x D row-major matrix so that one spatial
/// location is one row, which is the shape most of the pipeline wants.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  Tensor(Index rows, Index cols, Index depth) : Tensor(Shape{rows, cols, depth}) {}

  explicit Tensor(const Shape& shape) : shape_(shape) {
    if (shape.rows <= 0 || shape.cols <= 0 || shape.depth <= 0)
      throw DomainError("tensor dimensions must be positive, got " + to_string(shape));
    data_.setZero(shape.locations(), shape.depth);
  }

  Tensor(const Shape& shape, RowMatrix<T> data) : Tensor(shape) {
    if (data.rows() != shape.locations() || data.cols() != shape.depth)
      throw DimensionError("tensor payload does not match shape " + to_string(shape));
    data_ = std::move(data);
  }

  static Tensor Constant(const Shape& shape, T value) {
    Tensor t(shape);
    t.data_.setConstant(value);
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rows() const { return shape_.rows; }
  Index cols() const { return shape_.cols; }
  Index depth() const { return shape_.depth; }
  Index locations() const { return shape_.locations(); }
  Index size() const { return shape_.size(); }

  T& operator()(Index i, Index j, Index k) { return data_(i * shape_.cols + j, k); }
  const T& operator()(Index i, Index j, Index k) const { return data_(i * shape_.cols + j, k); }

  RowMatrix<T>& matrix() { return data_; }
  const RowMatrix<T>& matrix() const { return data_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, data_.template cast<U>());
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  RowMatrix<T> data_;
};

template <typename Scalar>
using ActivationTensor = Tensor<Scalar>;

template <typename Scalar>
using CoocTensor = Tensor<Scalar>;

/// {0,1}-valued tensor marking activations above a threshold.
using BinaryMask = Tensor<std::uint8_t>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b))
    throw DimensionError(std::string(what) + ": shape " + to_string(a) + " vs " + to_string(b));
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.matrix().allFinite();
}

/// Arithmetic mean over every element of the tensor.
template <typename Scalar>
Scalar mean_activation(const Tensor<Scalar>& t) {
  // Accumulate in double: a 32x24x512 float sum loses digits otherwise.
  return static_cast<Scalar>(t.matrix().template cast<double>().sum() /
                             static_cast<double>(t.size()));
}

/// 1 where the activation is strictly greater than `threshold`.
template <typename Scalar>
BinaryMask threshold_mask(const Tensor<Scalar>& t, Scalar threshold) {
  if (!std::isfinite(static_cast<double>(threshold)))
    throw DomainError("threshold must be finite");
  return BinaryMask(t.shape(), (t.matrix().array() > threshold).template cast<std::uint8_t>());
}

template <typename Scalar>
Tensor<Scalar> apply_mask(const Tensor<Scalar>& t, const BinaryMask& mask) {
  require_same_shape(t.shape(), mask.shape(), "apply_mask");
  RowMatrix<Scalar> out =
      t.matrix().array() * mask.matrix().template cast<Scalar>().array();
  return Tensor<Scalar>(t.shape(), std::move(out));
}

/// Unit-norm copy of `v`. The zero vector is returned unchanged with a warning,
/// since an image whose activations all fall below threshold is legal input.
template <typename Derived>
auto l2norm(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out = v;
  const Scalar norm = out.norm();
  if (norm == Scalar(0)) {
    warn("degenerate descriptor: zero vector left unnormalized");
    return out;
  }
  out /= norm;
  return out;
}

}  // namespace cooc
