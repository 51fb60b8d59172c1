#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace angio {

using Index = Eigen::Index;

/// Thrown when tensor dimensions violate an operation's contract.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when input data is unusable (non-finite values, out-of-range pixels).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NCHW extent. All tensors in the library are 4-d; scalars are 1x1x1x1.
struct Shape {
  Index n = 1;
  Index c = 1;
  Index h = 1;
  Index w = 1;

  constexpr Index numel() const { return n * c * h * w; }
  constexpr Index plane() const { return h * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

/// Dense NCHW tensor with contiguous storage backed by an Eigen array.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.numel())) {}
  Tensor(const Shape& shape, Scalar fill) : shape_(shape), data_(Array::Constant(shape.numel(), fill)) {}
  Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) throw ShapeError("tensor data size does not match shape " + shape.str());
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator()(Index n, Index c, Index y, Index x) { return data_[offset(n, c, y, x)]; }
  Scalar operator()(Index n, Index c, Index y, Index x) const { return data_[offset(n, c, y, x)]; }

  /// Scalar value of a 1-element tensor.
  Scalar item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
    return data_[0];
  }

  /// H x W row-major view of one channel plane.
  MatrixMap<Scalar> plane(Index n, Index c) { return {data() + offset(n, c, 0, 0), shape_.h, shape_.w}; }
  ConstMatrixMap<Scalar> plane(Index n, Index c) const {
    return {data() + offset(n, c, 0, 0), shape_.h, shape_.w};
  }

  /// C x (H*W) row-major view of one sample.
  MatrixMap<Scalar> sample_matrix(Index n) { return {data() + offset(n, 0, 0, 0), shape_.c, shape_.plane()}; }
  ConstMatrixMap<Scalar> sample_matrix(Index n) const {
    return {data() + offset(n, 0, 0, 0), shape_.c, shape_.plane()};
  }

  void set_zero() { data_.setZero(); }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  Index offset(Index n, Index c, Index y, Index x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

 private:
  Shape shape_{0, 0, 0, 0};
  Array data_;
};

}  // namespace angio
