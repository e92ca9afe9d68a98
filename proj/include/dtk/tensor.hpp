#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dtk/error.hpp"

namespace dtk {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_product(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Row-major strides; the last axis has stride 1.
inline Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t k = shape.size(); k-- > 1;) strides[k - 1] = strides[k] * shape[k];
  return strides;
}

/// Dense row-major N-d array. `float` is the training precision, `double`
/// is used for finite-difference gradient checks.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMajorMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

  Tensor() : shape_{0} {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_ = Vector::Zero(shape_product(shape_));
  }

  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != shape_product(shape_)) {
      throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " +
                       std::to_string(shape_product(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), Scalar(1)); }

  static Tensor from_values(Shape shape, std::span<const Scalar> values) {
    if (static_cast<Index>(values.size()) != shape_product(shape)) {
      throw ShapeError("from_values: shape " + shape_string(shape) + " needs " +
                       std::to_string(shape_product(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    Vector data(static_cast<Index>(values.size()));
    std::copy(values.begin(), values.end(), data.data());
    return Tensor(std::move(shape), std::move(data));
  }

  static Tensor from_values(Shape shape, std::initializer_list<Scalar> values) {
    return from_values(std::move(shape), std::span<const Scalar>(values.begin(), values.size()));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  Shape strides() const { return row_major_strides(shape_); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> span() const {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }
  std::vector<Scalar> to_values() const { return {data_.data(), data_.data() + data_.size()}; }

  Vector& vec() { return data_; }
  const Vector& vec() const { return data_; }

  /// Views the data as a row-major rows x cols matrix (rows * cols == size()).
  MatrixMap matrix(Index rows, Index cols) {
    check_matrix_view(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_matrix_view(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  Scalar& operator[](Index flat) { return data_[flat]; }
  Scalar operator[](Index flat) const { return data_[flat]; }

  template <typename... Ix>
  Scalar& operator()(Ix... ix) {
    return data_[offset({static_cast<Index>(ix)...})];
  }
  template <typename... Ix>
  Scalar operator()(Ix... ix) const {
    return data_[offset({static_cast<Index>(ix)...})];
  }

  Index offset(std::initializer_list<Index> ix) const {
    Index flat = 0;
    std::size_t k = 0;
    for (Index i : ix) flat = flat * shape_[k++] + i;
    return flat;
  }

  Tensor reshaped(Shape shape) const {
    if (shape_product(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  static void check_extents(const Shape& shape) {
    for (Index e : shape) {
      if (e < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    }
  }

  void check_matrix_view(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("matrix view " + std::to_string(rows) + "x" + std::to_string(cols) +
                       " over tensor " + shape_string(shape_));
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename Scalar>
const Tensor<Scalar>& require_finite(const Tensor<Scalar>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + " produced a non-finite value");
  return t;
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.vec() + b.vec());
  require_finite(out, "add");
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "sub");
  Tensor<Scalar> out(a.shape(), a.vec() - b.vec());
  require_finite(out, "sub");
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.vec().cwiseProduct(b.vec()));
  require_finite(out, "mul");
  return out;
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), (a.vec().array() + s).matrix());
  require_finite(out, "add_scalar");
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul_scalar(const Tensor<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), a.vec() * s);
  require_finite(out, "mul_scalar");
  return out;
}

/// 2-D matrix product: [M,K] x [K,N] -> [M,N].
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor<Scalar> out({a.dim(0), b.dim(1)});
  out.matrix(a.dim(0), b.dim(1)).noalias() =
      a.matrix(a.dim(0), a.dim(1)) * b.matrix(b.dim(0), b.dim(1));
  require_finite(out, "matmul");
  return out;
}

/// Sum of all entries, accumulated left to right in storage order.
template <typename Scalar>
Scalar sum(const Tensor<Scalar>& a) {
  Scalar acc = 0;
  for (Scalar v : a.span()) acc += v;
  return acc;
}

}  // namespace dtk
