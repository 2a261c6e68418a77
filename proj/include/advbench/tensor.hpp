#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "advbench/errors.hpp"

namespace advbench {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor. Storage is an Eigen column vector so elementwise
// work can use Eigen expressions and matmuls can map it without copies.
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape)
      : shape_(std::move(shape)), data_(Vector::Zero(checked_size(shape_))) {}

  BasicTensor(Shape shape, Vector data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != checked_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), from_list(values)) {}

  static BasicTensor filled(Shape shape, Scalar value) {
    const std::size_t n = checked_size(shape);
    return BasicTensor(std::move(shape), Vector::Constant(n, value));
  }

  static BasicTensor vector(std::initializer_list<Scalar> values) {
    return BasicTensor(Shape{values.size()}, from_list(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  Vector& values() { return data_; }
  const Vector& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const {
    return data_[static_cast<Eigen::Index>(i)];
  }

  // Row-major (h, w, c) access for rank-3 image-like tensors.
  Scalar& at(std::size_t h, std::size_t w, std::size_t c) {
    return (*this)[(h * shape_[1] + w) * shape_[2] + c];
  }
  Scalar at(std::size_t h, std::size_t w, std::size_t c) const {
    return (*this)[(h * shape_[1] + w) * shape_[2] + c];
  }

  BasicTensor reshaped(Shape shape) const {
    return BasicTensor(std::move(shape), data_);
  }

  bool all_finite() const { return data_.allFinite(); }

  bool operator==(const BasicTensor& other) const {
    return shape_ == other.shape_ && data_.size() == other.data_.size() &&
           data_ == other.data_;
  }

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor extents must be positive: " +
                                   shape_string(shape));
    }
    return shape_size(shape);
  }

  static Vector from_list(std::initializer_list<Scalar> values) {
    Vector v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (Scalar s : values) v[i++] = s;
    return v;
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<double>;

template <typename Scalar>
Scalar max_abs_difference(const BasicTensor<Scalar>& a,
                          const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

}  // namespace advbench
