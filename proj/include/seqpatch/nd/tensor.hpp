#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace seqpatch {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised when operand extents do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Index element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major n-d array. `grad` stays empty until something accumulates into it.
template <typename Scalar>
struct Tensor {
  Shape shape;
  Vector<Scalar> data;
  bool requires_grad = false;
  Vector<Scalar> grad;

  Tensor() = default;

  explicit Tensor(Shape s) : shape(std::move(s)), data(Vector<Scalar>::Zero(element_count(shape))) {}

  Tensor(Shape s, Vector<Scalar> values) : shape(std::move(s)), data(std::move(values)) {
    if (element_count(shape) != data.size())
      throw DimensionError("tensor payload of " + std::to_string(data.size()) +
                           " scalars does not fit shape " + to_string(shape));
  }

  static Tensor constant(Shape s, Scalar value) {
    Tensor t(std::move(s));
    t.data.setConstant(value);
    return t;
  }

  Index size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  Index dim(std::size_t axis) const { return shape.at(axis); }

  bool has_grad() const { return grad.size() == data.size() && data.size() > 0; }

  void zero_grad() { grad = Vector<Scalar>::Zero(data.size()); }

  bool all_finite() const {
    return data.allFinite() && (grad.size() == 0 || grad.allFinite());
  }

  Eigen::Map<RowMatrix<Scalar>> as_matrix(Index rows, Index cols) {
    if (rows * cols != data.size()) throw DimensionError("matrix view does not cover tensor");
    return {data.data(), rows, cols};
  }
  Eigen::Map<const RowMatrix<Scalar>> as_matrix(Index rows, Index cols) const {
    if (rows * cols != data.size()) throw DimensionError("matrix view does not cover tensor");
    return {data.data(), rows, cols};
  }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape, data.template cast<To>());
  }
};

}  // namespace seqpatch
