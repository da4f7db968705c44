#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gridnet/errors.hpp"

namespace gridnet {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Dense n-dimensional array with row-major layout, innermost axis last.
// Carrier for images, feature maps, parameters and gradients.
template <typename Scalar>
class Tensor {
 public:
  using Values = Eigen::Vector<Scalar, Eigen::Dynamic>;
  using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    values_.setZero(checked_numel(shape_));
  }

  Tensor(Shape shape, Values values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != checked_numel(shape_)) {
      throw DimensionError("tensor: " + std::to_string(values_.size()) +
                           " values do not fill shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor constant(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    t.values_.setConstant(v);
    return t;
  }

  static Tensor from_values(Shape shape, std::vector<Scalar> v) {
    return Tensor(std::move(shape),
                  Eigen::Map<const Values>(v.data(), static_cast<Index>(v.size())));
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index extent(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  Index size() const { return values_.size(); }

  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Values& vec() { return values_; }
  const Values& vec() const { return values_; }

  ArrayMap array() { return ArrayMap(values_.data(), values_.size()); }
  ConstArrayMap array() const { return ConstArrayMap(values_.data(), values_.size()); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  // Multi-index access; row-major strides. Test and setup convenience,
  // hot paths index flat storage directly.
  template <typename... Ix>
  Scalar& at(Ix... ix) {
    return values_[offset_of({static_cast<Index>(ix)...})];
  }
  template <typename... Ix>
  Scalar at(Ix... ix) const {
    return values_[offset_of({static_cast<Index>(ix)...})];
  }

  void fill(Scalar v) { values_.setConstant(v); }
  void set_zero() { values_.setZero(); }

  // Same data, new shape; element count must be preserved.
  Tensor reshaped(Shape shape) const {
    if (numel(shape) != values_.size()) {
      throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape) +
                           " changes element count");
    }
    return Tensor(std::move(shape), values_);
  }

  bool all_finite() const { return values_.allFinite(); }

  void check_finite(const char* context) const {
    if (!all_finite()) {
      throw NumericError(std::string(context) + ": non-finite values in tensor " +
                         shape_str(shape_));
    }
  }

 private:
  static Index checked_numel(const Shape& shape) {
    for (Index e : shape) {
      if (e <= 0) throw DimensionError("tensor: non-positive extent in " + shape_str(shape));
    }
    return numel(shape);
  }

  Index offset_of(std::initializer_list<Index> ix) const {
    Index off = 0;
    std::size_t a = 0;
    for (Index i : ix) {
      off = off * shape_[a] + i;
      ++a;
    }
    return off;
  }

  Shape shape_;
  Values values_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace gridnet
