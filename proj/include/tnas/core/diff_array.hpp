#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tnas {

using Shape = std::vector<std::int64_t>;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Precision used for arrays created without an explicit dtype.
DType default_dtype();
void set_default_dtype(DType dtype);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  // Empty until something accumulates into it.
  std::vector<double> grad;
  DType dtype = DType::F64;
  bool requires_grad = false;
  bool is_leaf = true;
};

}  // namespace detail

/// Dense row-major real array with an optional adjoint.
///
/// DiffArray is a cheap handle: copies share the same storage. Values are
/// held in double precision; arrays tagged F32 are rounded to float after
/// every primitive so they follow single-precision arithmetic.
class DiffArray {
 public:
  DiffArray() = default;

  static DiffArray zeros(Shape shape, DType dtype = default_dtype());
  static DiffArray full(Shape shape, double value, DType dtype = default_dtype());
  static DiffArray from(Shape shape, std::vector<double> values, DType dtype = default_dtype());
  static DiffArray scalar(double value, DType dtype = default_dtype());
  /// Leaf with requires_grad set.
  static DiffArray parameter(Shape shape, std::vector<double> values,
                             DType dtype = default_dtype());

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const;
  DType dtype() const;

  std::span<const double> values() const;
  /// Direct write access; intended for leaves (initialisation, optimiser steps).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::int64_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_adjoint() const;
  std::span<const double> adjoint() const;
  std::span<double> mutable_adjoint();
  void clear_adjoint();

  /// New leaf sharing nothing with this array, without gradient tracking.
  DiffArray detach() const;
  /// Deep copy that keeps requires_grad.
  DiffArray clone() const;
  /// Rounds values in place to the array's dtype.
  void round_to_dtype();

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit DiffArray(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  detail::Node& checked() const;
  std::shared_ptr<detail::Node> node_;
};

/// FNV-1a over the raw bits of the values; equal checksums mean bit-identical arrays (modulo collisions).
std::uint64_t checksum(const DiffArray& a);
std::uint64_t checksum(std::span<const double> values);

}  // namespace tnas
