#include "tnas/core/diff_array.hpp"

#include <atomic>
#include <bit>
#include <sstream>

#include "tnas/core/errors.hpp"

namespace tnas {

namespace {
std::atomic<DType> g_default_dtype{DType::F64};

double round_value(double v, DType dtype) {
  return dtype == DType::F32 ? static_cast<double>(static_cast<float>(v)) : v;
}
}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

DType default_dtype() { return g_default_dtype.load(); }
void set_default_dtype(DType dtype) { g_default_dtype.store(dtype); }

DiffArray DiffArray::zeros(Shape shape, DType dtype) {
  return from(shape, std::vector<double>(static_cast<std::size_t>(tnas::numel(shape)), 0.0),
              dtype);
}

DiffArray DiffArray::full(Shape shape, double value, DType dtype) {
  return from(shape, std::vector<double>(static_cast<std::size_t>(tnas::numel(shape)), value),
              dtype);
}

DiffArray DiffArray::from(Shape shape, std::vector<double> values, DType dtype) {
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("extents must be positive, got " + shape_str(shape));
  }
  if (static_cast<std::int64_t>(values.size()) != tnas::numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->dtype = dtype;
  DiffArray out(std::move(node));
  out.round_to_dtype();
  return out;
}

DiffArray DiffArray::scalar(double value, DType dtype) { return from({1}, {value}, dtype); }

DiffArray DiffArray::parameter(Shape shape, std::vector<double> values, DType dtype) {
  auto out = from(std::move(shape), std::move(values), dtype);
  out.node_->requires_grad = true;
  return out;
}

detail::Node& DiffArray::checked() const {
  if (!node_) throw PreconditionError("use of an undefined DiffArray");
  return *node_;
}

const Shape& DiffArray::shape() const { return checked().shape; }

std::int64_t DiffArray::dim(std::int64_t axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<std::int64_t>(s.size());
  if (axis < 0 || axis >= static_cast<std::int64_t>(s.size())) {
    throw RangeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t DiffArray::numel() const { return static_cast<std::int64_t>(checked().values.size()); }
DType DiffArray::dtype() const { return checked().dtype; }
std::span<const double> DiffArray::values() const { return checked().values; }
std::span<double> DiffArray::mutable_values() { return checked().values; }

double DiffArray::item() const {
  const auto& n = checked();
  if (n.values.size() != 1) {
    throw DimensionError("item() needs a single-element array, got " + shape_str(n.shape));
  }
  return n.values[0];
}

double DiffArray::operator[](std::int64_t flat_index) const {
  const auto& n = checked();
  if (flat_index < 0 || flat_index >= static_cast<std::int64_t>(n.values.size())) {
    throw RangeError("flat index " + std::to_string(flat_index) + " out of range");
  }
  return n.values[static_cast<std::size_t>(flat_index)];
}

bool DiffArray::requires_grad() const { return checked().requires_grad; }
void DiffArray::set_requires_grad(bool flag) { checked().requires_grad = flag; }
bool DiffArray::is_leaf() const { return checked().is_leaf; }

bool DiffArray::has_adjoint() const { return !checked().grad.empty(); }

std::span<const double> DiffArray::adjoint() const {
  const auto& n = checked();
  if (n.grad.empty()) throw NotReadyError("array has no adjoint " + shape_str(n.shape));
  return n.grad;
}

std::span<double> DiffArray::mutable_adjoint() {
  auto& n = checked();
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

void DiffArray::clear_adjoint() {
  auto& n = checked();
  n.grad.clear();
  n.grad.shrink_to_fit();
}

DiffArray DiffArray::detach() const {
  const auto& n = checked();
  return from(n.shape, n.values, n.dtype);
}

DiffArray DiffArray::clone() const {
  auto out = detach();
  out.node_->requires_grad = checked().requires_grad;
  return out;
}

void DiffArray::round_to_dtype() {
  auto& n = checked();
  if (n.dtype == DType::F32) {
    for (auto& v : n.values) v = round_value(v, n.dtype);
  }
}

std::uint64_t checksum(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

std::uint64_t checksum(const DiffArray& a) { return checksum(a.values()); }

}  // namespace tnas
