#pragma once

#include <cmath>
#include <vector>

#include "tnas/core/diff_array.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/core/rng.hpp"

namespace tnas::testing {

inline std::vector<double> normal_values(Rng& rng, std::int64_t n, double sd = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = sd * rng.normal();
  return v;
}

inline DiffArray random_param(Rng& rng, Shape shape, double sd = 1.0) {
  const auto n = numel(shape);
  return DiffArray::parameter(std::move(shape), normal_values(rng, n, sd), DType::F64);
}

inline DiffArray random_array(Rng& rng, Shape shape, double sd = 1.0) {
  const auto n = numel(shape);
  return DiffArray::from(std::move(shape), normal_values(rng, n, sd), DType::F64);
}

inline DiffArray random_simplex(Rng& rng, std::int64_t n, bool requires_grad = false) {
  std::vector<double> v(static_cast<std::size_t>(n));
  double s = 0.0;
  for (auto& x : v) {
    x = -std::log(rng.uniform_open());
    s += x;
  }
  for (auto& x : v) x /= s;
  return requires_grad ? DiffArray::parameter({n}, v, DType::F64)
                       : DiffArray::from({n}, v, DType::F64);
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

/// Scalar loss sum(y * r) with a fixed random r, so every output entry matters.
inline DiffArray project(const DiffArray& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(y, random_array(rng, y.shape())));
}

}  // namespace tnas::testing
