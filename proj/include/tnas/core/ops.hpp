#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tnas/core/diff_array.hpp"

namespace tnas {

enum class Alignment : std::uint8_t { Leading, Centered };

/// Half-open window [start, start + extent) on one axis.
struct Window {
  std::int64_t start = 0;
  std::int64_t extent = 0;
};

struct Conv2dOptions {
  std::int64_t stride = 1;
  std::int64_t dilation = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;
};

/// Spatial output extent of a convolution; throws DimensionError when non-positive.
std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, const Conv2dOptions& opt);

// Linear algebra ------------------------------------------------------------

DiffArray matmul(const DiffArray& a, const DiffArray& b);
/// x[N,in] . W[out,in]^T + bias[out]; bias may be undefined.
DiffArray linear(const DiffArray& x, const DiffArray& weight, const DiffArray& bias = {});
DiffArray transpose(const DiffArray& a);

/// Cross-correlation. input [N,Cin,H,W], kernel [Cout,Cin/groups,k,k].
DiffArray conv2d(const DiffArray& input, const DiffArray& kernel, const Conv2dOptions& opt);

// Structural ----------------------------------------------------------------

DiffArray zero_pad(const DiffArray& x, const Shape& target, std::span<const Alignment> alignment);
DiffArray slice_view(const DiffArray& x, std::span<const Window> windows);
DiffArray reshape(const DiffArray& x, Shape shape);
DiffArray concat(const std::vector<DiffArray>& parts, std::int64_t axis);
/// Windows of one axis-aligned sub-block placed by alignment inside `outer`.
std::vector<Window> aligned_windows(const Shape& inner, const Shape& outer,
                                    std::span<const Alignment> alignment);

// Elementwise ---------------------------------------------------------------

DiffArray add(const DiffArray& a, const DiffArray& b);
DiffArray sub(const DiffArray& a, const DiffArray& b);
DiffArray mul(const DiffArray& a, const DiffArray& b);
DiffArray scale(const DiffArray& x, double factor);
/// x * w[index] where w is any array; differentiable in both.
DiffArray scale_by(const DiffArray& x, const DiffArray& w, std::int64_t index = 0);
/// Adds bias[C] broadcast along `axis` of x.
DiffArray add_bias(const DiffArray& x, const DiffArray& bias, std::int64_t axis);
DiffArray add_n(const std::vector<DiffArray>& terms);
DiffArray relu(const DiffArray& x);
DiffArray gelu(const DiffArray& x);
DiffArray softplus(const DiffArray& x);
DiffArray square(const DiffArray& x);
DiffArray stop_gradient(const DiffArray& x);

// Reductions ----------------------------------------------------------------

DiffArray sum(const DiffArray& x);
DiffArray mean(const DiffArray& x);
/// [N,C,H,W] -> [N,C]
DiffArray global_avg_pool(const DiffArray& x);

// Probabilistic -------------------------------------------------------------

DiffArray softmax(const DiffArray& x, std::int64_t axis);
/// Mean negative log-likelihood of integer labels under row-wise softmax of logits[N,C].
DiffArray cross_entropy(const DiffArray& logits, std::span<const std::int32_t> labels);
/// x / sum(x) for a nonnegative vector.
DiffArray normalize_sum(const DiffArray& x);
/// Flattened outer product of vectors (row-major over the given order).
DiffArray outer_product(const std::vector<DiffArray>& vectors);

// Normalisation -------------------------------------------------------------

/// Per-sample, per-channel standardisation over H,W of x[N,C,H,W], then
/// gamma[C] * xhat + beta[C]. No running statistics.
DiffArray normalize_features(const DiffArray& x, const DiffArray& gamma, const DiffArray& beta,
                             double eps = 1e-5);
/// Row-wise standardisation of x[N,D] with affine gamma[D], beta[D].
DiffArray layer_norm(const DiffArray& x, const DiffArray& gamma, const DiffArray& beta,
                     double eps = 1e-5);

// Sequence models -----------------------------------------------------------

/// Rows of table[V,D] selected by ids -> [ids.size(), D].
DiffArray embedding(const DiffArray& table, std::span<const std::int32_t> ids);
/// q,k,v: [B*T, H*hd]; causal scaled dot-product attention per head.
DiffArray causal_attention(const DiffArray& q, const DiffArray& k, const DiffArray& v,
                           std::int64_t batch, std::int64_t seq, std::int64_t heads);

}  // namespace tnas
