#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tnas/core/diff_array.hpp"
#include "tnas/core/ops.hpp"

namespace tnas {

/// One searchable dimension (kernel size, channel count, ratio, ...).
///
/// Every target axis of the stored tensor is sized by the product of the
/// choice values of all dims targeting it, times a per-axis unit; an axis no
/// dim targets keeps its full extent.
struct ChoiceDim {
  std::string name;
  std::vector<std::int64_t> choices;
  std::vector<std::size_t> target_axes;
  Alignment alignment = Alignment::Leading;

  std::int64_t max_choice() const { return choices.back(); }
  std::size_t size() const { return choices.size(); }
};

/// Throws ConfigError unless choices are positive, strictly increasing and >= 2.
void validate_choice_dim(const ChoiceDim& dim);

/// Maximal weight tensor plus the slicing rules for its choice dims.
/// An optional bias follows the rule of storage axis 0 (the output axis).
class EntangledParameter {
 public:
  EntangledParameter() = default;
  /// `units[a]` multiplies the choice product on axis a (default 1).
  EntangledParameter(std::string name, DiffArray storage, std::vector<ChoiceDim> dims,
                     DiffArray bias = {}, std::vector<std::int64_t> units = {});

  const std::string& name() const { return name_; }
  const DiffArray& storage() const { return storage_; }
  const DiffArray& bias() const { return bias_; }
  bool has_bias() const { return bias_.defined(); }
  const std::vector<ChoiceDim>& dims() const { return dims_; }
  std::int64_t param_count() const;

  /// Per-axis windows selected by `assignment` (one index per dim).
  std::vector<Window> windows(const std::vector<std::int64_t>& assignment) const;
  /// Alignment of each storage axis.
  std::vector<Alignment> alignments() const;

  /// Number of combinations of the dims and the assignment of combination j
  /// (row-major, first dim slowest).
  std::int64_t combo_count() const;
  std::vector<std::int64_t> combo_assignment(std::int64_t j) const;
  std::vector<std::int64_t> max_assignment() const;

 private:
  std::string name_;
  DiffArray storage_;
  DiffArray bias_;
  std::vector<ChoiceDim> dims_;
  std::vector<std::int64_t> units_;
};

/// Simplex-valued weights, one vector per choice dim.
using MixtureWeights = std::vector<DiffArray>;

/// Throws NormalizationError unless entries are >= 0 and sum to 1 within 1e-6.
void validate_simplex(const DiffArray& mix);

DiffArray slice_choice(const EntangledParameter& ep, const std::vector<std::int64_t>& assignment);
DiffArray slice_bias(const EntangledParameter& ep, const std::vector<std::int64_t>& assignment);

/// sum_i mix[i] * zero_pad(slice_choice(ep, i)) for a single-dim parameter.
DiffArray superpose(const EntangledParameter& ep, const DiffArray& mix);

struct Superposed {
  DiffArray weight;
  DiffArray bias;  // undefined when ep has no bias
};

/// Sum over the cross product of dims of (product of per-dim weights) times
/// the zero-padded slice of that combination; bias handled identically.
Superposed combi_superpose(const EntangledParameter& ep, const MixtureWeights& mixes);

/// Fused primitive behind superposition: sum_j c[j] * pad(storage[windows[j]]).
DiffArray weighted_window_sum(const DiffArray& storage, const DiffArray& coeffs,
                              const std::vector<std::vector<Window>>& windows);

/// x[., E_max] through the superposed affine layer.
DiffArray mixture_linear(const DiffArray& x, const EntangledParameter& ep,
                         const MixtureWeights& mixes);

/// One convolution with the superposed kernel. Padding is fixed against the
/// largest kernel so every kernel choice yields the same spatial extent.
DiffArray mixture_conv2d(const DiffArray& x, const EntangledParameter& ep,
                         const MixtureWeights& mixes, std::int64_t stride = 1,
                         std::int64_t dilation = 1);

}  // namespace tnas
