#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnas/core/checkpoint.hpp"
#include "tnas/core/rng.hpp"
#include "tnas/spaces/supernet.hpp"
#include "tnas/superposition/entangled.hpp"

namespace tnas {

struct AffineOptions {
  bool conv = false;
  std::int64_t stride = 1;
  std::int64_t dilation = 1;
  /// groups == input channels; storage axis 1 must be 1
  bool depthwise = false;
  bool bias = true;
  /// init std = gain / sqrt(fan-in of the maximal weight)
  double gain = 1.0;
};

/// A linear or convolution weight searched over a few local dims.
///
/// WE keeps one EntangledParameter. WS keeps one independent tensor per
/// combination of the local dims, initialised from the same maximal draw
/// as WE would use, so the two modes start tied for equal seeds.
///
/// Storage axis 1 (input features) may be left untargeted; paths then
/// slice it to whatever width arrives, which is how a layer follows the
/// channel choice of the layer before it.
class AffineSite {
 public:
  AffineSite() = default;
  AffineSite(std::string name, SupernetMode mode, Shape storage, std::vector<ChoiceDim> dims,
             std::vector<std::int64_t> units, AffineOptions opt, Rng& rng,
             DType dtype = default_dtype());

  /// x carries the full input width; mixes holds one simplex per local dim.
  DiffArray mix(const DiffArray& x, const MixtureWeights& mixes) const;
  DiffArray path(const DiffArray& x, const std::vector<std::int64_t>& choice,
                 PathWeights& pw) const;

  void collect(std::vector<NamedTensor>& out) const;
  const std::string& name() const { return name_; }
  const EntangledParameter& entangled() const { return ep_; }
  const std::vector<DiffArray>& separate_weights() const { return ws_w_; }
  std::int64_t output_extent() const { return ep_.storage().dim(0); }

 private:
  DiffArray apply(const DiffArray& x, const DiffArray& w, const DiffArray& b,
                  std::int64_t kernel) const;
  std::int64_t combo_index(const std::vector<std::int64_t>& choice) const;
  DiffArray fit_input(const DiffArray& x, std::int64_t width) const;

  std::string name_;
  SupernetMode mode_ = SupernetMode::WE;
  AffineOptions opt_;
  bool axis1_targeted_ = false;
  EntangledParameter ep_;  // in WS only its slicing rules are used
  std::vector<DiffArray> ws_w_, ws_b_;
};

/// Layer norm over an embed dim: gamma/beta of the maximal width sliced to
/// the leading e entries (WE) or separate per width (WS).
class NormSite {
 public:
  NormSite() = default;
  NormSite(std::string name, SupernetMode mode, ChoiceDim dim, DType dtype = default_dtype());

  /// x[N, E_max] -> sum_e w_e * pad(LN(x[:, :e]))
  DiffArray mix(const DiffArray& x, const DiffArray& w) const;
  DiffArray path(const DiffArray& x, std::int64_t choice, PathWeights& pw) const;
  void collect(std::vector<NamedTensor>& out) const;

 private:
  std::string name_;
  SupernetMode mode_ = SupernetMode::WE;
  ChoiceDim dim_;
  std::vector<DiffArray> gamma_, beta_;  // WE: one entry of the max width
};

/// Embedding table [V, E_max] with the embed dim on axis 1.
class EmbedSite {
 public:
  EmbedSite() = default;
  EmbedSite(std::string name, SupernetMode mode, std::int64_t rows, ChoiceDim dim, double std,
            Rng& rng, DType dtype = default_dtype());

  DiffArray mix(std::span<const std::int32_t> ids, const DiffArray& w) const;
  DiffArray path(std::span<const std::int32_t> ids, std::int64_t choice, PathWeights& pw) const;
  void collect(std::vector<NamedTensor>& out) const;

 private:
  std::string name_;
  SupernetMode mode_ = SupernetMode::WE;
  ChoiceDim dim_;
  std::vector<DiffArray> tables_;
};

/// Whole tensor through a path provider (unsearched weights).
DiffArray use_whole(PathWeights& pw, const std::string& key, const DiffArray& t);
/// Leading zero-pad of axis `axis` up to `extent`.
DiffArray pad_axis(const DiffArray& x, std::int64_t axis, std::int64_t extent);
/// Leading slice of axis `axis` down to `extent`.
DiffArray take_axis(const DiffArray& x, std::int64_t axis, std::int64_t extent);
/// Independent N(0, std^2) leaf.
DiffArray random_weight(const Shape& shape, double std, Rng& rng, DType dtype = default_dtype());

}  // namespace tnas
