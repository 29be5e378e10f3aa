#include "tnas/spaces/conv_macro.hpp"

#include <cmath>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/spaces/sites.hpp"

namespace tnas {

std::vector<std::vector<std::int64_t>> conv_macro_channels() {
  return {{8, 16, 32}, {16, 32, 64}, {32, 64, 128}, {64, 128, 256}};
}

namespace {

class ConvMacro final : public Supernet {
 public:
  explicit ConvMacro(const ConvMacroConfig& cfg) : cfg_(cfg) {
    if (cfg.channel_divisor < 1 || cfg.num_classes < 2 || cfg.in_channels < 1 ||
        cfg.strides.size() != 4 || cfg.image_size < 1) {
      throw ConfigError("conv-macro: invalid configuration");
    }
    spec_.id = "toy_conv_macro";
    spec_.topology = "layer stack: 4 x (conv, relu), global pool, linear";
    spec_.dataset_kind = "image";
    Rng rng(cfg.seed);
    std::int64_t cin = cfg.in_channels;
    const auto published = conv_macro_channels();
    for (std::size_t l = 0; l < 4; ++l) {
      const std::string p = "l" + std::to_string(l + 1);
      ChoiceDim k{p + "/kernel", cfg.kernels, {2, 3}, Alignment::Centered};
      ChoiceDim c{p + "/channels", {}, {0}, Alignment::Leading};
      for (auto v : published[l]) {
        if (v % cfg.channel_divisor != 0) throw ConfigError("conv-macro: divisor does not divide channels");
        c.choices.push_back(v / cfg.channel_divisor);
      }
      validate_choice_dim(k);
      validate_choice_dim(c);
      spec_.sites.push_back({p, {spec_.dims.size(), spec_.dims.size() + 1}});
      spec_.dims.push_back(k);
      spec_.dims.push_back(c);
      const std::int64_t kmax = k.max_choice(), cmax = c.max_choice();
      AffineOptions opt{.conv = true, .stride = cfg.strides[l], .gain = std::sqrt(2.0)};
      layers_.emplace_back(p, cfg.mode, Shape{cmax, cin, kmax, kmax}, std::vector<ChoiceDim>{k, c},
                           std::vector<std::int64_t>{}, opt, rng, cfg.dtype);
      cin = cmax;
    }
    head_ = AffineSite("head", cfg.mode, Shape{cfg.num_classes, cin}, {}, {}, AffineOptions{}, rng,
                       cfg.dtype);
  }

  const SearchSpaceSpec& spec() const override { return spec_; }
  SupernetMode mode() const override { return cfg_.mode; }

  DiffArray forward_mixture(const Batch& batch, const MixtureWeights& mixes) const override {
    if (mixes.size() != spec_.dims.size()) throw ConfigError("conv-macro: one mixture per dim");
    auto x = batch.inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      x = relu(layers_[l].mix(x, {mixes[2 * l], mixes[2 * l + 1]}));
    }
    return head_.mix(global_avg_pool(x), {});
  }

  DiffArray forward_path(const Batch& batch, const Architecture& arch,
                         PathWeights& pw) const override {
    const auto idx = arch.indices(spec_);
    auto x = batch.inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      x = relu(layers_[l].path(x, {idx[2 * l], idx[2 * l + 1]}, pw));
    }
    return head_.path(global_avg_pool(x), {}, pw);
  }

  std::vector<NamedTensor> parameters() const override {
    std::vector<NamedTensor> out;
    for (const auto& l : layers_) l.collect(out);
    head_.collect(out);
    return out;
  }

  Batch probe_batch() const override {
    Batch b;
    b.inputs = DiffArray::zeros({1, cfg_.in_channels, cfg_.image_size, cfg_.image_size}, cfg_.dtype);
    b.batch = 1;
    b.labels = {0};
    return b;
  }

 private:
  ConvMacroConfig cfg_;
  SearchSpaceSpec spec_;
  std::vector<AffineSite> layers_;
  AffineSite head_;
};

}  // namespace

SupernetPtr build_toy_conv_macro(const ConvMacroConfig& cfg) {
  return std::make_shared<ConvMacro>(cfg);
}

}  // namespace tnas
