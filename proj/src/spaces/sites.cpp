#include "tnas/spaces/sites.hpp"

#include <cmath>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"

namespace tnas {

DiffArray random_weight(const Shape& shape, double std, Rng& rng, DType dtype) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = std * rng.normal();
  return DiffArray::parameter(shape, std::move(v), dtype);
}

DiffArray use_whole(PathWeights& pw, const std::string& key, const DiffArray& t) {
  std::vector<Window> w;
  for (auto e : t.shape()) w.push_back({0, e});
  return pw.get(key, t, w);
}

DiffArray pad_axis(const DiffArray& x, std::int64_t axis, std::int64_t extent) {
  if (x.dim(axis) == extent) return x;
  Shape target = x.shape();
  target[static_cast<std::size_t>(axis)] = extent;
  const std::vector<Alignment> al(target.size(), Alignment::Leading);
  return zero_pad(x, target, al);
}

DiffArray take_axis(const DiffArray& x, std::int64_t axis, std::int64_t extent) {
  if (x.dim(axis) == extent) return x;
  std::vector<Window> w;
  for (auto e : x.shape()) w.push_back({0, e});
  w[static_cast<std::size_t>(axis)].extent = extent;
  return slice_view(x, w);
}

// AffineSite -----------------------------------------------------------------

AffineSite::AffineSite(std::string name, SupernetMode mode, Shape storage,
                       std::vector<ChoiceDim> dims, std::vector<std::int64_t> units,
                       AffineOptions opt, Rng& rng, DType dtype)
    : name_(std::move(name)), mode_(mode), opt_(opt) {
  if (opt_.depthwise && (!opt_.conv || storage.at(1) != 1)) {
    throw ConfigError(name_ + ": depthwise sites need a [C,1,k,k] kernel");
  }
  for (const auto& d : dims)
    for (auto a : d.target_axes) axis1_targeted_ = axis1_targeted_ || a == 1;

  const double fan_in = static_cast<double>(numel(storage) / storage.at(0));
  auto w = random_weight(storage, opt_.gain / std::sqrt(fan_in), rng, dtype);
  DiffArray b;
  if (opt_.bias) b = DiffArray::parameter({storage[0]}, std::vector<double>(storage[0], 0.0), dtype);
  ep_ = EntangledParameter(name_, w, std::move(dims), b, std::move(units));
  if (mode_ == SupernetMode::WS) {
    ep_.storage().node()->requires_grad = false;
    for (std::int64_t j = 0; j < ep_.combo_count(); ++j) {
      const auto a = ep_.combo_assignment(j);
      auto wj = slice_choice(ep_, a).detach();
      wj.set_requires_grad(true);
      ws_w_.push_back(wj);
      if (opt_.bias) {
        auto bj = slice_bias(ep_, a).detach();
        bj.set_requires_grad(true);
        ws_b_.push_back(bj);
      }
    }
  }
}

std::int64_t AffineSite::combo_index(const std::vector<std::int64_t>& choice) const {
  const auto& dims = ep_.dims();
  if (choice.size() != dims.size()) throw ChoiceError(name_ + ": wrong number of choices");
  std::int64_t j = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (choice[i] < 0 || choice[i] >= static_cast<std::int64_t>(dims[i].size())) {
      throw ChoiceError(name_ + ": choice out of range");
    }
    j = j * static_cast<std::int64_t>(dims[i].size()) + choice[i];
  }
  return j;
}

DiffArray AffineSite::apply(const DiffArray& x, const DiffArray& w, const DiffArray& b,
                            std::int64_t kernel) const {
  if (!opt_.conv) return linear(x, w, b);
  Conv2dOptions co{.stride = opt_.stride,
                   .dilation = opt_.dilation,
                   .padding = opt_.dilation * (kernel - 1) / 2,
                   .groups = opt_.depthwise ? x.dim(1) : 1};
  auto y = conv2d(x, w, co);
  return b.defined() ? add_bias(y, b, 1) : y;
}

DiffArray AffineSite::fit_input(const DiffArray& x, std::int64_t width) const {
  if (x.dim(1) < width) throw DimensionError(name_ + ": input narrower than the weight");
  return take_axis(x, 1, width);
}

DiffArray AffineSite::mix(const DiffArray& x, const MixtureWeights& mixes) const {
  const auto& s = ep_.storage();
  const std::int64_t kmax = opt_.conv ? s.dim(2) : 0;
  if (!opt_.depthwise && x.dim(1) != s.dim(1)) {
    throw DimensionError(name_ + ": mixture input must carry the full width " +
                         std::to_string(s.dim(1)));
  }
  if (ep_.dims().empty()) {
    if (mode_ == SupernetMode::WE) return apply(x, s, ep_.bias(), kmax);
    return apply(x, ws_w_[0], opt_.bias ? ws_b_[0] : DiffArray{}, kmax);
  }
  if (mode_ == SupernetMode::WE) {
    const auto sp = combi_superpose(ep_, mixes);
    return apply(x, sp.weight, sp.bias, kmax);
  }
  if (mixes.size() != ep_.dims().size()) throw ConfigError(name_ + ": one mixture per dim");
  for (std::size_t i = 0; i < mixes.size(); ++i) {
    if (mixes[i].numel() != static_cast<std::int64_t>(ep_.dims()[i].size())) {
      throw DimensionError(name_ + ": mixture length does not match dim " + ep_.dims()[i].name);
    }
  }
  const auto c = outer_product(mixes);
  std::vector<DiffArray> terms;
  for (std::size_t j = 0; j < ws_w_.size(); ++j) {
    const auto& w = ws_w_[j];
    const auto in = opt_.depthwise ? x : fit_input(x, w.dim(1));
    auto y = apply(in, w, opt_.bias ? ws_b_[j] : DiffArray{}, opt_.conv ? w.dim(2) : 0);
    terms.push_back(scale_by(pad_axis(y, 1, s.dim(0)), c, static_cast<std::int64_t>(j)));
  }
  return add_n(terms);
}

DiffArray AffineSite::path(const DiffArray& x, const std::vector<std::int64_t>& choice,
                           PathWeights& pw) const {
  const std::int64_t j = combo_index(choice);
  DiffArray w, b;
  if (mode_ == SupernetMode::WE) {
    auto win = ep_.windows(choice);
    if (!axis1_targeted_ && !opt_.depthwise) win[1].extent = std::min(win[1].extent, x.dim(1));
    w = pw.get(name_, ep_.storage(), win);
    if (opt_.bias) {
      const std::vector<Window> bw{win[0]};
      b = pw.get(name_ + "/bias", ep_.bias(), bw);
    }
  } else {
    const auto& full = ws_w_[static_cast<std::size_t>(j)];
    std::vector<Window> win;
    for (auto e : full.shape()) win.push_back({0, e});
    if (!axis1_targeted_ && !opt_.depthwise) win[1].extent = std::min(win[1].extent, x.dim(1));
    const std::string key = name_ + "/c" + std::to_string(j);
    w = pw.get(key, full, win);
    if (opt_.bias) b = use_whole(pw, key + "/bias", ws_b_[static_cast<std::size_t>(j)]);
  }
  const auto in = opt_.depthwise ? x : fit_input(x, w.dim(1));
  return apply(in, w, b, opt_.conv ? w.dim(2) : 0);
}

void AffineSite::collect(std::vector<NamedTensor>& out) const {
  if (mode_ == SupernetMode::WE) {
    out.push_back({name_, ep_.storage()});
    if (opt_.bias) out.push_back({name_ + "/bias", ep_.bias()});
    return;
  }
  for (std::size_t j = 0; j < ws_w_.size(); ++j) {
    const std::string key = name_ + "/c" + std::to_string(j);
    out.push_back({key, ws_w_[j]});
    if (opt_.bias) out.push_back({key + "/bias", ws_b_[j]});
  }
}

// NormSite -------------------------------------------------------------------

NormSite::NormSite(std::string name, SupernetMode mode, ChoiceDim dim, DType dtype)
    : name_(std::move(name)), mode_(mode), dim_(std::move(dim)) {
  validate_choice_dim(dim_);
  auto make = [&](std::int64_t e) {
    gamma_.push_back(DiffArray::parameter({e}, std::vector<double>(e, 1.0), dtype));
    beta_.push_back(DiffArray::parameter({e}, std::vector<double>(e, 0.0), dtype));
  };
  if (mode_ == SupernetMode::WE) {
    make(dim_.max_choice());
  } else {
    for (auto e : dim_.choices) make(e);
  }
}

DiffArray NormSite::mix(const DiffArray& x, const DiffArray& w) const {
  const std::int64_t emax = dim_.max_choice();
  if (x.dim(1) != emax) throw DimensionError(name_ + ": mixture input must be full width");
  if (w.numel() != static_cast<std::int64_t>(dim_.size())) {
    throw DimensionError(name_ + ": mixture length does not match " + dim_.name);
  }
  std::vector<DiffArray> terms;
  for (std::size_t i = 0; i < dim_.size(); ++i) {
    const std::int64_t e = dim_.choices[i];
    const std::size_t p = mode_ == SupernetMode::WE ? 0 : i;
    auto g = take_axis(gamma_[p], 0, e), b = take_axis(beta_[p], 0, e);
    auto y = layer_norm(take_axis(x, 1, e), g, b);
    terms.push_back(scale_by(pad_axis(y, 1, emax), w, static_cast<std::int64_t>(i)));
  }
  return add_n(terms);
}

DiffArray NormSite::path(const DiffArray& x, std::int64_t choice, PathWeights& pw) const {
  const std::int64_t e = dim_.choices.at(static_cast<std::size_t>(choice));
  if (x.dim(1) != e) throw DimensionError(name_ + ": path input width does not match choice");
  if (mode_ == SupernetMode::WE) {
    const std::vector<Window> w{{0, e}};
    return layer_norm(x, pw.get(name_ + "/gamma", gamma_[0], w),
                      pw.get(name_ + "/beta", beta_[0], w));
  }
  const auto i = static_cast<std::size_t>(choice);
  const std::string key = name_ + "/c" + std::to_string(choice);
  return layer_norm(x, use_whole(pw, key + "/gamma", gamma_[i]),
                    use_whole(pw, key + "/beta", beta_[i]));
}

void NormSite::collect(std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < gamma_.size(); ++i) {
    const std::string key = mode_ == SupernetMode::WE ? name_ : name_ + "/c" + std::to_string(i);
    out.push_back({key + "/gamma", gamma_[i]});
    out.push_back({key + "/beta", beta_[i]});
  }
}

// EmbedSite ------------------------------------------------------------------

EmbedSite::EmbedSite(std::string name, SupernetMode mode, std::int64_t rows, ChoiceDim dim,
                     double std, Rng& rng, DType dtype)
    : name_(std::move(name)), mode_(mode), dim_(std::move(dim)) {
  validate_choice_dim(dim_);
  auto full = random_weight({rows, dim_.max_choice()}, std, rng, dtype);
  if (mode_ == SupernetMode::WE) {
    tables_.push_back(full);
    return;
  }
  for (auto e : dim_.choices) {
    auto t = take_axis(full, 1, e).detach();
    t.set_requires_grad(true);
    tables_.push_back(t);
  }
}

DiffArray EmbedSite::mix(std::span<const std::int32_t> ids, const DiffArray& w) const {
  const std::int64_t emax = dim_.max_choice();
  if (w.numel() != static_cast<std::int64_t>(dim_.size())) {
    throw DimensionError(name_ + ": mixture length does not match " + dim_.name);
  }
  if (mode_ == SupernetMode::WE) {
    const std::int64_t rows = tables_[0].dim(0);
    std::vector<std::vector<Window>> wins;
    for (auto e : dim_.choices) wins.push_back({{0, rows}, {0, e}});
    return embedding(weighted_window_sum(tables_[0], w, wins), ids);
  }
  std::vector<DiffArray> terms;
  for (std::size_t i = 0; i < dim_.size(); ++i) {
    auto y = pad_axis(embedding(tables_[i], ids), 1, emax);
    terms.push_back(scale_by(y, w, static_cast<std::int64_t>(i)));
  }
  return add_n(terms);
}

DiffArray EmbedSite::path(std::span<const std::int32_t> ids, std::int64_t choice,
                          PathWeights& pw) const {
  const std::int64_t e = dim_.choices.at(static_cast<std::size_t>(choice));
  if (mode_ == SupernetMode::WE) {
    const std::vector<Window> w{{0, tables_[0].dim(0)}, {0, e}};
    return embedding(pw.get(name_, tables_[0], w), ids);
  }
  return embedding(use_whole(pw, name_ + "/c" + std::to_string(choice),
                             tables_[static_cast<std::size_t>(choice)]),
                   ids);
}

void EmbedSite::collect(std::vector<NamedTensor>& out) const {
  if (mode_ == SupernetMode::WE) {
    out.push_back({name_, tables_[0]});
    return;
  }
  for (std::size_t i = 0; i < tables_.size(); ++i)
    out.push_back({name_ + "/c" + std::to_string(i), tables_[i]});
}

}  // namespace tnas
