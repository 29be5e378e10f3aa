#include "tnas/superposition/entangled.hpp"

#include <cmath>
#include <numeric>

#include "tnas/core/errors.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

void validate_choice_dim(const ChoiceDim& dim) {
  if (dim.choices.size() < 2) {
    throw ConfigError("choice dim '" + dim.name + "' needs at least two choices");
  }
  for (std::size_t i = 0; i < dim.choices.size(); ++i) {
    if (dim.choices[i] <= 0 || (i > 0 && dim.choices[i] <= dim.choices[i - 1])) {
      throw ConfigError("choices of '" + dim.name + "' must be positive and strictly increasing");
    }
  }
}

EntangledParameter::EntangledParameter(std::string name, DiffArray storage,
                                       std::vector<ChoiceDim> dims, DiffArray bias,
                                       std::vector<std::int64_t> units)
    : name_(std::move(name)),
      storage_(std::move(storage)),
      bias_(std::move(bias)),
      dims_(std::move(dims)),
      units_(std::move(units)) {
  const auto rank = static_cast<std::size_t>(storage_.rank());
  if (units_.empty()) units_.assign(rank, 1);
  if (units_.size() != rank) throw ConfigError(name_ + ": one unit per storage axis required");
  std::vector<std::int64_t> expect(units_);
  std::vector<int> targeted(rank, 0);
  std::vector<int> align(rank, -1);
  for (const auto& d : dims_) {
    validate_choice_dim(d);
    if (d.target_axes.empty()) throw ConfigError(name_ + ": dim '" + d.name + "' targets no axis");
    for (auto a : d.target_axes) {
      if (a >= rank) throw ConfigError(name_ + ": dim '" + d.name + "' targets a missing axis");
      expect[a] *= d.max_choice();
      ++targeted[a];
      const int al = static_cast<int>(d.alignment);
      if (align[a] >= 0 && align[a] != al) {
        throw ConfigError(name_ + ": conflicting alignments on axis " + std::to_string(a));
      }
      align[a] = al;
    }
  }
  for (std::size_t a = 0; a < rank; ++a) {
    if (targeted[a] && expect[a] != storage_.dim(static_cast<std::int64_t>(a))) {
      throw DimensionError(name_ + ": storage extent " +
                           std::to_string(storage_.dim(static_cast<std::int64_t>(a))) +
                           " on axis " + std::to_string(a) + " does not match maximal choice " +
                           std::to_string(expect[a]));
    }
  }
  if (bias_.defined() && (bias_.rank() != 1 || bias_.dim(0) != storage_.dim(0))) {
    throw DimensionError(name_ + ": bias must be a vector matching storage axis 0");
  }
}

std::int64_t EntangledParameter::param_count() const {
  return storage_.numel() + (bias_.defined() ? bias_.numel() : 0);
}

std::vector<Alignment> EntangledParameter::alignments() const {
  std::vector<Alignment> al(static_cast<std::size_t>(storage_.rank()), Alignment::Leading);
  for (const auto& d : dims_)
    for (auto a : d.target_axes) al[a] = d.alignment;
  return al;
}

std::vector<Window> EntangledParameter::windows(const std::vector<std::int64_t>& assignment) const {
  if (assignment.size() != dims_.size()) {
    throw ChoiceError(name_ + ": assignment has " + std::to_string(assignment.size()) +
                      " entries for " + std::to_string(dims_.size()) + " dims");
  }
  const auto rank = static_cast<std::size_t>(storage_.rank());
  std::vector<std::int64_t> extent(units_);
  std::vector<int> targeted(rank, 0);
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    if (assignment[i] < 0 || assignment[i] >= static_cast<std::int64_t>(d.size())) {
      throw ChoiceError(name_ + ": index " + std::to_string(assignment[i]) + " out of range for '" +
                        d.name + "'");
    }
    for (auto a : d.target_axes) {
      extent[a] *= d.choices[static_cast<std::size_t>(assignment[i])];
      targeted[a] = 1;
    }
  }
  std::vector<Window> w(rank);
  const auto al = alignments();
  for (std::size_t a = 0; a < rank; ++a) {
    const std::int64_t full = storage_.dim(static_cast<std::int64_t>(a));
    if (!targeted[a]) {
      w[a] = {0, full};
    } else if (al[a] == Alignment::Centered) {
      w[a] = {(full - extent[a]) / 2, extent[a]};
    } else {
      w[a] = {0, extent[a]};
    }
  }
  return w;
}

std::int64_t EntangledParameter::combo_count() const {
  std::int64_t n = 1;
  for (const auto& d : dims_) n *= static_cast<std::int64_t>(d.size());
  return n;
}

std::vector<std::int64_t> EntangledParameter::combo_assignment(std::int64_t j) const {
  std::vector<std::int64_t> a(dims_.size());
  for (std::size_t i = dims_.size(); i-- > 0;) {
    const auto n = static_cast<std::int64_t>(dims_[i].size());
    a[i] = j % n;
    j /= n;
  }
  return a;
}

std::vector<std::int64_t> EntangledParameter::max_assignment() const {
  std::vector<std::int64_t> a;
  for (const auto& d : dims_) a.push_back(static_cast<std::int64_t>(d.size()) - 1);
  return a;
}

void validate_simplex(const DiffArray& mix) {
  double s = 0.0;
  for (double v : mix.values()) {
    if (!(v >= 0.0)) throw NormalizationError("mixture weight is negative or NaN");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) {
    throw NormalizationError("mixture weights sum to " + std::to_string(s) + ", not 1");
  }
}

DiffArray slice_choice(const EntangledParameter& ep, const std::vector<std::int64_t>& assignment) {
  return slice_view(ep.storage(), ep.windows(assignment));
}

DiffArray slice_bias(const EntangledParameter& ep, const std::vector<std::int64_t>& assignment) {
  if (!ep.has_bias()) return {};
  const std::vector<Window> w{ep.windows(assignment)[0]};
  return slice_view(ep.bias(), w);
}

DiffArray weighted_window_sum(const DiffArray& storage, const DiffArray& coeffs,
                              const std::vector<std::vector<Window>>& windows) {
  if (static_cast<std::int64_t>(windows.size()) != coeffs.numel()) {
    throw DimensionError("weighted_window_sum: one coefficient per window set required");
  }
  const Shape& shape = storage.shape();
  const std::size_t rank = shape.size();
  std::vector<std::int64_t> stride(rank, 1);
  for (std::size_t a = rank - 1; a-- > 0;) stride[a] = stride[a + 1] * shape[a + 1];

  // Walk every contiguous run of a window: fn(offset, length).
  auto for_each_run = [rank, stride](const std::vector<Window>& w, auto&& fn) {
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t runs = 1;
    for (std::size_t a = 0; a + 1 < rank; ++a) runs *= w[a].extent;
    for (std::int64_t r = 0; r < runs; ++r) {
      std::int64_t off = w[rank - 1].start;
      for (std::size_t a = 0; a + 1 < rank; ++a) off += (w[a].start + idx[a]) * stride[a];
      fn(off, w[rank - 1].extent);
      for (std::size_t a = rank - 1; a-- > 0;) {
        if (++idx[a] < w[a].extent) break;
        idx[a] = 0;
      }
    }
  };

  const auto sv = storage.values();
  const auto cv = coeffs.values();
  std::vector<double> out(sv.size(), 0.0);
  for (std::size_t j = 0; j < windows.size(); ++j) {
    const double c = cv[j];
    for_each_run(windows[j], [&](std::int64_t off, std::int64_t len) {
      for (std::int64_t i = off; i < off + len; ++i) out[static_cast<std::size_t>(i)] += c * sv[static_cast<std::size_t>(i)];
    });
  }
  const bool track = detail::tracking({&storage, &coeffs});
  auto y = detail::make_output(shape, std::move(out), detail::promote({&storage, &coeffs}), track);
  if (track) {
    detail::record("weighted_window_sum", {storage, coeffs}, y,
                   [sn = storage.node().get(), cn = coeffs.node().get(), yn = y.node().get(),
                    windows, for_each_run] {
                     const auto& g = yn->grad;
                     double* gs = sn->requires_grad ? detail::grad_of(*sn).data() : nullptr;
                     double* gc = cn->requires_grad ? detail::grad_of(*cn).data() : nullptr;
                     for (std::size_t j = 0; j < windows.size(); ++j) {
                       const double c = cn->values[j];
                       double acc = 0.0;
                       for_each_run(windows[j], [&](std::int64_t off, std::int64_t len) {
                         for (std::int64_t i = off; i < off + len; ++i) {
                           const auto u = static_cast<std::size_t>(i);
                           if (gs) gs[u] += c * g[u];
                           acc += g[u] * sn->values[u];
                         }
                       });
                       if (gc) gc[j] += acc;
                     }
                   });
  }
  return y;
}

Superposed combi_superpose(const EntangledParameter& ep, const MixtureWeights& mixes) {
  if (mixes.size() != ep.dims().size()) {
    throw ConfigError(ep.name() + ": " + std::to_string(mixes.size()) + " mixes for " +
                      std::to_string(ep.dims().size()) + " dims");
  }
  for (std::size_t i = 0; i < mixes.size(); ++i) {
    if (mixes[i].numel() != static_cast<std::int64_t>(ep.dims()[i].size())) {
      throw DimensionError(ep.name() + ": mix for '" + ep.dims()[i].name + "' has wrong length");
    }
    validate_simplex(mixes[i]);
  }
  const DiffArray coeffs = outer_product(mixes);
  std::vector<std::vector<Window>> wins;
  std::vector<std::vector<Window>> bias_wins;
  for (std::int64_t j = 0; j < ep.combo_count(); ++j) {
    wins.push_back(ep.windows(ep.combo_assignment(j)));
    bias_wins.push_back({wins.back()[0]});
  }
  Superposed out;
  out.weight = weighted_window_sum(ep.storage(), coeffs, wins);
  if (ep.has_bias()) out.bias = weighted_window_sum(ep.bias(), coeffs, bias_wins);
  return out;
}

DiffArray superpose(const EntangledParameter& ep, const DiffArray& mix) {
  if (ep.dims().size() != 1) {
    throw ConfigError(ep.name() + ": superpose needs exactly one dim; use combi_superpose");
  }
  return combi_superpose(ep, {mix}).weight;
}

DiffArray mixture_linear(const DiffArray& x, const EntangledParameter& ep,
                         const MixtureWeights& mixes) {
  if (ep.storage().rank() != 2 || x.rank() != 2 || x.dim(1) != ep.storage().dim(1)) {
    throw DimensionError(ep.name() + ": input " + shape_str(x.shape()) +
                         " does not match storage " + shape_str(ep.storage().shape()));
  }
  const auto sp = combi_superpose(ep, mixes);
  return linear(x, sp.weight, sp.bias);
}

DiffArray mixture_conv2d(const DiffArray& x, const EntangledParameter& ep,
                         const MixtureWeights& mixes, std::int64_t stride, std::int64_t dilation) {
  const auto& s = ep.storage();
  if (s.rank() != 4 || x.rank() != 4 || x.dim(1) != s.dim(1)) {
    throw DimensionError(ep.name() + ": input " + shape_str(x.shape()) +
                         " does not match kernel storage " + shape_str(s.shape()));
  }
  const std::int64_t kmax = s.dim(2);
  const Conv2dOptions opt{.stride = stride, .dilation = dilation, .padding = dilation * (kmax - 1) / 2};
  const auto sp = combi_superpose(ep, mixes);
  auto y = conv2d(x, sp.weight, opt);
  return sp.bias.defined() ? add_bias(y, sp.bias, 1) : y;
}

}  // namespace tnas
