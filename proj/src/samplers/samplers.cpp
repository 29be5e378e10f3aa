#include "tnas/samplers/samplers.hpp"

#include <algorithm>
#include <cmath>

#include "tnas/core/errors.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

void validate(const SamplerConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw ConfigError("sampler temperature must be positive");
  if (cfg.anneal != AnnealSchedule::None) {
    if (!(cfg.tau_start > 0.0) || !(cfg.tau_end > 0.0)) {
      throw ConfigError("anneal temperatures must be positive");
    }
    if (cfg.anneal_steps <= 0) throw ConfigError("anneal needs a positive step count");
  }
  if (!(cfg.dirichlet_epsilon > 0.0)) throw ConfigError("dirichlet epsilon must be positive");
  if (!(cfg.reg_scale >= 0.0)) throw ConfigError("regularization scale must be non-negative");
}

std::string to_string(SamplerStrategy s) {
  switch (s) {
    case SamplerStrategy::Softmax: return "softmax";
    case SamplerStrategy::GumbelST: return "gumbel_st";
    case SamplerStrategy::Dirichlet: return "dirichlet";
  }
  return "?";
}

SamplerStrategy parse_strategy(const std::string& s) {
  if (s == "softmax") return SamplerStrategy::Softmax;
  if (s == "gumbel_st") return SamplerStrategy::GumbelST;
  if (s == "dirichlet") return SamplerStrategy::Dirichlet;
  throw ConfigError("unknown sampler strategy '" + s + "'");
}

ArchParams::ArchParams(const std::vector<ChoiceDim>& dims, DType dtype, Rng* rng,
                       double init_scale) {
  for (const auto& d : dims) {
    std::vector<double> v(d.size(), 0.0);
    if (rng != nullptr && init_scale > 0.0) {
      for (auto& x : v) x = init_scale * rng->normal();
    }
    names_.push_back(d.name);
    alpha_.push_back(DiffArray::parameter({static_cast<std::int64_t>(d.size())}, v, dtype));
  }
}

void ArchParams::set_requires_grad(bool flag) {
  for (auto& a : alpha_) a.set_requires_grad(flag);
}

std::vector<std::vector<double>> ArchParams::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& a : alpha_) out.emplace_back(a.values().begin(), a.values().end());
  return out;
}

DiffArray sample_softmax(const DiffArray& alpha, double tau) {
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  return softmax(tau == 1.0 ? alpha : scale(alpha, 1.0 / tau), 0);
}

DiffArray sample_gumbel_st(const DiffArray& alpha, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  const auto n = alpha.numel();
  const auto av = alpha.values();
  std::vector<double> perturbed(static_cast<std::size_t>(n));
  std::size_t best = 0;
  for (std::size_t i = 0; i < perturbed.size(); ++i) {
    perturbed[i] = av[i] - std::log(-std::log(rng.uniform_open()));
    if (perturbed[i] > perturbed[best]) best = i;
  }
  std::vector<double> hard(perturbed.size(), 0.0);
  hard[best] = 1.0;
  const bool track = detail::tracking({&alpha});
  auto y = detail::make_output(alpha.shape(), std::move(hard), alpha.dtype(), track);
  if (track) {
    // Soft relaxation used only for the backward pass.
    double mx = *std::max_element(perturbed.begin(), perturbed.end());
    std::vector<double> soft(perturbed.size());
    double z = 0.0;
    for (std::size_t i = 0; i < soft.size(); ++i) {
      soft[i] = std::exp((perturbed[i] - mx) / tau);
      z += soft[i];
    }
    for (auto& s : soft) s /= z;
    detail::record("gumbel_st", {alpha}, y,
                   [an = alpha.node().get(), yn = y.node().get(), soft = std::move(soft), tau] {
                     auto& ga = detail::grad_of(*an);
                     double dot = 0.0;
                     for (std::size_t i = 0; i < soft.size(); ++i) dot += yn->grad[i] * soft[i];
                     for (std::size_t i = 0; i < soft.size(); ++i)
                       ga[i] += soft[i] * (yn->grad[i] - dot) / tau;
                   });
  }
  return y;
}

namespace {

struct GammaDraw {
  double value;
  double dshape;  // pathwise d value / d shape with the noise held fixed
};

// Marsaglia-Tsang for shape >= 1.
GammaDraw gamma_mt(double a, Rng& rng) {
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = rng.normal();
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = rng.uniform_open();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      // z = d * (1 + c(d) x)^3 with c(d) = (9d)^-1/2, dc/dd = -c / (2d)
      return {d * v, v - 1.5 * t * t * x * c};
    }
  }
}

GammaDraw gamma_draw(double a, Rng& rng) {
  if (a >= 1.0) return gamma_mt(a, rng);
  // Shape augmentation: Gamma(a) = Gamma(a + 1) * U^(1/a).
  const GammaDraw g = gamma_mt(a + 1.0, rng);
  const double u = rng.uniform_open();
  const double f = std::pow(u, 1.0 / a);
  return {g.value * f, g.dshape * f - g.value * f * std::log(u) / (a * a)};
}

constexpr double kGammaFloor = 1e-30;

}  // namespace

DiffArray gamma_sample(const DiffArray& shape, Rng& rng) {
  const auto sv = shape.values();
  std::vector<double> out(sv.size());
  std::vector<double> dz(sv.size());
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (!(sv[i] > 0.0)) throw PreconditionError("gamma shape must be positive");
    const GammaDraw g = gamma_draw(sv[i], rng);
    // Floor keeps the simplex well defined when tiny shapes underflow.
    out[i] = std::max(g.value, kGammaFloor);
    dz[i] = g.value > kGammaFloor ? g.dshape : 0.0;
  }
  const bool track = detail::tracking({&shape});
  auto y = detail::make_output(shape.shape(), std::move(out), shape.dtype(), track);
  if (track) {
    detail::record("gamma_sample", {shape}, y,
                   [sn = shape.node().get(), yn = y.node().get(), dz = std::move(dz)] {
                     auto& gs = detail::grad_of(*sn);
                     for (std::size_t i = 0; i < dz.size(); ++i) gs[i] += yn->grad[i] * dz[i];
                   });
  }
  return y;
}

DiffArray dirichlet_from_concentration(const DiffArray& concentration, Rng& rng) {
  return normalize_sum(gamma_sample(concentration, rng));
}

DiffArray sample_dirichlet(const DiffArray& alpha, Rng& rng, double epsilon) {
  const auto n = alpha.numel();
  auto conc = add(softplus(alpha), DiffArray::full({n}, epsilon, alpha.dtype()));
  return dirichlet_from_concentration(conc, rng);
}

MixtureWeights sample_mixture(const ArchParams& arch, const SamplerConfig& cfg, double tau,
                              Rng& rng) {
  MixtureWeights out;
  out.reserve(arch.size());
  for (const auto& a : arch.alphas()) {
    switch (cfg.strategy) {
      case SamplerStrategy::Softmax: out.push_back(sample_softmax(a, tau)); break;
      case SamplerStrategy::GumbelST: out.push_back(sample_gumbel_st(a, tau, rng)); break;
      case SamplerStrategy::Dirichlet:
        out.push_back(sample_dirichlet(a, rng, cfg.dirichlet_epsilon));
        break;
    }
  }
  return out;
}

double anneal_step(const SamplerConfig& cfg, std::int64_t step) {
  if (step < 0) throw PreconditionError("anneal step must be non-negative");
  if (cfg.anneal == AnnealSchedule::None) return cfg.tau;
  const double t =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.anneal_steps));
  double tau = cfg.anneal == AnnealSchedule::Linear
                   ? cfg.tau_start + (cfg.tau_end - cfg.tau_start) * t
                   : cfg.tau_start * std::pow(cfg.tau_end / cfg.tau_start, t);
  const double lo = std::min(cfg.tau_start, cfg.tau_end);
  const double hi = std::max(cfg.tau_start, cfg.tau_end);
  return std::clamp(tau, lo, hi);
}

DiffArray anchor_regularizer(const std::vector<DiffArray>& alphas, double scale_factor) {
  if (!(scale_factor >= 0.0)) throw PreconditionError("regularization scale must be >= 0");
  if (alphas.empty()) return DiffArray::scalar(0.0);
  std::vector<DiffArray> terms;
  for (const auto& a : alphas) terms.push_back(sum(square(a)));
  return scale(add_n(terms), scale_factor);
}

}  // namespace tnas
