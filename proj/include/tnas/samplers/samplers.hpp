#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnas/core/diff_array.hpp"
#include "tnas/core/rng.hpp"
#include "tnas/superposition/entangled.hpp"

namespace tnas {

enum class SamplerStrategy : std::uint8_t { Softmax, GumbelST, Dirichlet };
enum class AnnealSchedule : std::uint8_t { None, Linear, Exponential };
enum class Regularization : std::uint8_t { None, L2Anchor };

struct SamplerConfig {
  SamplerStrategy strategy = SamplerStrategy::Softmax;
  double tau = 1.0;
  AnnealSchedule anneal = AnnealSchedule::None;
  double tau_start = 1.0;
  double tau_end = 1.0;
  std::int64_t anneal_steps = 0;
  std::uint64_t seed = 0;
  double dirichlet_epsilon = 1e-3;
  Regularization regularization = Regularization::None;
  double reg_scale = 0.0;
};

/// Throws ConfigError on a non-positive temperature, epsilon or negative scale.
void validate(const SamplerConfig& cfg);

std::string to_string(SamplerStrategy s);
SamplerStrategy parse_strategy(const std::string& s);

/// Learnable logits, one vector per searchable dim, in the space's canonical order.
class ArchParams {
 public:
  ArchParams() = default;
  /// Zero logits plus N(0, init_scale^2) noise when init_scale > 0.
  ArchParams(const std::vector<ChoiceDim>& dims, DType dtype, Rng* rng = nullptr,
             double init_scale = 0.0);

  std::size_t size() const { return alpha_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<DiffArray>& alphas() const { return alpha_; }
  const DiffArray& operator[](std::size_t i) const { return alpha_.at(i); }
  void set_requires_grad(bool flag);
  /// Deep copy of the current values.
  std::vector<std::vector<double>> snapshot() const;

 private:
  std::vector<std::string> names_;
  std::vector<DiffArray> alpha_;
};

/// softmax(alpha / tau).
DiffArray sample_softmax(const DiffArray& alpha, double tau = 1.0);
/// Exact one-hot at argmax(alpha + Gumbel noise); the backward pass uses the
/// Jacobian of softmax((alpha + noise) / tau). Ties go to the lowest index.
DiffArray sample_gumbel_st(const DiffArray& alpha, double tau, Rng& rng);
/// Dirichlet draw with concentration softplus(alpha) + epsilon.
DiffArray sample_dirichlet(const DiffArray& alpha, Rng& rng, double epsilon = 1e-3);
/// Dirichlet draw for an explicit concentration vector (differentiable in it).
DiffArray dirichlet_from_concentration(const DiffArray& concentration, Rng& rng);
/// Reparameterised Gamma(shape, 1) draws, one per entry.
DiffArray gamma_sample(const DiffArray& shape, Rng& rng);

/// One simplex per dim using the configured strategy.
MixtureWeights sample_mixture(const ArchParams& arch, const SamplerConfig& cfg, double tau,
                              Rng& rng);

/// Temperature at a step of the configured schedule, clamped to [tau_end, tau_start].
double anneal_step(const SamplerConfig& cfg, std::int64_t step);

/// scale * sum ||alpha||^2 over all dims.
DiffArray anchor_regularizer(const std::vector<DiffArray>& alphas, double scale);

}  // namespace tnas
