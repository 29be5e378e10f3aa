#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tnas/core/diff_array.hpp"

namespace tnas {

/// Element mask for restricted updates; empty means every element.
using UpdateMask = std::vector<std::uint8_t>;

/// Shared bookkeeping for first-order optimisers. Buffers are allocated
/// lazily with the shape of their parameter; each parameter keeps its own
/// step counter so restricted (path-only) updates stay consistent.
class Optimizer {
 public:
  explicit Optimizer(std::vector<DiffArray> params, double lr);
  virtual ~Optimizer() = default;

  /// Updates every parameter that carries an adjoint and clears it.
  void step();
  /// Updates one parameter; throws NotReadyError if it has no adjoint.
  void step(std::size_t index);
  /// Like step(), but only elements whose mask byte is set move. masks[i]
  /// empty means "whole tensor", a missing adjoint means "skip".
  void step_masked(const std::vector<UpdateMask>& masks);

  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<DiffArray>& params() const { return params_; }
  std::int64_t steps(std::size_t index) const { return steps_.at(index); }

 protected:
  virtual void update(std::size_t index, std::span<double> p, std::span<const double> g,
                      const UpdateMask& mask) = 0;
  std::vector<double>& buffer(std::vector<std::vector<double>>& bank, std::size_t index);

  std::vector<DiffArray> params_;
  std::vector<std::int64_t> steps_;
  double lr_;
};

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.0;
  bool nesterov = false;
  double weight_decay = 0.0;
};

/// SGD with optional (Nesterov) momentum and coupled L2 weight decay.
class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<DiffArray> params, const SgdOptions& opt);

 private:
  void update(std::size_t index, std::span<double> p, std::span<const double> g,
              const UpdateMask& mask) override;
  SgdOptions opt_;
  std::vector<std::vector<double>> momentum_;
};

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay.
class AdamW final : public Optimizer {
 public:
  AdamW(std::vector<DiffArray> params, const AdamWOptions& opt);

 private:
  void update(std::size_t index, std::span<double> p, std::span<const double> g,
              const UpdateMask& mask) override;
  AdamWOptions opt_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Cosine decay from base to floor over total steps (clamped).
double cosine_lr(double base, double floor, std::int64_t step, std::int64_t total);

}  // namespace tnas
