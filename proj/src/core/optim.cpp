#include "tnas/core/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tnas/core/errors.hpp"

namespace tnas {

Optimizer::Optimizer(std::vector<DiffArray> params, double lr)
    : params_(std::move(params)), steps_(params_.size(), 0), lr_(lr) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
}

std::vector<double>& Optimizer::buffer(std::vector<std::vector<double>>& bank, std::size_t index) {
  if (bank.size() < params_.size()) bank.resize(params_.size());
  auto& b = bank[index];
  if (b.empty()) b.assign(static_cast<std::size_t>(params_[index].numel()), 0.0);
  return b;
}

void Optimizer::step(std::size_t index) {
  auto& p = params_.at(index);
  if (!p.has_adjoint()) throw NotReadyError("optimizer step on a parameter without an adjoint");
  ++steps_[index];
  update(index, p.mutable_values(), p.adjoint(), {});
  p.round_to_dtype();
  p.clear_adjoint();
}

void Optimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].has_adjoint()) step(i);
  }
}

void Optimizer::step_masked(const std::vector<UpdateMask>& masks) {
  if (masks.size() != params_.size()) {
    throw DimensionError("step_masked: one mask per parameter required");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_adjoint()) continue;
    if (!masks[i].empty() && static_cast<std::int64_t>(masks[i].size()) != p.numel()) {
      throw DimensionError("step_masked: mask size does not match parameter");
    }
    ++steps_[i];
    update(i, p.mutable_values(), p.adjoint(), masks[i]);
    p.round_to_dtype();
    p.clear_adjoint();
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.clear_adjoint();
}

Sgd::Sgd(std::vector<DiffArray> params, const SgdOptions& opt)
    : Optimizer(std::move(params), opt.lr), opt_(opt) {}

void Sgd::update(std::size_t index, std::span<double> p, std::span<const double> g,
                 const UpdateMask& mask) {
  const bool use_momentum = opt_.momentum != 0.0;
  std::vector<double>* buf = use_momentum ? &buffer(momentum_, index) : nullptr;
  const bool first = steps_[index] == 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    double d = g[i] + opt_.weight_decay * p[i];
    if (use_momentum) {
      double& b = (*buf)[i];
      b = first ? d : opt_.momentum * b + d;
      d = opt_.nesterov ? d + opt_.momentum * b : b;
    }
    p[i] -= lr_ * d;
  }
}

AdamW::AdamW(std::vector<DiffArray> params, const AdamWOptions& opt)
    : Optimizer(std::move(params), opt.lr), opt_(opt) {}

void AdamW::update(std::size_t index, std::span<double> p, std::span<const double> g,
                   const UpdateMask& mask) {
  auto& m = buffer(m_, index);
  auto& v = buffer(v_, index);
  const auto t = static_cast<double>(steps_[index]);
  const double c1 = 1.0 - std::pow(opt_.beta1, t);
  const double c2 = 1.0 - std::pow(opt_.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    p[i] -= lr_ * opt_.weight_decay * p[i];
    m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
    v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
    p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
  }
}

double cosine_lr(double base, double floor, std::int64_t step, std::int64_t total) {
  if (total <= 0) return base;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace tnas
