#include "tnas/core/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "tnas/core/errors.hpp"
#include "tnas/core/tape.hpp"

namespace tnas {

namespace {
double eval_scalar(const std::function<DiffArray()>& f) {
  NoGradScope no_grad;
  const DiffArray out = f();
  if (out.numel() != 1) throw DimensionError("grad_check: f must return a scalar");
  const double v = out.item();
  if (!std::isfinite(v)) throw EvaluationError("grad_check: f returned a non-finite value");
  return v;
}
}  // namespace

double grad_check(const std::function<DiffArray()>& f, const std::vector<DiffArray>& params,
                  double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw PreconditionError("grad_check: eps must lie in [1e-7, 1e-3]");
  }
  for (const auto& p : params) {
    if (!p.requires_grad() || !p.is_leaf()) {
      throw PreconditionError("grad_check: params must be requires_grad leaves");
    }
    const_cast<DiffArray&>(p).clear_adjoint();
  }
  {
    Tape tape;
    Tape::Scope scope(tape);
    const DiffArray loss = f();
    if (!std::isfinite(loss.item())) {
      throw EvaluationError("grad_check: f returned a non-finite value");
    }
    tape.backward(loss);
  }
  double worst = 0.0;
  for (const auto& p : params) {
    auto param = p;  // shared handle
    std::vector<double> analytic(static_cast<std::size_t>(param.numel()), 0.0);
    if (param.has_adjoint()) {
      const auto adj = param.adjoint();
      std::copy(adj.begin(), adj.end(), analytic.begin());
    }
    auto vals = param.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double fp = eval_scalar(f);
      vals[i] = orig - eps;
      const double fm = eval_scalar(f);
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
    param.clear_adjoint();
  }
  return worst;
}

}  // namespace tnas
