#pragma once

#include <functional>
#include <vector>

#include "tnas/core/diff_array.hpp"

namespace tnas {

/// Compares reverse-mode adjoints of `f` against central differences.
///
/// Returns max over every coordinate of every param of
///   |analytic - (f(p+eps e) - f(p-eps e)) / 2eps| / max(1, |analytic|).
/// `f` is called once under a tape and twice per coordinate without one.
/// Params must be requires_grad leaves; their adjoints are cleared on exit.
double grad_check(const std::function<DiffArray()>& f, const std::vector<DiffArray>& params,
                  double eps = 1e-5);

}  // namespace tnas
