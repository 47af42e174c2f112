#pragma once

#include <functional>
#include <vector>

#include "prism/tensor.hpp"

namespace prism {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t flagged = 0;  // coordinates skipped at detected kinks
};

/// Central finite differences against a supplied analytic gradient.
/// `loss` re-evaluates the model for the current parameter values; the
/// parameters are perturbed in place and restored. Relative error uses
/// denominator max(|a|, |b|, 1e-8). A coordinate whose one-sided slopes
/// disagree sits on a kink (relu / |.| / max); it is flagged and skipped.
GradCheckResult grad_check(const std::function<double()>& loss,
                           std::vector<Tensor*>& params,
                           const std::vector<const Tensor*>& analytic,
                           double h = 1e-5);

}  // namespace prism
