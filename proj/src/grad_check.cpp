#include "prism/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace prism {

GradCheckResult grad_check(const std::function<double()>& loss,
                           std::vector<Tensor*>& params,
                           const std::vector<const Tensor*>& analytic,
                           double h) {
  if (analytic.size() != params.size()) {
    throw UsageError("grad_check: analytic gradient covers " +
                     std::to_string(analytic.size()) + " of " +
                     std::to_string(params.size()) + " parameters");
  }
  GradCheckResult res;
  const double f0 = loss();  // params are restored after every probe
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    const Tensor& a = *analytic[pi];
    if (!p.same_shape(a)) {
      throw UsageError("grad_check: shape mismatch at parameter " +
                       std::to_string(pi));
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double orig = p[j];
      p[j] = orig + h;
      const double fp = loss();
      p[j] = orig - h;
      const double fm = loss();
      p[j] = orig;
      const double central = (fp - fm) / (2.0 * h);
      // one-sided slopes disagreeing flags a kink under the stencil
      const double dplus = (fp - f0) / h;
      const double dminus = (f0 - fm) / h;
      const double kink_gap = std::abs(dplus - dminus);
      const double slope_mag = std::max({std::abs(dplus), std::abs(dminus), 1.0});
      if (kink_gap > 1e-3 * slope_mag) {
        res.flagged += 1;
        continue;
      }
      const double ref = a[j];
      const double denom = std::max({std::abs(central), std::abs(ref), 1e-8});
      const double rel = std::abs(central - ref) / denom;
      res.max_rel_err = std::max(res.max_rel_err, rel);
      res.checked += 1;
    }
  }
  return res;
}

}  // namespace prism
