#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

#include "dawp/nn/params.hpp"

namespace dawp::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::int64_t checked = 0;
};

/// Central-difference check of analytic gradients, double precision only.
/// `loss` evaluates the scalar objective; `loss_backward` additionally
/// accumulates gradients into the store. Step size is eps scaled by the
/// parameter magnitude. For large parameters a deterministic stride sample
/// of at most `max_per_param` elements is checked.
inline GradCheckReport grad_check(ParamStore<double>& ps,
                                  const std::function<double()>& loss,
                                  const std::function<void()>& loss_backward,
                                  double eps = 1e-4, std::int64_t max_per_param = 64,
                                  double denom_floor = 1e-3) {
  ps.zero_grads();
  loss_backward();

  GradCheckReport rep;
  for (std::size_t e = 0; e < ps.size(); ++e) {
    Param<double>& p = ps[e];
    const std::int64_t n = p.value.numel();
    const std::int64_t stride = n <= max_per_param ? 1 : (n + max_per_param - 1) / max_per_param;
    for (std::int64_t i = 0; i < n; i += stride) {
      const double theta = p.value[i];
      const double h = eps * std::max(1.0, std::fabs(theta));
      p.value[i] = theta + h;
      const double lp = loss();
      p.value[i] = theta - h;
      const double lm = loss();
      p.value[i] = theta;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = p.grad[i];
      // The floor keeps finite-difference roundoff on near-zero gradients from
      // registering; scale errors stay proportional to the gradient and trip.
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), denom_floor});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = i;
        rep.analytic = analytic;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace dawp::nn
