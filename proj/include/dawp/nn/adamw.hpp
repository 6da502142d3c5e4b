#pragma once

#include <cmath>
#include <cstdint>

#include "dawp/common.hpp"
#include "dawp/nn/params.hpp"

namespace dawp::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct LrSchedule {
  std::int64_t total_steps = 0;
  double warmup_frac = 0.10;
  double peak_lr = 1e-4;
  double warmup_lr = 1e-6;
  double min_lr = 1e-6;
};

/// Linear ramp from warmup_lr to peak over the first warmup fraction of
/// steps, then cosine decay to min_lr at the final step.
inline double cosine_lr(std::int64_t step, const LrSchedule& s) {
  if (step < 1) throw ArgumentError("cosine_lr: step must be >= 1");
  const double warm = std::ceil(s.warmup_frac * static_cast<double>(s.total_steps));
  if (warm >= 1.0 && static_cast<double>(step) <= warm)
    return s.warmup_lr + (s.peak_lr - s.warmup_lr) * (static_cast<double>(step) / warm);
  const double rest = static_cast<double>(s.total_steps) - warm;
  if (rest <= 0) return s.min_lr;
  double u = (static_cast<double>(step) - warm) / rest;
  if (u > 1.0) u = 1.0;
  return s.min_lr + 0.5 * (s.peak_lr - s.min_lr) * (1.0 + std::cos(3.14159265358979323846 * u));
}

/// One decoupled-weight-decay Adam step over all parameters in the store.
template <typename T>
void adamw_step(ParamStore<T>& ps, std::int64_t step, double lr, const AdamConfig& cfg) {
  if (step < 1) throw ArgumentError("adamw_step: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t e = 0; e < ps.size(); ++e) {
    Param<T>& p = ps[e];
    if (p.m.numel() == 0) {
      p.m = Tensor<T>(p.value.shape);
      p.v = Tensor<T>(p.value.shape);
    }
    const std::int64_t n = p.value.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      const double g = static_cast<double>(p.grad[i]);
      double m = cfg.beta1 * static_cast<double>(p.m[i]) + (1.0 - cfg.beta1) * g;
      double v = cfg.beta2 * static_cast<double>(p.v[i]) + (1.0 - cfg.beta2) * g * g;
      p.m[i] = static_cast<T>(m);
      p.v[i] = static_cast<T>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      const double upd = mhat / (std::sqrt(vhat) + cfg.eps) +
                         cfg.weight_decay * static_cast<double>(p.value[i]);
      p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - lr * upd);
    }
  }
}

}  // namespace dawp::nn
