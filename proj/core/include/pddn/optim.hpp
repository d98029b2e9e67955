#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pddn/layers.hpp"

namespace pddn {

struct AdamWConfig {
  double base_lr = 1e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamWConfig&) const = default;
};

/// First/second moments, one pair of buffers per parameter, same order as
/// the parameter list handed to adamw_step.
struct OptimState {
  AdamWConfig config;
  std::int64_t step = 0;
  std::int64_t total_steps = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static OptimState for_params(std::span<Param* const> params, const AdamWConfig& config,
                               std::int64_t total_steps);
  bool operator==(const OptimState&) const = default;
};

/// One decoupled-weight-decay Adam update at learning rate `lr`, using each
/// parameter's accumulated gradient. Throws NonFinite (before touching any
/// parameter) if a gradient is NaN/Inf and ShapeMismatch if the state does
/// not mirror the parameters.
void adamw_step(std::span<Param* const> params, OptimState& state, double lr);

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr);

/// Central-difference check of accumulated analytic gradients.
///
/// `loss_fn(true)` must accumulate dL/dparam into the Param grad
/// buffers (they are zeroed beforehand) and return L; `loss_fn(false)` only
/// returns L. `probes` coordinates are drawn uniformly over all parameters.
/// Relative error per probe is |a - n| / max(1e-8, |a| + |n|); the maximum is
/// returned.
double gradient_check(const std::function<double(bool)>& loss_fn, std::span<Param* const> params, int probes,
                      std::uint64_t seed, double step = 1e-5);

}  // namespace pddn
