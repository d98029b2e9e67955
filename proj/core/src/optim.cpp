#include "pddn/optim.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "pddn/error.hpp"

namespace pddn {

OptimState OptimState::for_params(std::span<Param* const> params, const AdamWConfig& config,
                                  std::int64_t total_steps) {
  OptimState s;
  s.config = config;
  s.total_steps = total_steps;
  for (const Param* p : params) {
    s.m.emplace_back(p->size(), 0.0);
    s.v.emplace_back(p->size(), 0.0);
  }
  return s;
}

void adamw_step(std::span<Param* const> params, OptimState& state, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer state tracks " + std::to_string(state.m.size()) +
                                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Param& p = *params[k];
    if (state.m[k].size() != p.size() || state.v[k].size() != p.size() || p.grad.size() != p.size()) {
      throw Error(Errc::ShapeMismatch, "moment buffer " + std::to_string(k) + " does not mirror its parameter");
    }
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw Error(Errc::NonFinite, "gradient of parameter " + std::to_string(k));
    }
  }

  const AdamWConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - lr * c.weight_decay;

  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] = p.value[i] * decay - lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base_lr) {
  if (total_steps <= 0 || step < 0 || step > total_steps) {
    throw Error(Errc::InvalidArgument, "cosine_lr step " + std::to_string(step) + " outside [0, " +
                                           std::to_string(total_steps) + "]");
  }
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

double gradient_check(const std::function<double(bool)>& loss_fn, std::span<Param* const> params, int probes,
                      std::uint64_t seed, double step) {
  std::size_t total = 0;
  for (Param* p : params) {
    p->zero_grad();
    total += p->size();
  }
  if (total == 0) throw Error(Errc::InvalidArgument, "gradient_check needs at least one parameter");

  const double base = loss_fn(true);
  if (!std::isfinite(base)) throw Error(Errc::NonFinite, "loss is not finite");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  double worst = 0.0;
  for (int n = 0; n < probes; ++n) {
    std::size_t flat = pick(rng);
    std::size_t k = 0;
    while (flat >= params[k]->size()) {
      flat -= params[k]->size();
      ++k;
    }
    Param& p = *params[k];
    const double saved = p.value[flat];
    p.value[flat] = saved + step;
    const double up = loss_fn(false);
    p.value[flat] = saved - step;
    const double down = loss_fn(false);
    p.value[flat] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw Error(Errc::NonFinite, "loss is not finite");

    const double numeric = (up - down) / (2.0 * step);
    const double analytic = p.grad[flat];
    const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace pddn
