#include "overlapsim/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "overlapsim/error.hpp"

namespace overlapsim {

void AdamWConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must lie in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must lie in (0,1)");
  if (!(eps > 0.0)) throw ConfigError("eps", "must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be non-negative");
}

void NesterovConfig::validate() const {
  if (!(outer_lr > 0.0) || !std::isfinite(outer_lr)) {
    throw ConfigError("outer_lr", "must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("outer_momentum", "must lie in [0,1)");
  }
}

void adamw_step(ParamVector& params, const ParamVector& grad, AdamWState& state,
                const AdamWConfig& cfg, double lr) {
  const std::size_t n = params.size();
  if (grad.size() != n || state.first_moment.size() != n ||
      state.second_moment.size() != n) {
    throw InternalError("adamw_step: size mismatch (params " +
                        std::to_string(n) + ", grad " +
                        std::to_string(grad.size()) + ")");
  }
  if (!grad.all_finite()) {
    throw NumericError("adamw_step: non-finite gradient");
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr * cfg.weight_decay;

  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    params[i] = params[i] * decay - lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

double LrSchedule::operator()(std::int64_t step) const {
  if (step < warmup_steps) {
    return peak_lr * static_cast<double>(step + 1) /
           static_cast<double>(warmup_steps);
  }
  const double min_lr = min_lr_ratio * peak_lr;
  const std::int64_t decay_steps = total_steps - warmup_steps;
  if (decay_steps <= 0) return peak_lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) /
                        static_cast<double>(decay_steps));
  return min_lr + (peak_lr - min_lr) * 0.5 *
                      (1.0 + std::cos(std::numbers::pi * progress));
}

void outer_step(ParamVector& global_fragment, const ParamVector& delta,
                NesterovState& state, const NesterovConfig& cfg) {
  const std::size_t n = global_fragment.size();
  if (delta.size() != n || state.momentum_buffer.size() != n) {
    throw InternalError("outer_step: size mismatch (fragment " +
                        std::to_string(n) + ", delta " +
                        std::to_string(delta.size()) + ", buffer " +
                        std::to_string(state.momentum_buffer.size()) + ")");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double g = -delta[i];
    double& buf = state.momentum_buffer[i];
    buf = cfg.momentum * buf + g;
    global_fragment[i] -= cfg.outer_lr * (g + cfg.momentum * buf);
  }
}

}  // namespace overlapsim
