#pragma once

#include <cstdint>

#include "overlapsim/param_core.hpp"

namespace overlapsim {

// Inner (per-step) optimizer. beta1/beta2/eps default to the usual Adam
// values; lr and weight_decay default to the reference training setup.
struct AdamWConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;

  void validate() const;  // throws ConfigError
};

struct AdamWState {
  AdamWState() = default;
  explicit AdamWState(std::size_t n) : first_moment(n), second_moment(n) {}

  ParamVector first_moment;
  ParamVector second_moment;
  std::int64_t step_count = 0;

  bool operator==(const AdamWState&) const = default;
};

/// One decoupled-weight-decay Adam step, in place:
///   params *= (1 - lr * weight_decay)
///   params -= lr * m_hat / (sqrt(v_hat) + eps)
/// with bias-corrected moments. `lr` overrides cfg.lr (schedules pass it).
/// Throws NumericError on a non-finite gradient, InternalError on size
/// mismatch.
void adamw_step(ParamVector& params, const ParamVector& grad, AdamWState& state,
                const AdamWConfig& cfg, double lr);

inline void adamw_step(ParamVector& params, const ParamVector& grad,
                       AdamWState& state, const AdamWConfig& cfg) {
  adamw_step(params, grad, state, cfg, cfg.lr);
}

// Linear warmup to peak_lr over warmup_steps, then cosine decay to
// min_lr_ratio * peak_lr at total_steps (held there afterwards).
struct LrSchedule {
  double peak_lr = 4e-4;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
  double min_lr_ratio = 0.0;

  double operator()(std::int64_t step) const;
};

// Outer optimizer: SGD with Nesterov momentum applied per fragment.
struct NesterovConfig {
  double outer_lr = 0.7;
  double momentum = 0.9;

  void validate() const;  // throws ConfigError
};

struct NesterovState {
  NesterovState() = default;
  explicit NesterovState(std::size_t n) : momentum_buffer(n) {}

  ParamVector momentum_buffer;

  bool operator==(const NesterovState&) const = default;
};

/// Applies an aggregated pseudo-gradient `delta` (local - global convention)
/// to `global_fragment`, treating -delta as the gradient:
///   buf <- momentum * buf + g,   g = -delta
///   global <- global - outer_lr * (g + momentum * buf)
void outer_step(ParamVector& global_fragment, const ParamVector& delta,
                NesterovState& state, const NesterovConfig& cfg);

}  // namespace overlapsim
