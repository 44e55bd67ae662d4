#include "support.hpp"

#include <cmath>

namespace overlapsim::testing {

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

ParamVector finite_difference_grad(const SyntheticTask& task, const Dataset& data,
                                   const std::vector<std::size_t>& rows,
                                   const ParamVector& params, double h) {
  ParamVector grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamVector up = params;
    ParamVector down = params;
    up[i] += h;
    down[i] -= h;
    grad[i] = (loss_and_grad(task, data, rows, up).loss -
               loss_and_grad(task, data, rows, down).loss) /
              (2.0 * h);
  }
  return grad;
}

double reference_adamw(double theta, const std::vector<double>& grads, double lr,
                       double beta1, double beta2, double eps, double wd) {
  double m = 0.0;
  double v = 0.0;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    const double g = grads[k];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(beta1, static_cast<double>(k + 1)));
    const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(k + 1)));
    theta = theta - lr * wd * theta - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  return theta;
}

double reference_nesterov(double theta, const std::vector<double>& deltas, double lr,
                          double momentum) {
  double buf = 0.0;
  for (double d : deltas) {
    const double g = -d;
    buf = momentum * buf + g;
    theta = theta - lr * (g + momentum * buf);
  }
  return theta;
}

std::vector<ParamVector> reference_diloco(const SyntheticTask& task,
                                          const SimulationConfig& cfg,
                                          std::int64_t steps) {
  const int m = static_cast<int>(task.shards().size());
  const int h = cfg.protocol.H;
  const LrSchedule schedule{cfg.inner.lr, cfg.warmup_steps, cfg.total_steps, cfg.min_lr_ratio};

  ParamVector global = task.initial_params();
  ParamVector buffer(global.size());
  std::vector<ParamVector> params(static_cast<std::size_t>(m), global);
  std::vector<AdamWState> states(static_cast<std::size_t>(m), AdamWState(global.size()));

  for (std::int64_t t = 0; t < steps; ++t) {
    if (t > 0 && t % h == 0) {
      ParamVector mean(global.size());
      for (int w = 0; w < m; ++w) {
        for (std::size_t i = 0; i < mean.size(); ++i) {
          mean[i] += params[static_cast<std::size_t>(w)][i] - global[i];
        }
      }
      for (auto& x : mean) x *= 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < global.size(); ++i) {
        const double g = -mean[i];
        buffer[i] = cfg.protocol.outer.momentum * buffer[i] + g;
        global[i] -= cfg.protocol.outer.outer_lr * (g + cfg.protocol.outer.momentum * buffer[i]);
      }
      for (auto& p : params) p = global;
    }
    const double lr = schedule(t);
    for (int w = 0; w < m; ++w) {
      const auto& shard = task.shard(w);
      const auto grad = minibatch_grad(task, shard, params[static_cast<std::size_t>(w)],
                                       batch_seed(shard, t));
      adamw_step(params[static_cast<std::size_t>(w)], grad.grad,
                 states[static_cast<std::size_t>(w)], cfg.inner, lr);
    }
  }
  return params;
}

SyntheticTask least_squares_task(int workers, std::uint64_t seed, std::size_t dim,
                                 std::size_t layers) {
  TaskConfig tc;
  tc.kind = TaskKind::least_squares;
  tc.num_workers = workers;
  tc.feature_dim = dim;
  tc.num_layers = layers;
  tc.samples_per_worker = 200;
  tc.validation_samples = 200;
  tc.batch_size = 8;
  tc.feature_shift = 0.5;
  tc.noise_std = 0.1;
  tc.seed = seed;
  return make_task(tc, static_cast<int>(layers));
}

}  // namespace overlapsim::testing
