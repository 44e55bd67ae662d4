#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "overlapsim/optim.hpp"
#include "overlapsim/param_core.hpp"
#include "overlapsim/protocol.hpp"
#include "overlapsim/simulation.hpp"
#include "overlapsim/tasks.hpp"

namespace overlapsim::testing {

// Small hand-rolled generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  bool coin() { return integer(0, 1) == 1; }
  ParamVector vec(std::size_t n, double lo = -2.0, double hi = 2.0) {
    ParamVector v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

bool rel_close(double a, double b, double tol);

// Central differences of the mean minibatch loss over `rows`.
ParamVector finite_difference_grad(const SyntheticTask& task, const Dataset& data,
                                   const std::vector<std::size_t>& rows,
                                   const ParamVector& params, double h = 1e-6);

// Scalar textbook AdamW, applied `grads.size()` times from a zero state.
double reference_adamw(double theta, const std::vector<double>& grads,
                       double lr, double beta1, double beta2, double eps, double wd);

// Scalar Nesterov outer recurrence with deltas in the local - global convention.
double reference_nesterov(double theta, const std::vector<double>& deltas,
                          double lr, double momentum);

/// Straight-line DiLoCo written against the task and inner optimizer only:
/// M workers run H local AdamW steps, the mean of (local - global) drives a
/// Nesterov step on the global model, and every worker adopts it.
std::vector<ParamVector> reference_diloco(const SyntheticTask& task,
                                          const SimulationConfig& cfg,
                                          std::int64_t steps);

SyntheticTask least_squares_task(int workers = 4, std::uint64_t seed = 7,
                                 std::size_t dim = 8, std::size_t layers = 4);

}  // namespace overlapsim::testing
