#include "overlapsim/netsim.hpp"

#include <algorithm>
#include <cmath>

#include "overlapsim/error.hpp"
#include "rng.hpp"

namespace overlapsim {
namespace {

constexpr double kSnapTolerance = 1e-9;

bool near_integer(double x, double& rounded) {
  rounded = std::round(x);
  return std::abs(x - rounded) <= kSnapTolerance * std::max(1.0, std::abs(x));
}

}  // namespace

std::int64_t stable_floor(double x) {
  double r;
  if (near_integer(x, r)) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::floor(x));
}

std::int64_t stable_ceil(double x) {
  double r;
  if (near_integer(x, r)) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(x));
}

void LinkModel::validate() const {
  if (!(latency >= 0.0) || !std::isfinite(latency)) {
    throw ConfigError("latency", "must be a finite non-negative number");
  }
  if (!(bandwidth > 0.0)) throw ConfigError("bandwidth", "must be positive");
  if (num_workers < 2) throw ConfigError("workers", "a ring needs at least 2 workers");
}

double allreduce_time(const LinkModel& link, double bytes) {
  const double m = static_cast<double>(link.num_workers);
  const double hops = 2.0 * (m - 1.0);
  return hops * (bytes / (m * link.bandwidth)) + hops * link.latency;
}

NetworkTimings::NetworkTimings(double ema_decay) : ema_decay_(ema_decay) {
  if (!(ema_decay > 0.0 && ema_decay <= 1.0)) {
    throw ConfigError("ema_decay", "must lie in (0,1]");
  }
}

void NetworkTimings::observe(TimingKind kind, double seconds) {
  if (!(seconds > 0.0) || !std::isfinite(seconds)) {
    throw InternalError("NetworkTimings::observe: duration must be positive");
  }
  double& value = kind == TimingKind::compute ? compute_ : sync_;
  bool& seen = kind == TimingKind::compute ? has_compute_ : has_sync_;
  if (!seen) {
    value = seconds;
    seen = true;
  } else {
    value = (1.0 - ema_decay_) * value + ema_decay_ * seconds;
  }
}

int overlap_depth(const NetworkTimings& timings, double sync_seconds) {
  if (!timings.has_compute()) {
    throw InternalError("overlap_depth: compute time not observed yet");
  }
  const std::int64_t steps = stable_ceil(sync_seconds / timings.compute_seconds());
  return static_cast<int>(std::max<std::int64_t>(1, steps));
}

double TimingJitter::next() {
  const std::uint64_t index = draws_++;
  if (sigma_ == 0.0) return 1.0;
  detail::Rng rng(detail::mix_seed(seed_, index));
  return std::exp(sigma_ * rng.normal());
}

}  // namespace overlapsim
