#include "overlapsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "overlapsim/error.hpp"
#include "overlapsim/netsim.hpp"

namespace overlapsim {

void SchedulerConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma", "must lie in (0,1]");
  }
  if (H < 1) throw ConfigError("H", "must be at least 1");
  if (K < 1) throw ConfigError("K", "must be at least 1");
  if (K > H) throw ConfigError("K", "more fragments than steps per window");
}

SchedulePlan plan(const SchedulerConfig& cfg, double compute_seconds,
                  double sync_seconds) {
  if (!(compute_seconds > 0.0) || !(sync_seconds > 0.0)) {
    throw InternalError("plan: timings must be positive");
  }
  const double capacity =
      cfg.gamma * (static_cast<double>(cfg.H) * compute_seconds) / sync_seconds;
  // Clamp before narrowing; a huge capacity just means "sync every step".
  const double clamped = std::min(capacity, static_cast<double>(cfg.H));
  const auto n = std::max<std::int64_t>(cfg.K, stable_floor(clamped));
  SchedulePlan out;
  out.syncs_per_window = static_cast<int>(n);
  out.interval = std::max(1, cfg.H / out.syncs_per_window);
  return out;
}

SchedulePlan round_robin_plan(int H, int K) {
  return SchedulePlan{K, std::max(1, H / K)};
}

ImpactTracker::ImpactTracker(int num_fragments)
    : impact_(static_cast<std::size_t>(std::max(0, num_fragments)),
              std::numeric_limits<double>::infinity()),
      last_sync_(static_cast<std::size_t>(std::max(0, num_fragments)), 0) {
  if (num_fragments < 1) throw InternalError("ImpactTracker: need K >= 1");
}

void ImpactTracker::check(int p) const {
  if (p < 0 || p >= num_fragments()) {
    throw InternalError("ImpactTracker: fragment " + std::to_string(p) +
                        " out of range");
  }
}

double ImpactTracker::impact(int p) const {
  check(p);
  return impact_[static_cast<std::size_t>(p)];
}

std::int64_t ImpactTracker::last_sync_step(int p) const {
  check(p);
  return last_sync_[static_cast<std::size_t>(p)];
}

bool ImpactTracker::ever_synced(int p) const { return !std::isinf(impact(p)); }

void ImpactTracker::update(int p, const ParamVector& aggregated_delta,
                           std::int64_t initiated_step) {
  check(p);
  const auto i = static_cast<std::size_t>(p);
  const std::int64_t interval = initiated_step - last_sync_[i];
  if (interval <= 0) {
    throw InternalError("ImpactTracker: non-positive sync interval for fragment " +
                        std::to_string(p));
  }
  impact_[i] = l2_norm(aggregated_delta) / static_cast<double>(interval);
  last_sync_[i] = initiated_step;
}

int select_fragment(const ImpactTracker& tracker, std::int64_t current_step,
                    int H, int in_flight) {
  const int k = tracker.num_fragments();

  for (int p = 0; p < k; ++p) {
    if (p == in_flight) continue;
    if (current_step - tracker.last_sync_step(p) >= H) return p;
  }

  int best = -1;
  for (int p = 0; p < k; ++p) {
    if (p == in_flight) continue;
    if (best < 0 || tracker.impact(p) > tracker.impact(best)) best = p;
  }
  return best;
}

}  // namespace overlapsim
