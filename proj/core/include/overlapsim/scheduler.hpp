#pragma once

#include <cstdint>
#include <vector>

#include "overlapsim/param_core.hpp"

namespace overlapsim {

struct SchedulerConfig {
  double gamma = 0.4;  // network utilization factor, (0,1]
  int H = 100;
  int K = 4;

  void validate() const;  // throws ConfigError
};

// N syncs per H-step window, initiated every h steps.
struct SchedulePlan {
  int syncs_per_window = 1;  // N
  int interval = 1;          // h

  bool operator==(const SchedulePlan&) const = default;
};

/// Capacity plan for one H window:
///   N = max(K, floor(gamma * H * T_c / T_s)),  h = floor(H / N).
/// Both times must be positive.
SchedulePlan plan(const SchedulerConfig& cfg, double compute_seconds,
                  double sync_seconds);

/// Round-robin cadence: every fragment exactly once per window (N = K).
SchedulePlan round_robin_plan(int H, int K);

/// Per-fragment impact metric R_p and the step t_{p,b} of the last
/// completed sync. R_p starts at +infinity so that never-synced fragments
/// win the argmax.
class ImpactTracker {
 public:
  explicit ImpactTracker(int num_fragments);

  int num_fragments() const noexcept { return static_cast<int>(impact_.size()); }
  double impact(int p) const;
  std::int64_t last_sync_step(int p) const;
  bool ever_synced(int p) const;

  /// Called when fragment p's sync (initiated at `initiated_step`) completes:
  ///   R_p <- ||aggregated_delta||_2 / (initiated_step - t_{p,b}),
  ///   t_{p,b} <- initiated_step.
  /// Throws InternalError if the interval is not positive.
  void update(int p, const ParamVector& aggregated_delta,
              std::int64_t initiated_step);

  bool operator==(const ImpactTracker&) const = default;

 private:
  void check(int p) const;

  std::vector<double> impact_;
  std::vector<std::int64_t> last_sync_;
};

/// Picks the next fragment to synchronize at step `current_step`:
///   1. the lowest-indexed p with current_step - t_{p,b} >= H, else
///   2. argmax_p R_p, ties to the lowest index.
/// `in_flight` (if >= 0) names a fragment whose sync is still running; it is
/// skipped. Returns -1 only if no fragment is eligible.
int select_fragment(const ImpactTracker& tracker, std::int64_t current_step,
                    int H, int in_flight = -1);

}  // namespace overlapsim
