#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "overlapsim/netsim.hpp"
#include "overlapsim/optim.hpp"
#include "overlapsim/param_core.hpp"
#include "overlapsim/protocol.hpp"
#include "overlapsim/scheduler.hpp"
#include "overlapsim/tasks.hpp"

namespace overlapsim {

enum class TimingMode {
  fixed,     // every fragment sync overlaps exactly `tau` steps
  computed,  // tau from the ring all-reduce model and online T_c/T_s averages
};

TimingMode parse_timing_mode(std::string_view name);
std::string_view to_string(TimingMode mode);

struct TimingConfig {
  TimingMode mode = TimingMode::fixed;
  int tau = 5;
  double compute_seconds = 1.0;  // nominal seconds per local step
  LinkModel link;
  std::size_t bytes_per_element = 4;
  double ema_decay = 0.1;
  double jitter_sigma = 0.0;     // log-normal noise on step and sync times

  void validate(int num_workers) const;
};

struct SimulationConfig {
  ProtocolConfig protocol;
  double gamma = 0.4;
  TimingConfig timing;
  AdamWConfig inner;
  std::int64_t warmup_steps = 0;
  double min_lr_ratio = 0.1;
  std::int64_t total_steps = 1000;  // horizon of the learning-rate schedule
  std::uint64_t seed = 1;           // timing jitter stream

  void validate(int num_workers) const;
};

struct SyncRecord {
  int fragment = 0;
  std::int64_t initiated_step = 0;
  std::int64_t completed_step = 0;
  int tau = 0;
  double seconds = 0.0;
  std::size_t bytes = 0;  // summed over all workers' contributions
};

struct SelectionRecord {
  std::int64_t step = 0;
  int fragment = 0;
};

/// Deterministic lockstep simulation of M workers running one protocol.
///
/// Each call to run_round() is one tick at step t (local steps completed so
/// far):
///   1. the in-flight sync completes if it is due (t == t_p + tau);
///   2. a sync request is queued if t is an initiation slot of the current
///      H window (offsets h, 2h, ..., N*h);
///   3. if the channel is free the oldest request starts (blocking syncs
///      complete immediately and charge their time to the virtual clock);
///   4. every worker takes one local step.
/// The task must outlive the simulation.
class Simulation {
 public:
  Simulation(const SimulationConfig& cfg, const SyntheticTask& task);

  void run_round();
  void run(std::int64_t steps);

  std::int64_t step() const noexcept { return step_; }
  double virtual_seconds() const noexcept { return virtual_seconds_; }
  int num_workers() const noexcept { return static_cast<int>(workers_.size()); }

  const ProtocolConfig& protocol() const noexcept { return protocol_; }
  const FragmentationSpec& fragmentation() const noexcept { return fragmentation_; }
  const SchedulePlan& current_plan() const noexcept { return plan_; }
  const NetworkTimings& timings() const noexcept { return timings_; }

  std::span<const WorkerState> workers() const noexcept { return workers_; }
  std::span<const GlobalShardState> global_replicas() const noexcept { return replicas_; }
  std::span<const ImpactTracker> trackers() const noexcept { return trackers_; }
  const std::optional<InFlightSync>& in_flight() const noexcept { return in_flight_; }
  std::size_t queued_requests() const noexcept { return queue_.size(); }

  const std::vector<SyncRecord>& sync_log() const noexcept { return sync_log_; }
  const std::vector<SelectionRecord>& selections() const noexcept { return selections_; }
  std::size_t bytes_transmitted() const noexcept { return bytes_; }
  std::vector<std::int64_t> sync_counts() const;
  double last_train_loss() const noexcept { return last_loss_; }

  // Elementwise mean of the workers' parameters (worker order).
  ParamVector mean_params() const;
  // Worker 0's replica of the global state, assembled into one vector.
  ParamVector global_params() const;

  // True if `t` (>= 1) is an initiation slot under `plan` with window H.
  static bool is_initiation_slot(std::int64_t t, int H, const SchedulePlan& plan);

 private:
  struct Request {
    int fragment = -1;  // -1: choose adaptively when transmission starts
    std::int64_t requested_at = 0;
  };

  void replan();
  double sync_seconds(int fragment);
  int choose_fragment(std::int64_t t);
  void start(const Request& req);
  void complete_in_flight();

  SimulationConfig cfg_;
  ProtocolConfig protocol_;  // resolved
  const SyntheticTask& task_;
  FragmentationSpec fragmentation_;
  LrSchedule schedule_;
  SchedulerConfig scheduler_;
  SchedulePlan plan_;
  NetworkTimings timings_;
  TimingJitter compute_jitter_;
  TimingJitter sync_jitter_;
  double reference_fragment_bytes_ = 1.0;

  std::vector<WorkerState> workers_;
  std::vector<GlobalShardState> replicas_;
  std::vector<ImpactTracker> trackers_;

  std::optional<InFlightSync> in_flight_;
  double in_flight_seconds_ = 0.0;
  std::deque<Request> queue_;
  std::int64_t round_robin_next_ = 0;
  std::int64_t window_ = 0;

  std::int64_t step_ = 0;
  double virtual_seconds_ = 0.0;
  double last_loss_ = 0.0;
  std::size_t bytes_ = 0;
  std::vector<std::int64_t> counts_;
  std::vector<SyncRecord> sync_log_;
  std::vector<SelectionRecord> selections_;
};

}  // namespace overlapsim
