#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "overlapsim/optim.hpp"
#include "overlapsim/param_core.hpp"
#include "overlapsim/tasks.hpp"

namespace overlapsim {

enum class Method { diloco, streaming_diloco, cocodc };

Method parse_method(std::string_view name);  // throws ConfigError
std::string_view to_string(Method method);

// How the next fragment to sync is chosen.
enum class Selection { round_robin, adaptive };

Selection parse_selection(std::string_view name);
std::string_view to_string(Selection selection);

struct ProtocolConfig {
  Method method = Method::cocodc;
  int H = 100;
  int K = 4;
  double alpha = 0.5;   // blending factor (streaming_diloco, or cocodc without compensation)
  double lambda = 0.5;  // compensation strength (cocodc)
  // Use the rate exactly as written, (theta_tp - theta_tl) / tau, instead of
  // the forward displacement. Off by default; see delay_compensate().
  bool literal_eq8_sign = false;
  // cocodc only: complete syncs by delay compensation (true) or by the
  // baseline blend with `alpha` (false).
  bool compensation = true;
  Selection selection = Selection::adaptive;  // cocodc only
  // Syncs complete in the tick they start; no local steps overlap them.
  bool blocking = false;
  NesterovConfig outer;

  void validate() const;  // throws ConfigError

  /// The effective configuration: diloco is one full-model fragment, synced
  /// blocking every H steps and adopted outright (K=1, alpha=1);
  /// streaming_diloco always uses round-robin selection and blending.
  ProtocolConfig resolved() const;
};

struct CompensationSnapshot {
  int fragment = 0;
  std::int64_t initiated_step = 0;
  ParamVector params_at_initiation;  // fragment-sized

  bool operator==(const CompensationSnapshot&) const = default;
};

struct WorkerState {
  int worker_id = 0;
  ParamVector params;
  AdamWState inner_state;
  std::int64_t local_step = 0;
  std::map<int, CompensationSnapshot> snapshots;  // at most one per fragment

  bool operator==(const WorkerState&) const = default;
};

WorkerState make_worker(int worker_id, const ParamVector& initial_params);

struct GlobalFragment {
  ParamVector params;
  std::int64_t last_global_sync_step = 0;
  NesterovState outer_state;

  bool operator==(const GlobalFragment&) const = default;
};

// One worker's replica of the global consensus state, per fragment.
struct GlobalShardState {
  std::vector<GlobalFragment> fragments;

  bool operator==(const GlobalShardState&) const = default;
};

GlobalShardState make_global_state(const ParamVector& initial_params,
                                   const FragmentationSpec& spec);

struct InFlightSync {
  int fragment = 0;
  std::int64_t initiated_step = 0;
  std::int64_t completes_at_step = 0;
  std::vector<ParamVector> contributions;  // one pseudo-gradient per worker
  std::optional<ParamVector> aggregated;   // filled at completion

  int tau() const noexcept {
    return static_cast<int>(completes_at_step - initiated_step);
  }
};

/// One inner step: minibatch gradient at the worker's parameters, then
/// AdamW with learning rate `lr`. Returns the minibatch loss. Throws
/// NumericError (carrying the step) if the loss or gradient is not finite.
double local_step(WorkerState& worker, const SyntheticTask& task,
                  const WorkerShard& shard, const AdamWConfig& inner, double lr,
                  std::uint64_t batch_seed);

// theta^m_p - theta^g_p against the worker's most recent global fragment.
ParamVector pseudo_gradient(const WorkerState& worker,
                            const GlobalShardState& global,
                            const FragmentView& fragment);

/// Starts a sync of `fragment` at step `initiated_step`, taking each
/// worker's pseudo-gradient against its own global replica. When
/// `take_snapshot` is set, each worker records its fragment parameters for
/// delay compensation. tau == 0 means a blocking sync.
InFlightSync initiate_sync(std::span<WorkerState> workers,
                           std::span<const GlobalShardState> replicas,
                           const FragmentView& fragment,
                           std::int64_t initiated_step, int tau,
                           bool take_snapshot);

/// Mean of all contributions, summed in worker order.
ParamVector aggregate(const InFlightSync& sync, int num_workers);

// (1 - alpha) * local + alpha * global; alpha == 1 copies global exactly.
ParamVector blend(const ParamVector& local, const ParamVector& global,
                  double alpha);

/// Outer optimizer step on one replica's fragment using the aggregated
/// pseudo-gradient; records `step` as the fragment's last sync.
void apply_outer_update(GlobalShardState& global, int fragment,
                        const ParamVector& aggregated,
                        const NesterovConfig& outer, std::int64_t step);

/// Baseline completion for one worker: outer update of its replica, then
/// blend the new global fragment into the local one with `alpha`.
/// `sync.aggregated` must be filled.
void complete_sync_baseline(WorkerState& worker, const InFlightSync& sync,
                            GlobalShardState& global,
                            const FragmentView& fragment, double alpha,
                            const NesterovConfig& outer);

/// Delay-compensated fragment state, elementwise:
///   d      = local_now - local_at_init
///   g      = d / tau                (or -d / tau when literal_sign)
///   div    = (global_new - local_at_init) / H
///   g_corr = g + lambda * g * g * div
///   result = global_new + g_corr * tau
ParamVector compensate(const ParamVector& local_now,
                       const ParamVector& local_at_init,
                       const ParamVector& global_new, double lambda, int H,
                       int tau, bool literal_sign);

/// Applies compensate() to the worker's fragment using its snapshot, which
/// is consumed. `global` must already hold the post-outer-step fragment.
/// Throws InternalError if the snapshot is missing or tau < 1.
void delay_compensate(WorkerState& worker, const InFlightSync& sync,
                      const GlobalShardState& global,
                      const FragmentView& fragment, double lambda, int H,
                      bool literal_sign);

}  // namespace overlapsim
