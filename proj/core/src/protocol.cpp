#include "overlapsim/protocol.hpp"

#include <cmath>
#include <string>

#include "overlapsim/error.hpp"

namespace overlapsim {

Method parse_method(std::string_view name) {
  if (name == "diloco") return Method::diloco;
  if (name == "streaming_diloco") return Method::streaming_diloco;
  if (name == "cocodc") return Method::cocodc;
  throw ConfigError("method", "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::diloco: return "diloco";
    case Method::streaming_diloco: return "streaming_diloco";
    case Method::cocodc: return "cocodc";
  }
  return "unknown";
}

Selection parse_selection(std::string_view name) {
  if (name == "round_robin") return Selection::round_robin;
  if (name == "adaptive") return Selection::adaptive;
  throw ConfigError("selection", "unknown selection policy '" + std::string(name) + "'");
}

std::string_view to_string(Selection selection) {
  return selection == Selection::round_robin ? "round_robin" : "adaptive";
}

void ProtocolConfig::validate() const {
  if (H < 1) throw ConfigError("H", "must be at least 1");
  if (K < 1) throw ConfigError("K", "must be at least 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must lie in [0,1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda", "must be a finite non-negative number");
  }
  if (method == Method::cocodc && compensation && blocking) {
    throw ConfigError("blocking", "delay compensation needs an overlap of at least one step");
  }
  outer.validate();
}

ProtocolConfig ProtocolConfig::resolved() const {
  ProtocolConfig out = *this;
  switch (method) {
    case Method::diloco:
      out.K = 1;
      out.blocking = true;
      out.alpha = 1.0;
      out.compensation = false;
      out.selection = Selection::round_robin;
      break;
    case Method::streaming_diloco:
      out.compensation = false;
      out.selection = Selection::round_robin;
      break;
    case Method::cocodc:
      break;
  }
  return out;
}

WorkerState make_worker(int worker_id, const ParamVector& initial_params) {
  WorkerState w;
  w.worker_id = worker_id;
  w.params = initial_params;
  w.inner_state = AdamWState(initial_params.size());
  return w;
}

GlobalShardState make_global_state(const ParamVector& initial_params,
                                   const FragmentationSpec& spec) {
  GlobalShardState g;
  for (const auto& frag : spec.fragments()) {
    GlobalFragment gf;
    gf.params = gather(initial_params, frag);
    gf.outer_state = NesterovState(frag.size());
    g.fragments.push_back(std::move(gf));
  }
  return g;
}

double local_step(WorkerState& worker, const SyntheticTask& task,
                  const WorkerShard& shard, const AdamWConfig& inner, double lr,
                  std::uint64_t batch_seed) {
  auto [loss, grad] = minibatch_grad(task, shard, worker.params, batch_seed);
  if (!std::isfinite(loss)) {
    throw NumericError("worker " + std::to_string(worker.worker_id) +
                           ": non-finite loss at step " +
                           std::to_string(worker.local_step),
                       worker.local_step);
  }
  try {
    adamw_step(worker.params, grad, worker.inner_state, inner, lr);
  } catch (const NumericError& e) {
    throw NumericError("worker " + std::to_string(worker.worker_id) + ": " +
                           e.what() + " at step " +
                           std::to_string(worker.local_step),
                       worker.local_step);
  }
  worker.local_step += 1;
  return loss;
}

ParamVector pseudo_gradient(const WorkerState& worker,
                            const GlobalShardState& global,
                            const FragmentView& fragment) {
  const auto& gf = global.fragments.at(static_cast<std::size_t>(fragment.index));
  return gather(worker.params, fragment) - gf.params;
}

InFlightSync initiate_sync(std::span<WorkerState> workers,
                           std::span<const GlobalShardState> replicas,
                           const FragmentView& fragment,
                           std::int64_t initiated_step, int tau,
                           bool take_snapshot) {
  if (workers.size() != replicas.size()) {
    throw InternalError("initiate_sync: one global replica per worker required");
  }
  if (tau < 0) throw InternalError("initiate_sync: negative tau");

  InFlightSync sync;
  sync.fragment = fragment.index;
  sync.initiated_step = initiated_step;
  sync.completes_at_step = initiated_step + tau;
  sync.contributions.reserve(workers.size());
  for (std::size_t m = 0; m < workers.size(); ++m) {
    auto& w = workers[m];
    sync.contributions.push_back(pseudo_gradient(w, replicas[m], fragment));
    if (take_snapshot) {
      auto [it, inserted] = w.snapshots.try_emplace(fragment.index);
      if (!inserted) {
        throw InternalError("initiate_sync: fragment " +
                            std::to_string(fragment.index) +
                            " already has a pending snapshot");
      }
      it->second = CompensationSnapshot{fragment.index, initiated_step,
                                        gather(w.params, fragment)};
    }
  }
  return sync;
}

ParamVector aggregate(const InFlightSync& sync, int num_workers) {
  if (num_workers < 1 ||
      sync.contributions.size() != static_cast<std::size_t>(num_workers)) {
    throw InternalError("aggregate: expected " + std::to_string(num_workers) +
                        " contributions, have " +
                        std::to_string(sync.contributions.size()));
  }
  ParamVector sum = sync.contributions.front();
  for (std::size_t m = 1; m < sync.contributions.size(); ++m) {
    const auto& c = sync.contributions[m];
    if (c.size() != sum.size()) throw InternalError("aggregate: ragged contributions");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += c[i];
  }
  const double inv = 1.0 / static_cast<double>(num_workers);
  for (auto& v : sum) v *= inv;
  return sum;
}

ParamVector blend(const ParamVector& local, const ParamVector& global,
                  double alpha) {
  if (local.size() != global.size()) throw InternalError("blend: length mismatch");
  if (alpha == 1.0) return global;
  ParamVector out(local.size());
  for (std::size_t i = 0; i < local.size(); ++i) {
    out[i] = (1.0 - alpha) * local[i] + alpha * global[i];
  }
  return out;
}

void apply_outer_update(GlobalShardState& global, int fragment,
                        const ParamVector& aggregated,
                        const NesterovConfig& outer, std::int64_t step) {
  auto& gf = global.fragments.at(static_cast<std::size_t>(fragment));
  outer_step(gf.params, aggregated, gf.outer_state, outer);
  gf.last_global_sync_step = step;
}

void complete_sync_baseline(WorkerState& worker, const InFlightSync& sync,
                            GlobalShardState& global,
                            const FragmentView& fragment, double alpha,
                            const NesterovConfig& outer) {
  if (!sync.aggregated) throw InternalError("complete_sync_baseline: sync not aggregated");
  apply_outer_update(global, sync.fragment, *sync.aggregated, outer,
                     sync.completes_at_step);
  const auto& gf = global.fragments[static_cast<std::size_t>(sync.fragment)];
  scatter(worker.params, fragment, blend(gather(worker.params, fragment), gf.params, alpha));
}

ParamVector compensate(const ParamVector& local_now,
                       const ParamVector& local_at_init,
                       const ParamVector& global_new, double lambda, int H,
                       int tau, bool literal_sign) {
  if (tau < 1) throw InternalError("compensate: tau must be at least 1");
  if (H < 1) throw InternalError("compensate: H must be at least 1");
  const std::size_t n = local_now.size();
  if (local_at_init.size() != n || global_new.size() != n) {
    throw InternalError("compensate: length mismatch");
  }
  const double steps = static_cast<double>(tau);
  const double window = static_cast<double>(H);
  ParamVector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double displacement = literal_sign ? local_at_init[i] - local_now[i]
                                             : local_now[i] - local_at_init[i];
    const double rate = displacement / steps;
    const double divergence = (global_new[i] - local_at_init[i]) / window;
    // g_corr * tau expanded as d + lambda * g^2 * div * tau, so lambda == 0
    // (or zero divergence) yields global_new + d without a d/tau*tau round trip.
    const double correction = lambda * rate * rate * divergence * steps;
    out[i] = global_new[i] + (displacement + correction);
  }
  return out;
}

void delay_compensate(WorkerState& worker, const InFlightSync& sync,
                      const GlobalShardState& global,
                      const FragmentView& fragment, double lambda, int H,
                      bool literal_sign) {
  auto it = worker.snapshots.find(sync.fragment);
  if (it == worker.snapshots.end()) {
    throw InternalError("delay_compensate: worker " +
                        std::to_string(worker.worker_id) +
                        " has no snapshot for fragment " +
                        std::to_string(sync.fragment));
  }
  if (it->second.initiated_step != sync.initiated_step) {
    throw InternalError("delay_compensate: snapshot belongs to another sync");
  }
  const auto& gf = global.fragments.at(static_cast<std::size_t>(sync.fragment));
  const ParamVector updated =
      compensate(gather(worker.params, fragment), it->second.params_at_initiation,
                 gf.params, lambda, H, sync.tau(), literal_sign);
  scatter(worker.params, fragment, updated);
  worker.snapshots.erase(it);
}

}  // namespace overlapsim
