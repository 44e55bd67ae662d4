#include "overlapsim/simulation.hpp"

#include <cmath>
#include <string>

#include "overlapsim/error.hpp"
#include "rng.hpp"

namespace overlapsim {
namespace {

constexpr std::uint64_t kTagComputeJitter = 11;
constexpr std::uint64_t kTagSyncJitter = 12;

}  // namespace

TimingMode parse_timing_mode(std::string_view name) {
  if (name == "fixed") return TimingMode::fixed;
  if (name == "computed") return TimingMode::computed;
  throw ConfigError("timing_mode", "unknown timing mode '" + std::string(name) + "'");
}

std::string_view to_string(TimingMode mode) {
  return mode == TimingMode::fixed ? "fixed" : "computed";
}

void TimingConfig::validate(int num_workers) const {
  if (mode == TimingMode::fixed && tau < 1) throw ConfigError("tau", "must be at least 1");
  if (!(compute_seconds > 0.0) || !std::isfinite(compute_seconds)) {
    throw ConfigError("compute_seconds", "must be positive");
  }
  if (bytes_per_element < 1) throw ConfigError("bytes_per_element", "must be positive");
  if (!(ema_decay > 0.0 && ema_decay <= 1.0)) throw ConfigError("ema_decay", "must lie in (0,1]");
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) {
    throw ConfigError("jitter_sigma", "must be non-negative");
  }
  if (mode == TimingMode::computed) {
    LinkModel l = link;
    l.num_workers = num_workers;
    l.validate();
  }
}

void SimulationConfig::validate(int num_workers) const {
  protocol.validate();
  timing.validate(num_workers);
  inner.validate();
  if (protocol.method == Method::cocodc) {
    SchedulerConfig{gamma, protocol.H, protocol.K}.validate();
  }
  if (warmup_steps < 0) throw ConfigError("warmup_steps", "must be non-negative");
  if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) {
    throw ConfigError("min_lr_ratio", "must lie in [0,1]");
  }
  if (total_steps < 1) throw ConfigError("total_steps", "must be positive");
}

Simulation::Simulation(const SimulationConfig& cfg, const SyntheticTask& task)
    : cfg_(cfg),
      protocol_(cfg.protocol.resolved()),
      task_(task),
      timings_(cfg.timing.ema_decay),
      compute_jitter_(cfg.timing.jitter_sigma, detail::mix_seed(cfg.seed, kTagComputeJitter)),
      sync_jitter_(cfg.timing.jitter_sigma, detail::mix_seed(cfg.seed, kTagSyncJitter)) {
  const int m = static_cast<int>(task.shards().size());
  cfg_.validate(m);
  cfg_.timing.link.num_workers = m;

  fragmentation_ = partition(task.layer_sizes(), protocol_.K, cfg.timing.bytes_per_element);
  if (fragmentation_.num_params() != task.num_params()) {
    throw InternalError("task layer sizes do not cover its parameters");
  }
  reference_fragment_bytes_ = static_cast<double>(fragmentation_.total_bytes()) /
                              static_cast<double>(cfg.protocol.K);

  schedule_ = LrSchedule{cfg.inner.lr, cfg.warmup_steps, cfg.total_steps, cfg.min_lr_ratio};
  scheduler_ = SchedulerConfig{cfg.gamma, protocol_.H, protocol_.K};

  for (int w = 0; w < m; ++w) {
    workers_.push_back(make_worker(w, task.initial_params()));
    replicas_.push_back(make_global_state(task.initial_params(), fragmentation_));
    trackers_.emplace_back(protocol_.K);
  }
  counts_.assign(static_cast<std::size_t>(protocol_.K), 0);

  // Initial benchmark: nominal step time and the mean fragment sync time.
  timings_.observe(TimingKind::compute, cfg.timing.compute_seconds);
  if (cfg.timing.mode == TimingMode::fixed) {
    timings_.observe(TimingKind::sync, cfg.timing.tau * cfg.timing.compute_seconds);
  } else {
    timings_.observe(TimingKind::sync, allreduce_time(cfg_.timing.link, reference_fragment_bytes_));
  }
  replan();
}

void Simulation::replan() {
  if (protocol_.method == Method::cocodc) {
    plan_ = plan(scheduler_, timings_.compute_seconds(), timings_.sync_seconds());
  } else {
    plan_ = round_robin_plan(protocol_.H, protocol_.K);
  }
}

bool Simulation::is_initiation_slot(std::int64_t t, int H, const SchedulePlan& plan) {
  if (t < 1) return false;
  const std::int64_t offset = t - static_cast<std::int64_t>(H) * ((t - 1) / H);
  return offset % plan.interval == 0 && offset / plan.interval <= plan.syncs_per_window;
}

double Simulation::sync_seconds(int fragment) {
  const auto& frag = fragmentation_.fragment(fragment);
  double seconds;
  if (cfg_.timing.mode == TimingMode::fixed) {
    seconds = cfg_.timing.tau * cfg_.timing.compute_seconds *
              (static_cast<double>(frag.byte_size) / reference_fragment_bytes_);
  } else {
    seconds = allreduce_time(cfg_.timing.link, static_cast<double>(frag.byte_size));
  }
  return sync_jitter_.apply(seconds);
}

int Simulation::choose_fragment(std::int64_t t) {
  const int busy = in_flight_ ? in_flight_->fragment : -1;

  // Every worker decides from its own replicated history; they must agree.
  const int chosen = select_fragment(trackers_.front(), t, protocol_.H, busy);
  for (std::size_t w = 1; w < trackers_.size(); ++w) {
    const int other = select_fragment(trackers_[w], t, protocol_.H, busy);
    if (other != chosen) {
      throw InternalError("workers disagree on fragment selection at step " +
                          std::to_string(t) + ": " + std::to_string(chosen) +
                          " vs " + std::to_string(other));
    }
  }
  if (chosen < 0) throw InternalError("no fragment available for selection");
  selections_.push_back(SelectionRecord{t, chosen});
  return chosen;
}

void Simulation::start(const Request& req) {
  const int p = req.fragment >= 0 ? req.fragment : choose_fragment(step_);
  const auto& frag = fragmentation_.fragment(p);
  const double seconds = sync_seconds(p);

  int tau = 0;
  if (!protocol_.blocking) {
    tau = cfg_.timing.mode == TimingMode::fixed ? cfg_.timing.tau
                                                 : overlap_depth(timings_, seconds);
  }
  const bool snapshot = protocol_.method == Method::cocodc && protocol_.compensation;
  in_flight_ = initiate_sync(workers_, replicas_, frag, step_, tau, snapshot);
  in_flight_seconds_ = seconds;

  bytes_ += frag.byte_size * workers_.size();
  counts_[static_cast<std::size_t>(p)] += 1;

  if (protocol_.blocking) {
    virtual_seconds_ += seconds;
    complete_in_flight();
  }
}

void Simulation::complete_in_flight() {
  InFlightSync& sync = *in_flight_;
  if (step_ - sync.initiated_step != sync.tau()) {
    throw InternalError("sync of fragment " + std::to_string(sync.fragment) +
                        " completing at the wrong step");
  }
  const int m = num_workers();
  sync.aggregated = aggregate(sync, m);
  const auto& frag = fragmentation_.fragment(sync.fragment);
  const bool compensated = protocol_.method == Method::cocodc && protocol_.compensation;

  for (int w = 0; w < m; ++w) {
    auto& worker = workers_[static_cast<std::size_t>(w)];
    auto& replica = replicas_[static_cast<std::size_t>(w)];
    if (compensated) {
      apply_outer_update(replica, sync.fragment, *sync.aggregated, protocol_.outer,
                         sync.completes_at_step);
      delay_compensate(worker, sync, replica, frag, protocol_.lambda, protocol_.H,
                       protocol_.literal_eq8_sign);
    } else {
      complete_sync_baseline(worker, sync, replica, frag, protocol_.alpha, protocol_.outer);
    }
    trackers_[static_cast<std::size_t>(w)].update(sync.fragment, *sync.aggregated,
                                                  sync.initiated_step);
  }

  if (cfg_.timing.mode == TimingMode::computed) {
    timings_.observe(TimingKind::sync, in_flight_seconds_);
  }
  sync_log_.push_back(SyncRecord{sync.fragment, sync.initiated_step, step_, sync.tau(),
                                 in_flight_seconds_,
                                 frag.byte_size * workers_.size()});
  in_flight_.reset();
}

void Simulation::run_round() {
  const std::int64_t t = step_;

  if (t >= 1) {
    const std::int64_t window = (t - 1) / protocol_.H;
    if (window != window_) {
      window_ = window;
      if (cfg_.timing.mode == TimingMode::computed) replan();
    }
  }

  if (in_flight_ && in_flight_->completes_at_step == t) complete_in_flight();

  if (is_initiation_slot(t, protocol_.H, plan_)) {
    Request req;
    req.requested_at = t;
    if (protocol_.selection == Selection::round_robin) {
      req.fragment = static_cast<int>(round_robin_next_ % protocol_.K);
      ++round_robin_next_;
    }
    queue_.push_back(req);
  }
  while (!in_flight_ && !queue_.empty()) {
    const Request req = queue_.front();
    queue_.pop_front();
    start(req);
  }

  const double lr = schedule_(t);
  double loss_sum = 0.0;
  for (auto& worker : workers_) {
    const auto& shard = task_.shard(worker.worker_id);
    loss_sum += local_step(worker, task_, shard, cfg_.inner, lr, batch_seed(shard, t));
  }
  last_loss_ = loss_sum / static_cast<double>(workers_.size());

  const double compute = compute_jitter_.apply(cfg_.timing.compute_seconds);
  if (cfg_.timing.mode == TimingMode::computed) {
    timings_.observe(TimingKind::compute, compute);
  }
  virtual_seconds_ += compute;
  step_ += 1;
}

void Simulation::run(std::int64_t steps) {
  for (std::int64_t i = 0; i < steps; ++i) run_round();
}

std::vector<std::int64_t> Simulation::sync_counts() const { return counts_; }

ParamVector Simulation::mean_params() const {
  ParamVector mean = workers_.front().params;
  for (std::size_t w = 1; w < workers_.size(); ++w) {
    const auto& p = workers_[w].params;
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
  }
  const double inv = 1.0 / static_cast<double>(workers_.size());
  for (auto& v : mean) v *= inv;
  return mean;
}

ParamVector Simulation::global_params() const {
  ParamVector out(fragmentation_.num_params());
  const auto& replica = replicas_.front();
  for (const auto& frag : fragmentation_.fragments()) {
    scatter(out, frag, replica.fragments[static_cast<std::size_t>(frag.index)].params);
  }
  return out;
}

}  // namespace overlapsim
