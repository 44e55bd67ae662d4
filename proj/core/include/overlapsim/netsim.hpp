#pragma once

#include <cstdint>

namespace overlapsim {

// Single WAN ring connecting all workers.
struct LinkModel {
  double latency = 0.05;      // seconds per hop
  double bandwidth = 1.0e8;   // bytes per second
  int num_workers = 4;

  void validate() const;  // throws ConfigError
};

/// Ring all-reduce duration for a payload of `bytes`:
///   2(M-1) * bytes / (M * B) + 2(M-1) * L
/// (reduce-scatter followed by all-gather, M-1 hops each).
double allreduce_time(const LinkModel& link, double bytes);

enum class TimingKind { compute, sync };

/// Moving-average estimates of the per-step compute time T_c and the
/// per-fragment sync time T_s. The first observation of each kind is taken
/// verbatim; later ones blend in with weight `ema_decay`.
class NetworkTimings {
 public:
  explicit NetworkTimings(double ema_decay = 0.1);

  void observe(TimingKind kind, double seconds);

  bool has_compute() const noexcept { return has_compute_; }
  bool has_sync() const noexcept { return has_sync_; }
  double compute_seconds() const noexcept { return compute_; }
  double sync_seconds() const noexcept { return sync_; }
  double ema_decay() const noexcept { return ema_decay_; }

 private:
  double ema_decay_;
  double compute_ = 0.0;
  double sync_ = 0.0;
  bool has_compute_ = false;
  bool has_sync_ = false;
};

/// Number of local steps that elapse while a sync of `sync_seconds` runs:
/// ceil(sync_seconds / T_c), at least 1. Requires an observed T_c.
int overlap_depth(const NetworkTimings& timings, double sync_seconds);

/// Seeded log-normal multiplicative noise, exp(sigma * z) with z ~ N(0,1).
/// Each draw is a pure function of (seed, draw index), so two instances with
/// the same seed replay the same sequence. sigma == 0 returns 1 exactly.
class TimingJitter {
 public:
  TimingJitter(double sigma, std::uint64_t seed) : sigma_(sigma), seed_(seed) {}

  double next();
  double apply(double seconds) { return seconds * next(); }

 private:
  double sigma_;
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
};

// floor/ceil that snap ratios within a few ulps of an integer onto it, so
// 0.7 / 0.1 rounds to 7 rather than 6.999... or 7.000...1.
std::int64_t stable_floor(double x);
std::int64_t stable_ceil(double x);

}  // namespace overlapsim
