// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "overlapsim/error.hpp"
#include "overlapsim/harness.hpp"
#include "overlapsim/scheduler.hpp"
#include "overlapsim/simulation.hpp"
#include "support.hpp"

using namespace overlapsim;
using overlapsim::testing::Gen;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v) { return format_double(v); }

// 1 -------------------------------------------------------------------------
void unit_suite() {
  const auto start = Clock::now();
  std::ostringstream sink;
  doctest::Context ctx;
  ctx.setCout(&sink);
  const int rc = ctx.run();
  const double secs = seconds_since(start);
  std::string detail = "doctest exit " + std::to_string(rc) + " in " + fmt(secs) + " s (< 10 s)";
  if (rc != 0) detail += "\n" + sink.str();
  report(1, "unit suite", rc == 0 && secs < 10.0, detail);
}

// 2 -------------------------------------------------------------------------
void capacity_plan() {
  const auto p = plan(SchedulerConfig{0.4, 100, 4}, 1.0, 5.0);
  report(2, "capacity planning", p.syncs_per_window == 8 && p.interval == 12,
         "N=" + std::to_string(p.syncs_per_window) + " h=" + std::to_string(p.interval) +
             " (want N=8 h=12)");
}

// 3 -------------------------------------------------------------------------
bool lockstep_equal(Simulation& a, Simulation& b, std::int64_t steps, std::string& why) {
  for (std::int64_t t = 0; t < steps; ++t) {
    a.run_round();
    b.run_round();
    for (int w = 0; w < a.num_workers(); ++w) {
      const auto i = static_cast<std::size_t>(w);
      if (!(a.workers()[i].params == b.workers()[i].params)) {
        why = "worker " + std::to_string(w) + " diverged at step " + std::to_string(t + 1);
        return false;
      }
    }
    if (!(a.global_params() == b.global_params())) {
      why = "global state diverged at step " + std::to_string(t + 1);
      return false;
    }
  }
  return true;
}

void reduction_oracle() {
  const auto start = Clock::now();
  const auto task = overlapsim::testing::least_squares_task(4, 7, 16, 4);
  constexpr std::int64_t kSteps = 500;

  SimulationConfig base;
  base.protocol.H = 100;
  base.protocol.K = 4;
  base.protocol.alpha = 0.5;
  base.timing.tau = 5;
  base.inner.lr = 0.01;
  base.total_steps = kSteps;

  // Streaming vs cocodc with compensation off, round-robin, N forced to K.
  SimulationConfig streaming = base;
  streaming.protocol.method = Method::streaming_diloco;
  SimulationConfig reduced = base;
  reduced.protocol.method = Method::cocodc;
  reduced.protocol.compensation = false;
  reduced.protocol.selection = Selection::round_robin;
  reduced.gamma = 1e-9;
  Simulation s1(streaming, task);
  Simulation c1(reduced, task);
  std::string why1 = "bit-identical over 500 steps";
  const bool ok1 = lockstep_equal(s1, c1, kSteps, why1) && !s1.sync_log().empty();

  // DiLoCo vs cocodc with K=1, blocking, full adoption.
  SimulationConfig diloco = base;
  diloco.protocol.method = Method::diloco;
  SimulationConfig single = reduced;
  single.protocol.K = 1;
  single.protocol.blocking = true;
  single.protocol.alpha = 1.0;
  Simulation d2(diloco, task);
  Simulation c2(single, task);
  std::string why2 = "bit-identical over 500 steps";
  bool ok2 = lockstep_equal(d2, c2, kSteps, why2) && d2.sync_log().size() == 4;

  // And DiLoCo against an independent straight-line implementation.
  const auto reference = overlapsim::testing::reference_diloco(task, diloco, kSteps);
  for (int w = 0; w < d2.num_workers(); ++w) {
    if (!(d2.workers()[static_cast<std::size_t>(w)].params ==
          reference[static_cast<std::size_t>(w)])) {
      ok2 = false;
      why2 = "simulator diloco differs from reference loop";
    }
  }

  const double secs = seconds_since(start);
  report(3, "reduction oracle", ok1 && ok2 && secs < 30.0,
         "streaming: " + why1 + "; diloco: " + why2 + "; " + fmt(secs) + " s (< 30 s)");
}

// 4 -------------------------------------------------------------------------
void compensation_zero_cases() {
  Gen gen(404);
  int checked = 0;
  bool ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = trial < 100 ? 1 : static_cast<std::size_t>(gen.integer(2, 64));
    const ParamVector now = gen.vec(n);
    const ParamVector init = gen.vec(n);
    const ParamVector global = gen.vec(n);
    const int tau = gen.integer(1, 30);
    const int h = gen.integer(tau, 1000);
    const double lambda = gen.real(0.0, 10.0);

    const auto zero = compensate(now, init, global, 0.0, h, tau, false);
    for (std::size_t i = 0; i < n; ++i) ok = ok && zero[i] == global[i] + (now[i] - init[i]);

    const auto flat_a = compensate(now, init, init, lambda, h, tau, false);
    const auto flat_b = compensate(now, init, init, 0.0, h, tau, false);
    ok = ok && flat_a == flat_b;
    ++checked;
  }
  report(4, "compensation zero cases", ok,
         std::to_string(checked) + " fragments (100 scalar, 100 vector), exact equality");
}

// 5 -------------------------------------------------------------------------
void scheduler_properties() {
  Gen gen(5555);
  int guard = 0;
  int argmax = 0;
  bool ok_ab = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const int k = gen.integer(1, 12);
    const int h = gen.integer(k, 300);
    const std::int64_t now = gen.integer(1, 5000);
    ImpactTracker tracker(k);
    for (int p = 0; p < k; ++p) {
      if (gen.integer(0, 5) == 0) continue;  // never synced
      // Mostly recent syncs so both branches get exercised.
      const int lo = static_cast<int>(std::max<std::int64_t>(1, now - 2 * h));
      const std::int64_t last = gen.integer(lo, static_cast<int>(now));
      tracker.update(p, ParamVector{static_cast<double>(gen.integer(0, 3)) * last}, last);
    }
    const int got = select_fragment(tracker, now, h);

    int starved = -1;
    for (int p = 0; p < k && starved < 0; ++p) {
      if (now - tracker.last_sync_step(p) >= h) starved = p;
    }
    if (starved >= 0) {
      ++guard;
      ok_ab = ok_ab && got == starved;
    } else {
      ++argmax;
      int best = 0;
      for (int p = 1; p < k; ++p) {
        if (tracker.impact(p) > tracker.impact(best)) best = p;
      }
      ok_ab = ok_ab && got == best;
    }
  }

  bool ok_c = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const int k = gen.integer(1, 16);
    const SchedulerConfig cfg{gen.real(1e-6, 1.0), gen.integer(k, 1000), k};
    const auto p = plan(cfg, gen.real(1e-3, 10.0), gen.real(1e-3, 100.0));
    ok_c = ok_c && p.syncs_per_window >= k && p.interval >= 1;
  }

  // (d) a 5,000-step non-IID run; every replica's tracker decides independently.
  TaskConfig tc;
  tc.dirichlet_alpha = 0.3;
  tc.num_layers = 8;
  const auto task = make_task(tc, 4);
  SimulationConfig sc;
  sc.total_steps = 5000;
  sc.protocol.H = 100;
  sc.protocol.K = 4;
  Simulation sim(sc, task);
  int decisions = 0;
  bool ok_d = true;
  for (std::int64_t t = 0; t < 5000; ++t) {
    const int busy = sim.in_flight() ? sim.in_flight()->fragment : -1;
    const auto trackers = sim.trackers();
    const int first = select_fragment(trackers[0], sim.step(), sc.protocol.H, busy);
    for (const auto& tr : trackers) {
      ok_d = ok_d && select_fragment(tr, sim.step(), sc.protocol.H, busy) == first;
    }
    ++decisions;
    try {
      sim.run_round();
    } catch (const InternalError&) {
      ok_d = false;
      break;
    }
  }
  const bool ok = ok_ab && ok_c && ok_d && !sim.selections().empty();
  report(5, "scheduler properties", ok,
         "(a) " + std::to_string(guard) + " guard + (b) " + std::to_string(argmax) +
             " argmax states " + (ok_ab ? "ok" : "MISMATCH") + "; (c) N>=K " +
             (ok_c ? "ok" : "VIOLATED") + "; (d) " + std::to_string(decisions) +
             " steps, " + std::to_string(sim.selections().size()) + " selections, " +
             (ok_d ? "workers agree" : "workers DISAGREE"));
}

// 6 -------------------------------------------------------------------------
void consensus() {
  TaskConfig tc;
  tc.identical_shards = true;
  tc.dirichlet_alpha = 0.3;
  const auto task = make_task(tc, 4);
  bool ok = true;
  std::string detail;
  for (Method m : {Method::diloco, Method::streaming_diloco, Method::cocodc}) {
    SimulationConfig sc;
    sc.protocol.method = m;
    sc.total_steps = 2000;
    Simulation sim(sc, task);
    bool same = true;
    for (int t = 0; t < 2000 && same; ++t) {
      sim.run_round();
      for (const auto& w : sim.workers()) same = same && w.params == sim.workers()[0].params;
    }
    ok = ok && same && !sim.sync_log().empty();
    detail += std::string(to_string(m)) + (same ? " identical; " : " DIVERGED; ");
  }
  report(6, "consensus invariant", ok, detail + "4 workers x 2000 steps");
}

// 7 / 8 ---------------------------------------------------------------------
double reached_or_inf(const RunRecord& r) {
  return r.steps_to_threshold ? static_cast<double>(*r.steps_to_threshold)
                              : std::numeric_limits<double>::infinity();
}

std::string opt_steps(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string("not reached");
}

void trends(const std::string& config_path) {
  const auto start = Clock::now();
  ExperimentConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    report(7, "trend reproduction", false, std::string("cannot load config: ") + e.what());
    report(8, "staleness hurts baseline", false, "no config");
    return;
  }

  const std::vector<Method> methods{Method::streaming_diloco, Method::cocodc, Method::diloco};
  const auto records = run_experiment(cfg, methods);
  std::map<Method, std::vector<const RunRecord*>> by;
  for (const auto& r : records) by[r.method].push_back(&r);
  const auto summary = summarize(records);
  auto find = [&](Method m) {
    return *std::find_if(summary.begin(), summary.end(),
                         [&](const MethodSummary& s) { return s.method == m; });
  };
  const auto s = find(Method::streaming_diloco);
  const auto c = find(Method::cocodc);
  const auto d = find(Method::diloco);

  int streaming_worse = 0;
  const auto& sr = by[Method::streaming_diloco];
  const auto& cr = by[Method::cocodc];
  for (std::size_t i = 0; i < sr.size(); ++i) {
    if (reached_or_inf(*sr[i]) > reached_or_inf(*cr[i])) ++streaming_worse;
  }
  const double inf = std::numeric_limits<double>::infinity();
  const double ms = s.median_steps_to_threshold.value_or(inf);
  const double mc = c.median_steps_to_threshold.value_or(inf);
  const bool any_failed = std::any_of(records.begin(), records.end(),
                                      [](const RunRecord& r) { return r.failed; });
  const int seeds = static_cast<int>(cfg.seeds.size());
  const bool ok_a = mc <= ms && mc < inf && streaming_worse * 10 >= 7 * seeds;
  const bool ok_b = c.median_final_loss <= s.median_final_loss;
  const double secs7 = seconds_since(start);
  report(7, "trend reproduction",
         ok_a && ok_b && !any_failed && seeds >= 10 && cfg.total_steps <= 20000,
         "(a) median steps cocodc " + opt_steps(c.median_steps_to_threshold) +
             " vs streaming " + opt_steps(s.median_steps_to_threshold) + ", streaming worse in " +
             std::to_string(streaming_worse) + "/" + std::to_string(seeds) +
             " seeds; (b) median final loss cocodc " + fmt(c.median_final_loss) +
             " vs streaming " + fmt(s.median_final_loss) + "; observation: diloco steps " +
             opt_steps(d.median_steps_to_threshold) + ", loss " + fmt(d.median_final_loss) +
             "; " + fmt(secs7) + " s");

  // Not a gate: the baseline's mixing factor is a free parameter, and full
  // adoption is its best value on this task. Printed so the gap is visible.
  if (cfg.sim.protocol.alpha != 1.0) {
    ExperimentConfig full = cfg;
    full.sim.protocol.alpha = 1.0;
    const std::vector<Method> only{Method::streaming_diloco};
    const auto f = summarize(run_experiment(full, only)).front();
    std::printf("       observation: streaming with alpha=1: median steps %s, final loss %s\n",
                opt_steps(f.median_steps_to_threshold).c_str(),
                fmt(f.median_final_loss).c_str());
  }

  // 8: same task, streaming only, tau 1 vs tau 20.
  auto with_tau = [&](int tau) {
    ExperimentConfig e = cfg;
    e.sim.timing.tau = tau;
    const std::vector<Method> only{Method::streaming_diloco};
    const auto rs = run_experiment(e, only);
    return summarize(rs).front().median_final_loss;
  };
  const double fresh = with_tau(1);
  const double stale = with_tau(20);
  report(8, "staleness hurts baseline", stale >= fresh,
         "streaming median final loss tau=20 " + fmt(stale) + " vs tau=1 " + fmt(fresh));
  std::printf("       trend experiments took %s s in total (< 600 s)\n",
              fmt(seconds_since(start)).c_str());
  if (seconds_since(start) >= 600.0) {
    report(7, "trend runtime", false, "exceeded 10 minutes");
  }
}

// 9 -------------------------------------------------------------------------
void accounting() {
  TaskConfig tc;
  const auto task = make_task(tc, 4);
  bool ok = true;
  std::string detail;
  for (Method m : {Method::streaming_diloco, Method::cocodc, Method::diloco}) {
    SimulationConfig sc;
    sc.protocol.method = m;
    sc.total_steps = 1000;
    Simulation sim(sc, task);
    const int windows = 10;
    std::map<std::int64_t, std::size_t> window_bytes;
    std::map<std::int64_t, int> window_syncs;
    std::size_t prev_total = 0;
    std::size_t prev_log = 0;
    // One extra round so the sync that closes the last window (step 10H) runs.
    for (std::int64_t t = 0; t <= windows * sc.protocol.H; ++t) {
      sim.run_round();
      // Work started in the round at step t belongs to window (t-1)/H.
      const std::int64_t window = std::max<std::int64_t>(0, t - 1) / sc.protocol.H;
      window_bytes[window] += sim.bytes_transmitted() - prev_total;
      prev_total = sim.bytes_transmitted();
      for (; prev_log < sim.sync_log().size(); ++prev_log) {
        const auto& rec = sim.sync_log()[prev_log];
        window_syncs[(rec.initiated_step - 1) / sc.protocol.H] += 1;
      }
    }
    if (sim.in_flight()) {
      window_syncs[(sim.in_flight()->initiated_step - 1) / sc.protocol.H] += 1;
    }
    std::map<std::int64_t, std::size_t> expected;
    for (const auto& rec : sim.sync_log()) {
      expected[(rec.initiated_step - 1) / sc.protocol.H] +=
          sim.fragmentation().fragment(rec.fragment).byte_size * 4;
    }
    if (sim.in_flight()) {
      expected[(sim.in_flight()->initiated_step - 1) / sc.protocol.H] +=
          sim.fragmentation().fragment(sim.in_flight()->fragment).byte_size * 4;
    }
    for (int w = 0; w < windows; ++w) {
      ok = ok && window_bytes[w] == expected[w];
      if (m == Method::diloco) ok = ok && expected[w] == task.num_params() * 4 * 4;
    }
    if (m == Method::cocodc) {
      bool eight = true;
      for (int w = 0; w < windows; ++w) eight = eight && window_syncs[w] == 8;
      ok = ok && eight && sim.current_plan() == SchedulePlan{8, 12};
      detail += std::string("cocodc ") + (eight ? "8" : "NOT 8") + " syncs in each of 10 windows; ";
    }
  }
  report(9, "accounting", ok, detail + "per-window bytes equal synced fragment sizes x M");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config = argc > 1 ? argv[1] : "configs/reference_logreg.json";
  unit_suite();
  capacity_plan();
  reduction_oracle();
  compensation_zero_cases();
  scheduler_properties();
  consensus();
  trends(config);
  accounting();
  std::printf("%s: %d criterion check(s) failed\n", failures == 0 ? "ACCEPTED" : "REJECTED",
              failures);
  return failures == 0 ? 0 : 1;
}
