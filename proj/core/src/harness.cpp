#include "overlapsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include "json.hpp"
#include "overlapsim/error.hpp"

namespace overlapsim {
namespace {

using ordered_json = nlohmann::ordered_json;

double metric_of(const EvalPoint& p, ThresholdMetric metric) {
  return metric == ThresholdMetric::loss ? p.val_loss : p.val_ppl;
}

ordered_json number_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

// Median with the upper/lower middle averaged; infinities propagate.
double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  const double lo = values[n / 2 - 1];
  const double hi = values[n / 2];
  if (std::isinf(hi)) return hi;
  return 0.5 * (lo + hi);
}

ParamVector eval_params(const Simulation& sim, EvalModel model) {
  switch (model) {
    case EvalModel::worker_mean: return sim.mean_params();
    case EvalModel::worker0: return sim.workers().front().params;
    case EvalModel::global: return sim.global_params();
  }
  return sim.mean_params();
}

}  // namespace

std::optional<std::int64_t> steps_to_threshold(std::span<const EvalPoint> curve,
                                               double threshold,
                                               ThresholdMetric metric) {
  for (const auto& p : curve) {
    if (metric_of(p, metric) <= threshold) return p.step;
  }
  return std::nullopt;
}

std::optional<std::int64_t> steps_to_threshold(const RunRecord& record, double threshold,
                                               ThresholdMetric metric) {
  return steps_to_threshold(record.curve, threshold, metric);
}

SimulationConfig run_simulation_config(const ExperimentConfig& cfg, Method method,
                                       std::uint64_t seed) {
  SimulationConfig sc = cfg.sim;
  sc.protocol.method = method;
  sc.total_steps = cfg.total_steps;
  sc.seed = seed;
  return sc;
}

RunRecord run_single(const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
  RunRecord rec;
  rec.method = method;
  rec.seed = seed;

  const SimulationConfig sc = run_simulation_config(cfg, method, seed);
  TaskConfig tc = cfg.task;
  tc.seed = seed;
  const SyntheticTask task = make_task(tc, sc.protocol.resolved().K);
  Simulation sim(sc, task);

  auto record_eval = [&]() {
    const EvalReport r = evaluate(task, eval_params(sim, cfg.eval_model));
    rec.curve.push_back(EvalPoint{sim.step(), sim.virtual_seconds(), r.val_loss, r.val_ppl});
    if (!std::isfinite(r.val_loss)) {
      throw NumericError("validation loss is not finite", sim.step());
    }
  };

  try {
    record_eval();
    while (sim.step() < cfg.total_steps) {
      const std::int64_t next =
          std::min(cfg.total_steps, (sim.step() / cfg.eval_every + 1) * cfg.eval_every);
      sim.run(next - sim.step());
      record_eval();
    }
  } catch (const NumericError& e) {
    rec.failed = true;
    rec.failure = std::string(e.what()) + " (step " + std::to_string(e.step()) + ")";
  }

  if (!rec.curve.empty()) {
    rec.final_loss = rec.curve.back().val_loss;
    rec.final_ppl = rec.curve.back().val_ppl;
  }
  if (!rec.failed) {
    rec.steps_to_threshold = steps_to_threshold(rec, cfg.threshold, cfg.threshold_metric);
  }
  rec.virtual_seconds = sim.virtual_seconds();
  rec.bytes_transmitted = sim.bytes_transmitted();
  rec.sync_counts = sim.sync_counts();
  return rec;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      std::span<const Method> methods, int jobs) {
  struct Job {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (Method m : methods) {
    for (std::uint64_t s : cfg.seeds) work.push_back(Job{m, s});
  }
  std::vector<RunRecord> out(work.size());

  const auto threads = static_cast<std::size_t>(std::clamp<int>(
      jobs, 1, static_cast<int>(std::max<std::size_t>(1, work.size()))));
  if (threads == 1) {
    for (std::size_t i = 0; i < work.size(); ++i) {
      out[i] = run_single(cfg, work[i].method, work[i].seed);
    }
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = next++; i < work.size(); i = next++) {
            out[i] = run_single(cfg, work[i].method, work[i].seed);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<MethodSummary> summarize(std::span<const RunRecord> records) {
  std::vector<Method> order;
  for (const auto& r : records) {
    if (std::find(order.begin(), order.end(), r.method) == order.end()) {
      order.push_back(r.method);
    }
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<MethodSummary> out;
  for (Method m : order) {
    MethodSummary s;
    s.method = m;
    std::vector<double> losses, ppls, steps;
    for (const auto& r : records) {
      if (r.method != m) continue;
      ++s.runs;
      if (r.failed) ++s.failed;
      if (r.steps_to_threshold) ++s.reached;
      losses.push_back(r.failed ? inf : r.final_loss);
      ppls.push_back(r.failed ? inf : r.final_ppl);
      steps.push_back(r.steps_to_threshold ? static_cast<double>(*r.steps_to_threshold) : inf);
    }
    s.median_final_loss = median(losses);
    s.median_final_ppl = median(ppls);
    const double ms = median(steps);
    if (std::isfinite(ms)) s.median_steps_to_threshold = ms;
    out.push_back(s);
  }
  return out;
}

std::string curve_file_name(const RunRecord& record, CurveFormat format) {
  return std::string(to_string(record.method)) + "_seed" + std::to_string(record.seed) +
         (format == CurveFormat::csv ? ".csv" : ".json");
}

std::string curve_csv(const RunRecord& record) {
  std::string out = "step,virtual_seconds,val_loss,val_ppl\n";
  for (const auto& p : record.curve) {
    out += std::to_string(p.step);
    out += ',';
    out += format_double(p.virtual_seconds);
    out += ',';
    out += format_double(p.val_loss);
    out += ',';
    out += format_double(p.val_ppl);
    out += '\n';
  }
  return out;
}

std::string curve_json(const RunRecord& record) {
  ordered_json doc = ordered_json::object();
  doc["method"] = std::string(to_string(record.method));
  doc["seed"] = record.seed;
  ordered_json points = ordered_json::array();
  for (const auto& p : record.curve) {
    ordered_json e = ordered_json::object();
    e["step"] = p.step;
    e["virtual_seconds"] = number_or_null(p.virtual_seconds);
    e["val_loss"] = number_or_null(p.val_loss);
    e["val_ppl"] = number_or_null(p.val_ppl);
    points.push_back(std::move(e));
  }
  doc["curve"] = std::move(points);
  return doc.dump(2) + "\n";
}

std::string summary_json(const ExperimentConfig& cfg, std::span<const RunRecord> records) {
  ordered_json doc = ordered_json::object();
  doc["threshold"] = cfg.threshold;
  doc["threshold_metric"] = cfg.threshold_metric == ThresholdMetric::loss ? "loss" : "ppl";

  ordered_json runs = ordered_json::array();
  for (const auto& r : records) {
    ordered_json e = ordered_json::object();
    e["method"] = std::string(to_string(r.method));
    e["seed"] = r.seed;
    e["failed"] = r.failed;
    if (r.failed) e["failure"] = r.failure;
    e["steps_to_threshold"] =
        r.steps_to_threshold ? ordered_json(*r.steps_to_threshold) : ordered_json(nullptr);
    e["final_loss"] = number_or_null(r.final_loss);
    e["final_ppl"] = number_or_null(r.final_ppl);
    e["virtual_seconds"] = r.virtual_seconds;
    e["bytes_transmitted"] = r.bytes_transmitted;
    e["sync_counts"] = r.sync_counts;
    runs.push_back(std::move(e));
  }
  doc["runs"] = std::move(runs);

  ordered_json methods = ordered_json::array();
  for (const auto& s : summarize(records)) {
    ordered_json e = ordered_json::object();
    e["method"] = std::string(to_string(s.method));
    e["runs"] = s.runs;
    e["failed"] = s.failed;
    e["reached"] = s.reached;
    e["median_final_loss"] = number_or_null(s.median_final_loss);
    e["median_final_ppl"] = number_or_null(s.median_final_ppl);
    e["median_steps_to_threshold"] = s.median_steps_to_threshold
                                         ? ordered_json(*s.median_steps_to_threshold)
                                         : ordered_json(nullptr);
    methods.push_back(std::move(e));
  }
  doc["methods"] = std::move(methods);
  return doc.dump(2) + "\n";
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

void emit(const ExperimentConfig& cfg, std::span<const RunRecord> records,
          const std::filesystem::path& dir, CurveFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }
  for (const auto& r : records) {
    write_file_atomic(dir / curve_file_name(r, format),
                      format == CurveFormat::csv ? curve_csv(r) : curve_json(r));
  }
  write_file_atomic(dir / "summary.json", summary_json(cfg, records));
  write_file_atomic(dir / "config.resolved.json", resolved_config_json(cfg));
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

}  // namespace overlapsim
