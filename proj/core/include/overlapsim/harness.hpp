#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "overlapsim/protocol.hpp"
#include "overlapsim/simulation.hpp"
#include "overlapsim/tasks.hpp"

namespace overlapsim {

enum class ThresholdMetric { loss, ppl };
// Which parameters are scored at each evaluation point.
enum class EvalModel { worker_mean, worker0, global };
enum class CurveFormat { csv, json };

/// Everything needed to reproduce a set of runs. Parsed from a flat JSON
/// object (see parse_config); unknown keys are rejected.
struct ExperimentConfig {
  Method method = Method::cocodc;                  // used by `run`
  std::vector<Method> methods{Method::diloco, Method::streaming_diloco,
                              Method::cocodc};     // used by `compare`/`sweep`
  TaskConfig task;
  SimulationConfig sim;
  std::int64_t total_steps = 2000;
  std::int64_t eval_every = 50;
  double threshold = 20.0;
  ThresholdMetric threshold_metric = ThresholdMetric::ppl;
  EvalModel eval_model = EvalModel::worker_mean;
  std::vector<std::uint64_t> seeds{1};
  std::string output = "out";
  // sweep: key -> candidate values (each a JSON literal).
  std::vector<std::pair<std::string, std::vector<std::string>>> sweep;

  // The merged JSON document this config was parsed from (after overrides).
  std::string source_json;
};

/// Parses a JSON config, applying `overrides` ("key=value", value parsed as
/// JSON when possible, else taken as a string) on top. Throws ConfigError
/// naming the offending key.
ExperimentConfig parse_config(std::string_view json_text,
                              std::span<const std::string> overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides = {});

// Fully resolved config (every key, defaults filled in) as pretty JSON.
std::string resolved_config_json(const ExperimentConfig& cfg);

struct SweepPoint {
  std::string label;  // e.g. "tau=1,alpha=0.5"
  ExperimentConfig config;
};

// Cartesian product over cfg.sweep; a single point when sweep is empty.
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg);

struct EvalPoint {
  std::int64_t step = 0;
  double virtual_seconds = 0.0;
  double val_loss = 0.0;
  double val_ppl = 1.0;

  bool operator==(const EvalPoint&) const = default;
};

struct RunRecord {
  Method method = Method::cocodc;
  std::uint64_t seed = 0;
  std::vector<EvalPoint> curve;
  bool failed = false;
  std::string failure;
  std::optional<std::int64_t> steps_to_threshold;
  double final_loss = 0.0;
  double final_ppl = 0.0;
  double virtual_seconds = 0.0;
  std::size_t bytes_transmitted = 0;
  std::vector<std::int64_t> sync_counts;

  bool operator==(const RunRecord&) const = default;
};

/// First evaluation step whose metric is <= threshold, if any.
std::optional<std::int64_t> steps_to_threshold(std::span<const EvalPoint> curve,
                                               double threshold,
                                               ThresholdMetric metric);
std::optional<std::int64_t> steps_to_threshold(const RunRecord& record,
                                               double threshold,
                                               ThresholdMetric metric);

/// Builds the simulation config for one (method, seed) run.
SimulationConfig run_simulation_config(const ExperimentConfig& cfg, Method method,
                                       std::uint64_t seed);

/// One run. Non-finite values end the run early with `failed` set; the
/// curve up to that point is kept.
RunRecord run_single(const ExperimentConfig& cfg, Method method,
                     std::uint64_t seed);

/// One record per (method, seed), methods outermost. `jobs` > 1 runs them
/// on that many threads; results do not depend on it.
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg,
                                      std::span<const Method> methods,
                                      int jobs = 1);

struct MethodSummary {
  Method method = Method::cocodc;
  int runs = 0;
  int failed = 0;
  int reached = 0;
  double median_final_loss = 0.0;
  double median_final_ppl = 0.0;
  std::optional<double> median_steps_to_threshold;  // empty if median not reached
};

std::vector<MethodSummary> summarize(std::span<const RunRecord> records);

std::string curve_file_name(const RunRecord& record, CurveFormat format);
std::string curve_csv(const RunRecord& record);
std::string curve_json(const RunRecord& record);
std::string summary_json(const ExperimentConfig& cfg,
                         std::span<const RunRecord> records);

/// Writes one curve file per run, summary.json and config.resolved.json
/// into `dir` (created if missing). Each file is written to a temporary
/// name and renamed into place. Throws IoError naming the path.
void emit(const ExperimentConfig& cfg, std::span<const RunRecord> records,
          const std::filesystem::path& dir, CurveFormat format = CurveFormat::csv);

void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Shortest round-trip decimal form of a double ("nan"/"inf" for non-finite).
std::string format_double(double value);

}  // namespace overlapsim
