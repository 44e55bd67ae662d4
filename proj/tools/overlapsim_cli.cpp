#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "overlapsim/error.hpp"
#include "overlapsim/harness.hpp"

namespace {

using namespace overlapsim;

enum ExitCode { kOk = 0, kRunFailed = 1, kConfigError = 2, kIoError = 3 };

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::string format = "csv";
  int jobs = 1;
};

ExperimentConfig load(const Options& opt) {
  std::vector<std::string> overrides = opt.sets;
  if (!opt.seeds.empty()) {
    std::string list = "seeds=[";
    for (std::size_t i = 0; i < opt.seeds.size(); ++i) {
      if (i) list += ',';
      list += std::to_string(opt.seeds[i]);
    }
    overrides.push_back(list + "]");
  }
  ExperimentConfig cfg = load_config(opt.config_path, overrides);
  if (!opt.out.empty()) cfg.output = opt.out;
  return cfg;
}

void print_summary(std::span<const RunRecord> records) {
  for (const auto& r : records) {
    std::printf("%-17s seed %-6llu %s  final_loss %-10s steps_to_threshold %s\n",
                std::string(to_string(r.method)).c_str(),
                static_cast<unsigned long long>(r.seed), r.failed ? "FAILED" : "ok    ",
                format_double(r.final_loss).c_str(),
                r.steps_to_threshold ? std::to_string(*r.steps_to_threshold).c_str()
                                     : "not reached");
    if (r.failed) std::printf("  %s\n", r.failure.c_str());
  }
  for (const auto& s : summarize(records)) {
    std::printf("median %-17s final_loss %s  steps_to_threshold %s  (%d/%d reached, %d failed)\n",
                std::string(to_string(s.method)).c_str(),
                format_double(s.median_final_loss).c_str(),
                s.median_steps_to_threshold ? format_double(*s.median_steps_to_threshold).c_str()
                                            : "not reached",
                s.reached, s.runs, s.failed);
  }
}

bool any_failed(std::span<const RunRecord> records) {
  for (const auto& r : records) {
    if (r.failed) return true;
  }
  return false;
}

int execute(const std::string& command, const Options& opt) {
  const ExperimentConfig cfg = load(opt);
  const CurveFormat format = opt.format == "json" ? CurveFormat::json : CurveFormat::csv;

  if (command == "validate") {
    std::cout << resolved_config_json(cfg);
    return kOk;
  }

  bool failed = false;
  if (command == "sweep") {
    for (const auto& point : expand_sweep(cfg)) {
      std::printf("== %s\n", point.label.c_str());
      const auto records = run_experiment(point.config, point.config.methods, opt.jobs);
      emit(point.config, records, std::filesystem::path(cfg.output) / point.label, format);
      print_summary(records);
      failed = failed || any_failed(records);
    }
  } else {
    std::vector<Method> methods = cfg.methods;
    if (command == "run") methods = {cfg.method};
    const auto records = run_experiment(cfg, methods, opt.jobs);
    emit(cfg, records, cfg.output, format);
    print_summary(records);
    failed = any_failed(records);
  }
  std::printf("results written to %s\n", cfg.output.c_str());
  return failed ? kRunFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lockstep simulator for overlapped fragment synchronization"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", opt.config_path, "JSON experiment config")->required();
    sub->add_option("--set", opt.sets, "Override a config key (key=value), repeatable")
        ->allow_extra_args(false);
    sub->add_option("--out", opt.out, "Output directory (overrides `output`)");
    sub->add_option("--seeds", opt.seeds, "Comma-separated seed list")->delimiter(',');
    sub->add_option("--format", opt.format, "Curve file format")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--jobs", opt.jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);
  };
  add_common(app.add_subcommand("run", "Run the config's `method` for every seed"));
  add_common(app.add_subcommand("compare", "Run every method in `methods` for every seed"));
  add_common(app.add_subcommand("sweep", "Compare methods at each point of the `sweep` grid"));
  add_common(app.add_subcommand("validate", "Check a config and print it fully resolved"));

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    return execute(command, opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  }
}
