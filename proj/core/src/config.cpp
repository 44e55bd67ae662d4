#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "overlapsim/error.hpp"
#include "overlapsim/harness.hpp"

namespace overlapsim {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw ConfigError(key, std::string("expected ") + expected);
}

double read_double(const std::string& key, const json& v) {
  if (!v.is_number()) type_error(key, "a number");
  return v.get<double>();
}

std::int64_t read_int(const std::string& key, const json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) {
      return static_cast<std::int64_t>(d);
    }
  }
  type_error(key, "an integer");
}

std::size_t read_count(const std::string& key, const json& v) {
  const auto n = read_int(key, v);
  if (n < 0) throw ConfigError(key, "must be non-negative");
  return static_cast<std::size_t>(n);
}

int read_small_int(const std::string& key, const json& v) {
  const auto n = read_int(key, v);
  if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
    throw ConfigError(key, "out of range");
  }
  return static_cast<int>(n);
}

bool read_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) type_error(key, "true or false");
  return v.get<bool>();
}

std::string read_string(const std::string& key, const json& v) {
  if (!v.is_string()) type_error(key, "a string");
  return v.get<std::string>();
}

std::uint64_t read_seed(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  const auto n = read_int(key, v);
  if (n < 0) throw ConfigError(key, "seeds must be non-negative");
  return static_cast<std::uint64_t>(n);
}

template <typename Enum>
Enum read_enum(const std::string& key, const json& v,
               Enum (*parse)(std::string_view)) {
  const std::string s = read_string(key, v);
  try {
    return parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(key, "invalid value '" + s + "'");
  }
}

ThresholdMetric parse_threshold_metric(std::string_view s) {
  if (s == "loss") return ThresholdMetric::loss;
  if (s == "ppl") return ThresholdMetric::ppl;
  throw ConfigError("threshold_metric", "expected 'loss' or 'ppl'");
}

EvalModel parse_eval_model(std::string_view s) {
  if (s == "worker_mean") return EvalModel::worker_mean;
  if (s == "worker0") return EvalModel::worker0;
  if (s == "global") return EvalModel::global;
  throw ConfigError("eval_model", "expected worker_mean, worker0 or global");
}

std::string_view name_of(ThresholdMetric m) { return m == ThresholdMetric::loss ? "loss" : "ppl"; }

std::string_view name_of(EvalModel m) {
  switch (m) {
    case EvalModel::worker_mean: return "worker_mean";
    case EvalModel::worker0: return "worker0";
    case EvalModel::global: return "global";
  }
  return "worker_mean";
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&, const json&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

// The flat schema. Order here is the order of the resolved config file.
const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  using S = const std::string&;
  using J = const json&;
  static const std::vector<Field> table = {
      {"method", [](C& c, S k, J v) { c.method = read_enum(k, v, parse_method); },
       [](const C& c) { return json(std::string(to_string(c.method))); }},
      {"methods",
       [](C& c, S k, J v) {
         if (!v.is_array() || v.empty()) type_error(k, "a non-empty list of methods");
         c.methods.clear();
         for (const auto& m : v) c.methods.push_back(read_enum(k, m, parse_method));
       },
       [](const C& c) {
         json a = json::array();
         for (auto m : c.methods) a.push_back(std::string(to_string(m)));
         return a;
       }},
      {"workers", [](C& c, S k, J v) { c.task.num_workers = read_small_int(k, v); },
       [](const C& c) { return json(c.task.num_workers); }},
      {"H", [](C& c, S k, J v) { c.sim.protocol.H = read_small_int(k, v); },
       [](const C& c) { return json(c.sim.protocol.H); }},
      {"K", [](C& c, S k, J v) { c.sim.protocol.K = read_small_int(k, v); },
       [](const C& c) { return json(c.sim.protocol.K); }},
      {"alpha", [](C& c, S k, J v) { c.sim.protocol.alpha = read_double(k, v); },
       [](const C& c) { return json(c.sim.protocol.alpha); }},
      {"lambda", [](C& c, S k, J v) { c.sim.protocol.lambda = read_double(k, v); },
       [](const C& c) { return json(c.sim.protocol.lambda); }},
      {"gamma", [](C& c, S k, J v) { c.sim.gamma = read_double(k, v); },
       [](const C& c) { return json(c.sim.gamma); }},
      {"literal_eq8_sign", [](C& c, S k, J v) { c.sim.protocol.literal_eq8_sign = read_bool(k, v); },
       [](const C& c) { return json(c.sim.protocol.literal_eq8_sign); }},
      {"compensation", [](C& c, S k, J v) { c.sim.protocol.compensation = read_bool(k, v); },
       [](const C& c) { return json(c.sim.protocol.compensation); }},
      {"selection", [](C& c, S k, J v) { c.sim.protocol.selection = read_enum(k, v, parse_selection); },
       [](const C& c) { return json(std::string(to_string(c.sim.protocol.selection))); }},
      {"blocking", [](C& c, S k, J v) { c.sim.protocol.blocking = read_bool(k, v); },
       [](const C& c) { return json(c.sim.protocol.blocking); }},
      {"outer_lr", [](C& c, S k, J v) { c.sim.protocol.outer.outer_lr = read_double(k, v); },
       [](const C& c) { return json(c.sim.protocol.outer.outer_lr); }},
      {"outer_momentum", [](C& c, S k, J v) { c.sim.protocol.outer.momentum = read_double(k, v); },
       [](const C& c) { return json(c.sim.protocol.outer.momentum); }},
      {"timing_mode", [](C& c, S k, J v) { c.sim.timing.mode = read_enum(k, v, parse_timing_mode); },
       [](const C& c) { return json(std::string(to_string(c.sim.timing.mode))); }},
      {"tau", [](C& c, S k, J v) { c.sim.timing.tau = read_small_int(k, v); },
       [](const C& c) { return json(c.sim.timing.tau); }},
      {"compute_seconds", [](C& c, S k, J v) { c.sim.timing.compute_seconds = read_double(k, v); },
       [](const C& c) { return json(c.sim.timing.compute_seconds); }},
      {"latency", [](C& c, S k, J v) { c.sim.timing.link.latency = read_double(k, v); },
       [](const C& c) { return json(c.sim.timing.link.latency); }},
      {"bandwidth", [](C& c, S k, J v) { c.sim.timing.link.bandwidth = read_double(k, v); },
       [](const C& c) { return json(c.sim.timing.link.bandwidth); }},
      {"bytes_per_element", [](C& c, S k, J v) { c.sim.timing.bytes_per_element = read_count(k, v); },
       [](const C& c) { return json(c.sim.timing.bytes_per_element); }},
      {"ema_decay", [](C& c, S k, J v) { c.sim.timing.ema_decay = read_double(k, v); },
       [](const C& c) { return json(c.sim.timing.ema_decay); }},
      {"jitter_sigma", [](C& c, S k, J v) { c.sim.timing.jitter_sigma = read_double(k, v); },
       [](const C& c) { return json(c.sim.timing.jitter_sigma); }},
      {"task", [](C& c, S k, J v) { c.task.kind = read_enum(k, v, parse_task_kind); },
       [](const C& c) { return json(std::string(to_string(c.task.kind))); }},
      {"feature_dim", [](C& c, S k, J v) { c.task.feature_dim = read_count(k, v); },
       [](const C& c) { return json(c.task.feature_dim); }},
      {"num_classes", [](C& c, S k, J v) { c.task.num_classes = read_count(k, v); },
       [](const C& c) { return json(c.task.num_classes); }},
      {"num_layers", [](C& c, S k, J v) { c.task.num_layers = read_count(k, v); },
       [](const C& c) { return json(c.task.num_layers); }},
      {"hidden_width", [](C& c, S k, J v) { c.task.hidden_width = read_count(k, v); },
       [](const C& c) { return json(c.task.hidden_width); }},
      {"samples_per_worker", [](C& c, S k, J v) { c.task.samples_per_worker = read_count(k, v); },
       [](const C& c) { return json(c.task.samples_per_worker); }},
      {"validation_samples", [](C& c, S k, J v) { c.task.validation_samples = read_count(k, v); },
       [](const C& c) { return json(c.task.validation_samples); }},
      {"batch_size", [](C& c, S k, J v) { c.task.batch_size = read_count(k, v); },
       [](const C& c) { return json(c.task.batch_size); }},
      {"dirichlet_alpha",
       [](C& c, S k, J v) {
         if (v.is_string() && v.get<std::string>() == "inf") {
           c.task.dirichlet_alpha = std::numeric_limits<double>::infinity();
         } else {
           c.task.dirichlet_alpha = read_double(k, v);
         }
       },
       [](const C& c) {
         return std::isinf(c.task.dirichlet_alpha) ? json("inf")
                                                   : json(c.task.dirichlet_alpha);
       }},
      {"feature_shift", [](C& c, S k, J v) { c.task.feature_shift = read_double(k, v); },
       [](const C& c) { return json(c.task.feature_shift); }},
      {"class_separation", [](C& c, S k, J v) { c.task.class_separation = read_double(k, v); },
       [](const C& c) { return json(c.task.class_separation); }},
      {"noise_std", [](C& c, S k, J v) { c.task.noise_std = read_double(k, v); },
       [](const C& c) { return json(c.task.noise_std); }},
      {"identical_shards", [](C& c, S k, J v) { c.task.identical_shards = read_bool(k, v); },
       [](const C& c) { return json(c.task.identical_shards); }},
      {"lr", [](C& c, S k, J v) { c.sim.inner.lr = read_double(k, v); },
       [](const C& c) { return json(c.sim.inner.lr); }},
      {"beta1", [](C& c, S k, J v) { c.sim.inner.beta1 = read_double(k, v); },
       [](const C& c) { return json(c.sim.inner.beta1); }},
      {"beta2", [](C& c, S k, J v) { c.sim.inner.beta2 = read_double(k, v); },
       [](const C& c) { return json(c.sim.inner.beta2); }},
      {"eps", [](C& c, S k, J v) { c.sim.inner.eps = read_double(k, v); },
       [](const C& c) { return json(c.sim.inner.eps); }},
      {"weight_decay", [](C& c, S k, J v) { c.sim.inner.weight_decay = read_double(k, v); },
       [](const C& c) { return json(c.sim.inner.weight_decay); }},
      {"warmup_steps", [](C& c, S k, J v) { c.sim.warmup_steps = read_int(k, v); },
       [](const C& c) { return json(c.sim.warmup_steps); }},
      {"min_lr_ratio", [](C& c, S k, J v) { c.sim.min_lr_ratio = read_double(k, v); },
       [](const C& c) { return json(c.sim.min_lr_ratio); }},
      {"total_steps", [](C& c, S k, J v) { c.total_steps = read_int(k, v); },
       [](const C& c) { return json(c.total_steps); }},
      {"eval_every", [](C& c, S k, J v) { c.eval_every = read_int(k, v); },
       [](const C& c) { return json(c.eval_every); }},
      {"eval_model", [](C& c, S k, J v) { c.eval_model = read_enum(k, v, parse_eval_model); },
       [](const C& c) { return json(std::string(name_of(c.eval_model))); }},
      {"threshold", [](C& c, S k, J v) { c.threshold = read_double(k, v); },
       [](const C& c) { return json(c.threshold); }},
      {"threshold_metric",
       [](C& c, S k, J v) { c.threshold_metric = read_enum(k, v, parse_threshold_metric); },
       [](const C& c) { return json(std::string(name_of(c.threshold_metric))); }},
      {"seeds",
       [](C& c, S k, J v) {
         if (v.is_number()) {
           c.seeds = {read_seed(k, v)};
           return;
         }
         if (!v.is_array() || v.empty()) type_error(k, "a non-empty list of seeds");
         c.seeds.clear();
         for (const auto& s : v) c.seeds.push_back(read_seed(k, s));
       },
       [](const C& c) { return json(c.seeds); }},
      {"output", [](C& c, S k, J v) { c.output = read_string(k, v); },
       [](const C& c) { return json(c.output); }},
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

json parse_json_text(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set", "expected key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare strings need no quoting on the command line
  }
  doc[key] = std::move(value);
}

void check_cross_fields(const ExperimentConfig& c) {
  if (c.total_steps < 1) throw ConfigError("total_steps", "must be positive");
  if (c.eval_every < 1) throw ConfigError("eval_every", "must be positive");
  if (!(c.threshold > 0.0) || !std::isfinite(c.threshold)) {
    throw ConfigError("threshold", "must be a positive number");
  }
  if (c.output.empty()) throw ConfigError("output", "must not be empty");
  c.task.validate();
  std::vector<Method> all = c.methods;
  all.push_back(c.method);
  for (Method m : all) {
    SimulationConfig sim = c.sim;
    sim.protocol.method = m;
    sim.validate(c.task.num_workers);
  }
  // Catch K/num_layers mismatches before any run starts.
  (void)make_task(c.task, c.sim.protocol.K);
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text,
                              std::span<const std::string> overrides) {
  json doc = parse_json_text(json_text, "config");
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& o : overrides) apply_override(doc, o);

  ExperimentConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "sweep") {
      if (!value.is_object()) type_error(key, "an object of key -> list of values");
      for (const auto& [skey, svals] : value.items()) {
        if (find_field(skey) == nullptr) {
          throw ConfigError("sweep." + skey, "unknown key");
        }
        if (!svals.is_array() || svals.empty()) {
          type_error("sweep." + skey, "a non-empty list");
        }
        std::vector<std::string> literals;
        for (const auto& v : svals) literals.push_back(v.dump());
        cfg.sweep.emplace_back(skey, std::move(literals));
      }
      continue;
    }
    const Field* field = find_field(key);
    if (field == nullptr) throw ConfigError(key, "unknown key");
    field->set(cfg, key, value);
  }
  cfg.sim.total_steps = cfg.total_steps;
  cfg.source_json = doc.dump();
  check_cross_fields(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json out = json::object();
  for (const auto& f : fields()) out[f.key] = f.get(cfg);
  if (!cfg.sweep.empty()) {
    json sweep = json::object();
    for (const auto& [key, values] : cfg.sweep) {
      json arr = json::array();
      for (const auto& v : values) arr.push_back(json::parse(v));
      sweep[key] = arr;
    }
    out["sweep"] = sweep;
  }
  return out.dump(2) + "\n";
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg) {
  if (cfg.sweep.empty()) return {SweepPoint{"", cfg}};

  json base = json::parse(cfg.source_json);
  base.erase("sweep");
  const std::string base_text = base.dump();

  std::vector<SweepPoint> points;
  std::vector<std::size_t> index(cfg.sweep.size(), 0);
  while (true) {
    std::vector<std::string> assignments;
    std::string label;
    for (std::size_t i = 0; i < cfg.sweep.size(); ++i) {
      const auto& [key, values] = cfg.sweep[i];
      assignments.push_back(key + "=" + values[index[i]]);
      if (!label.empty()) label += ",";
      std::string shown = values[index[i]];
      if (shown.size() >= 2 && shown.front() == '"') shown = shown.substr(1, shown.size() - 2);
      label += key + "=" + shown;
    }
    points.push_back(SweepPoint{label, parse_config(base_text, assignments)});

    // Odometer increment, last key fastest.
    std::size_t i = cfg.sweep.size();
    while (i > 0) {
      --i;
      if (++index[i] < cfg.sweep[i].second.size()) break;
      index[i] = 0;
      if (i == 0) return points;
    }
  }
}

}  // namespace overlapsim
