#include "overlapsim/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "overlapsim/error.hpp"
#include "rng.hpp"

namespace overlapsim {
namespace {

// Seed-derivation tags; keep stable, they define the generated bytes.
constexpr std::uint64_t kTagModel = 1;
constexpr std::uint64_t kTagMixture = 2;
constexpr std::uint64_t kTagValidation = 3;
constexpr std::uint64_t kTagInit = 4;
constexpr std::uint64_t kTagWorkerData = 100;
constexpr std::uint64_t kTagWorkerSample = 1000;

// Layer widths of the classification network: [in, hidden..., classes].
// logistic_regression is the single-layer case.
std::vector<std::size_t> network_dims(const SyntheticTask& task) {
  std::vector<std::size_t> dims{task.feature_dim()};
  if (task.kind() == TaskKind::mlp_classifier) {
    const std::size_t depth = task.layer_sizes().size();
    for (std::size_t l = 0; l + 1 < depth; ++l) dims.push_back(task.hidden_width());
  }
  dims.push_back(task.num_classes());
  return dims;
}

std::vector<std::size_t> split_evenly(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> sizes(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) sizes[i] += 1;
  return sizes;
}

double log_sum_exp(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  return zmax + std::log(sum);
}

// Cross-entropy of a tanh MLP (dims.size()-1 affine layers, tanh between).
// When `grad` is non-null the example's gradient is accumulated into it.
double network_example(std::span<const std::size_t> dims,
                       const ParamVector& params, std::span<const double> x,
                       std::size_t label, ParamVector* grad) {
  const std::size_t layers = dims.size() - 1;
  std::vector<std::vector<double>> acts(layers + 1);
  std::vector<std::size_t> offsets(layers);
  acts[0].assign(x.begin(), x.end());

  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = offset;
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const double* w = params.values().data() + offset;
    const double* b = w + in * out;
    auto& next = acts[l + 1];
    next.assign(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double z = b[o];
      for (std::size_t i = 0; i < in; ++i) z += w[o * in + i] * acts[l][i];
      next[o] = (l + 1 < layers) ? std::tanh(z) : z;
    }
    offset += in * out + out;
  }

  const auto& logits = acts[layers];
  const double lse = log_sum_exp(logits);
  const double loss = lse - logits[label];
  if (grad == nullptr) return loss;

  std::vector<double> delta(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    delta[c] = std::exp(logits[c] - lse) - (c == label ? 1.0 : 0.0);
  }
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const double* w = params.values().data() + offsets[l];
    double* gw = grad->values().data() + offsets[l];
    double* gb = gw + in * out;
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * acts[l][i];
      gb[o] += delta[o];
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += w[o * in + i] * delta[o];
      const double a = acts[l][i];
      prev[i] = s * (1.0 - a * a);
    }
    delta = std::move(prev);
  }
  return loss;
}

double least_squares_example(const ParamVector& params,
                             std::span<const double> x, double y,
                             ParamVector* grad) {
  double pred = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) pred += params[i] * x[i];
  const double r = pred - y;
  if (grad != nullptr) {
    for (std::size_t i = 0; i < x.size(); ++i) (*grad)[i] += r * x[i];
  }
  return 0.5 * r * r;
}

double example_loss(const SyntheticTask& task,
                    std::span<const std::size_t> dims, const Dataset& data,
                    std::size_t row, const ParamVector& params,
                    ParamVector* grad) {
  if (task.kind() == TaskKind::least_squares) {
    return least_squares_example(params, data.row(row), data.targets[row], grad);
  }
  return network_example(dims, params, data.row(row),
                         static_cast<std::size_t>(data.targets[row]), grad);
}

void check_params(const SyntheticTask& task, const ParamVector& params) {
  if (params.size() != task.num_params()) {
    throw InternalError("task expects " + std::to_string(task.num_params()) +
                        " parameters, got " + std::to_string(params.size()));
  }
}

std::vector<double> dirichlet(detail::Rng& rng, std::size_t k, double alpha) {
  std::vector<double> p(k, 1.0 / static_cast<double>(k));
  if (std::isinf(alpha)) return p;
  double sum = 0.0;
  for (auto& v : p) {
    v = rng.gamma(alpha);
    sum += v;
  }
  if (!(sum > 0.0)) {
    // Tiny alpha can underflow every gamma draw; fall back to a point mass.
    std::fill(p.begin(), p.end(), 0.0);
    p[rng.index(k)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::size_t sample_categorical(detail::Rng& rng, std::span<const double> p) {
  const double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    acc += p[c];
    if (u < acc) return c;
  }
  return p.size() - 1;
}

}  // namespace

TaskKind parse_task_kind(std::string_view name) {
  if (name == "least_squares") return TaskKind::least_squares;
  if (name == "logistic_regression") return TaskKind::logistic_regression;
  if (name == "mlp_classifier") return TaskKind::mlp_classifier;
  throw ConfigError("task", "unknown task kind '" + std::string(name) + "'");
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::least_squares: return "least_squares";
    case TaskKind::logistic_regression: return "logistic_regression";
    case TaskKind::mlp_classifier: return "mlp_classifier";
  }
  return "unknown";
}

void TaskConfig::validate() const {
  if (num_workers < 1) throw ConfigError("workers", "must be at least 1");
  if (feature_dim < 1) throw ConfigError("feature_dim", "must be positive");
  if (num_layers < 1) throw ConfigError("num_layers", "must be positive");
  if (kind != TaskKind::least_squares && num_classes < 2) {
    throw ConfigError("num_classes", "classification needs at least 2 classes");
  }
  if (kind == TaskKind::mlp_classifier && hidden_width < 1) {
    throw ConfigError("hidden_width", "must be positive");
  }
  if (samples_per_worker < 1) throw ConfigError("samples_per_worker", "must be positive");
  if (validation_samples < 1) throw ConfigError("validation_samples", "must be positive");
  if (batch_size < 1) throw ConfigError("batch_size", "must be positive");
  if (samples_per_worker < batch_size) {
    throw ConfigError("samples_per_worker", "each worker needs at least one batch of data");
  }
  if (!(dirichlet_alpha > 0.0)) throw ConfigError("dirichlet_alpha", "must be positive");
  if (!(feature_shift >= 0.0)) throw ConfigError("feature_shift", "must be non-negative");
  if (!(class_separation >= 0.0)) throw ConfigError("class_separation", "must be non-negative");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std", "must be non-negative");
}

const WorkerShard& SyntheticTask::shard(int worker) const {
  if (worker < 0 || static_cast<std::size_t>(worker) >= shards_.size()) {
    throw InternalError("no shard for worker " + std::to_string(worker));
  }
  return shards_[static_cast<std::size_t>(worker)];
}

SyntheticTask make_task(const TaskConfig& cfg, int num_fragments) {
  cfg.validate();

  SyntheticTask task;
  task.kind_ = cfg.kind;
  task.feature_dim_ = cfg.feature_dim;
  task.batch_size_ = cfg.batch_size;
  const std::size_t d = cfg.feature_dim;

  switch (cfg.kind) {
    case TaskKind::least_squares:
      task.num_classes_ = 1;
      task.num_params_ = d;
      break;
    case TaskKind::logistic_regression:
      task.num_classes_ = cfg.num_classes;
      task.num_params_ = cfg.num_classes * (d + 1);
      break;
    case TaskKind::mlp_classifier: {
      task.num_classes_ = cfg.num_classes;
      task.hidden_width_ = cfg.hidden_width;
      std::size_t in = d;
      for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::size_t out = (l + 1 < cfg.num_layers) ? cfg.hidden_width : cfg.num_classes;
        task.layer_sizes_.push_back(in * out + out);
        task.num_params_ += in * out + out;
        in = out;
      }
      break;
    }
  }

  if (num_fragments < 1) throw ConfigError("K", "must be positive");
  if (task.num_params_ < static_cast<std::size_t>(num_fragments)) {
    throw ConfigError("feature_dim",
                      "model has " + std::to_string(task.num_params_) +
                          " parameters, fewer than K=" + std::to_string(num_fragments));
  }
  if (cfg.num_layers > task.num_params_) {
    throw ConfigError("num_layers", "more layers than parameters");
  }
  if (cfg.num_layers < static_cast<std::size_t>(num_fragments)) {
    throw ConfigError("num_layers", "fewer layers (" + std::to_string(cfg.num_layers) +
                                        ") than fragments K=" +
                                        std::to_string(num_fragments));
  }
  if (cfg.kind != TaskKind::mlp_classifier) {
    task.layer_sizes_ = split_evenly(task.num_params_, cfg.num_layers);
  }

  const std::size_t workers = static_cast<std::size_t>(cfg.num_workers);
  const std::size_t classes = task.num_classes_;

  // Generative model shared by all workers.
  detail::Rng model_rng(detail::mix_seed(cfg.seed, kTagModel));
  ParamVector truth(d);
  std::vector<double> class_means;
  if (cfg.kind == TaskKind::least_squares) {
    for (auto& w : truth) w = model_rng.normal();
    task.ground_truth_ = truth;
  } else {
    class_means.resize(classes * d);
    for (auto& m : class_means) m = model_rng.normal(0.0, cfg.class_separation);
  }

  // Per-worker skew: label mixture (classification) or feature mean shift.
  detail::Rng mix_rng(detail::mix_seed(cfg.seed, kTagMixture));
  std::vector<std::vector<double>> label_mix(workers);
  std::vector<std::vector<double>> feature_means(workers, std::vector<double>(d, 0.0));
  for (std::size_t m = 0; m < workers; ++m) {
    if (cfg.kind == TaskKind::least_squares) {
      for (auto& mu : feature_means[m]) mu = mix_rng.normal(0.0, cfg.feature_shift);
    } else {
      label_mix[m] = dirichlet(mix_rng, classes, cfg.dirichlet_alpha);
    }
  }

  auto draw_example = [&](detail::Rng& rng, Dataset& out, std::size_t worker,
                          bool uniform_labels) {
    if (cfg.kind == TaskKind::least_squares) {
      double y = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double x = feature_means[worker][i] + rng.normal();
        out.features.push_back(x);
        y += truth[i] * x;
      }
      if (cfg.noise_std > 0.0) y += rng.normal(0.0, cfg.noise_std);
      out.targets.push_back(y);
      return;
    }
    const std::size_t label = uniform_labels ? rng.index(classes)
                                             : sample_categorical(rng, label_mix[worker]);
    for (std::size_t i = 0; i < d; ++i) {
      out.features.push_back(class_means[label * d + i] + rng.normal());
    }
    out.targets.push_back(static_cast<double>(label));
  };

  task.shards_.resize(workers);
  for (std::size_t m = 0; m < workers; ++m) {
    auto& shard = task.shards_[m];
    shard.worker_id = static_cast<int>(m);
    if (cfg.identical_shards && m > 0) {
      shard.data = task.shards_[0].data;
      shard.sample_seed = task.shards_[0].sample_seed;
      continue;
    }
    shard.data.feature_dim = d;
    shard.sample_seed = detail::mix_seed(cfg.seed, kTagWorkerSample + m);
    detail::Rng rng(detail::mix_seed(cfg.seed, kTagWorkerData + m));
    for (std::size_t n = 0; n < cfg.samples_per_worker; ++n) {
      draw_example(rng, shard.data, m, false);
    }
  }

  // Validation follows the population distribution: uniform labels for
  // classification, an even mixture of worker feature shifts for regression.
  task.validation_.feature_dim = d;
  detail::Rng val_rng(detail::mix_seed(cfg.seed, kTagValidation));
  for (std::size_t n = 0; n < cfg.validation_samples; ++n) {
    const std::size_t worker = cfg.kind == TaskKind::least_squares ? val_rng.index(workers) : 0;
    draw_example(val_rng, task.validation_, worker, true);
  }

  task.initial_params_ = ParamVector(task.num_params_);
  if (cfg.kind == TaskKind::mlp_classifier) {
    detail::Rng init_rng(detail::mix_seed(cfg.seed, kTagInit));
    const auto dims = network_dims(task);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      for (std::size_t i = 0; i < dims[l] * dims[l + 1]; ++i) {
        task.initial_params_[offset + i] = init_rng.normal(0.0, scale);
      }
      offset += dims[l] * dims[l + 1] + dims[l + 1];
    }
  }
  return task;
}

LossGrad loss_and_grad(const SyntheticTask& task, const Dataset& data,
                       std::span<const std::size_t> rows,
                       const ParamVector& params) {
  check_params(task, params);
  if (rows.empty()) throw InternalError("loss_and_grad: empty batch");
  const auto dims = network_dims(task);
  LossGrad out{0.0, ParamVector(task.num_params())};
  for (std::size_t row : rows) {
    out.loss += example_loss(task, dims, data, row, params, &out.grad);
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  out.loss *= inv;
  for (auto& g : out.grad) g *= inv;
  return out;
}

double dataset_loss(const SyntheticTask& task, const Dataset& data,
                    const ParamVector& params) {
  check_params(task, params);
  if (data.size() == 0) throw InternalError("dataset_loss: empty dataset");
  const auto dims = network_dims(task);
  double total = 0.0;
  for (std::size_t row = 0; row < data.size(); ++row) {
    total += example_loss(task, dims, data, row, params, nullptr);
  }
  return total / static_cast<double>(data.size());
}

std::uint64_t batch_seed(const WorkerShard& shard, std::int64_t step) {
  return detail::mix_seed(shard.sample_seed, static_cast<std::uint64_t>(step));
}

LossGrad minibatch_grad(const SyntheticTask& task, const WorkerShard& shard,
                        const ParamVector& params, std::uint64_t batch_seed) {
  detail::Rng rng(batch_seed);
  std::vector<std::size_t> rows(task.batch_size());
  for (auto& r : rows) r = rng.index(shard.data.size());
  return loss_and_grad(task, shard.data, rows, params);
}

EvalReport evaluate(const SyntheticTask& task, const ParamVector& params) {
  EvalReport report;
  report.val_loss = dataset_loss(task, task.validation(), params);
  report.val_ppl = std::exp(report.val_loss);
  return report;
}

std::vector<double> label_distribution(const Dataset& data,
                                       std::size_t num_classes) {
  std::vector<double> hist(num_classes, 0.0);
  for (double t : data.targets) {
    const auto c = static_cast<std::size_t>(t);
    if (c >= num_classes) throw InternalError("label out of range");
    hist[c] += 1.0;
  }
  for (auto& h : hist) h /= static_cast<double>(data.size());
  return hist;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InternalError("total_variation: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

}  // namespace overlapsim
