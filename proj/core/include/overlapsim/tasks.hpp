#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "overlapsim/param_core.hpp"

namespace overlapsim {

enum class TaskKind { least_squares, logistic_regression, mlp_classifier };

TaskKind parse_task_kind(std::string_view name);  // throws ConfigError
std::string_view to_string(TaskKind kind);

struct TaskConfig {
  TaskKind kind = TaskKind::logistic_regression;
  int num_workers = 4;
  std::size_t feature_dim = 10;
  std::size_t num_classes = 4;      // ignored by least_squares
  std::size_t num_layers = 12;      // fragmentation depth / MLP depth
  std::size_t hidden_width = 8;     // mlp_classifier only
  std::size_t samples_per_worker = 1000;
  std::size_t validation_samples = 1000;
  std::size_t batch_size = 16;
  // Label skew across workers for classification. +inf means every worker
  // draws labels uniformly (IID).
  double dirichlet_alpha = std::numeric_limits<double>::infinity();
  double feature_shift = 0.0;       // least_squares per-worker mean shift
  double class_separation = 1.0;    // stddev of class-mean coordinates
  double noise_std = 0.0;           // least_squares target noise
  bool identical_shards = false;    // every worker gets the same data + batches
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError naming the key
};

// Row-major examples. Targets are regression values or class indices.
struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<double> features;
  std::vector<double> targets;

  std::size_t size() const noexcept { return targets.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * feature_dim, feature_dim);
  }
};

struct WorkerShard {
  int worker_id = 0;
  Dataset data;
  std::uint64_t sample_seed = 0;  // minibatch stream for this worker
};

/// Immutable desk-scale learning problem split across workers.
class SyntheticTask {
 public:
  TaskKind kind() const noexcept { return kind_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t hidden_width() const noexcept { return hidden_width_; }
  std::size_t batch_size() const noexcept { return batch_size_; }
  std::size_t num_params() const noexcept { return num_params_; }
  std::span<const std::size_t> layer_sizes() const noexcept { return layer_sizes_; }

  std::span<const WorkerShard> shards() const noexcept { return shards_; }
  const WorkerShard& shard(int worker) const;
  const Dataset& validation() const noexcept { return validation_; }

  // least_squares only: the parameters that generated the targets.
  const std::optional<ParamVector>& ground_truth() const noexcept { return ground_truth_; }

  const ParamVector& initial_params() const noexcept { return initial_params_; }

 private:
  friend SyntheticTask make_task(const TaskConfig&, int);

  TaskKind kind_ = TaskKind::logistic_regression;
  std::size_t feature_dim_ = 0;
  std::size_t num_classes_ = 1;
  std::size_t hidden_width_ = 0;
  std::size_t batch_size_ = 1;
  std::size_t num_params_ = 0;
  std::vector<std::size_t> layer_sizes_;
  std::vector<WorkerShard> shards_;
  Dataset validation_;
  std::optional<ParamVector> ground_truth_;
  ParamVector initial_params_;
};

/// Builds a deterministic task from `cfg.seed`. `num_fragments` is the K the
/// task will be partitioned into; a task with fewer parameters or layers
/// than K is rejected with ConfigError.
SyntheticTask make_task(const TaskConfig& cfg, int num_fragments = 1);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean loss and exact gradient over the given rows of `data`.
LossGrad loss_and_grad(const SyntheticTask& task, const Dataset& data,
                       std::span<const std::size_t> rows,
                       const ParamVector& params);

// Mean loss over every row of `data`.
double dataset_loss(const SyntheticTask& task, const Dataset& data,
                    const ParamVector& params);

// Seed of the minibatch `shard` draws at local step `step`.
std::uint64_t batch_seed(const WorkerShard& shard, std::int64_t step);

/// Loss and gradient on one minibatch of `shard`, drawn with replacement
/// from a stream seeded by `batch_seed`.
LossGrad minibatch_grad(const SyntheticTask& task, const WorkerShard& shard,
                        const ParamVector& params, std::uint64_t batch_seed);

struct EvalReport {
  std::int64_t step = 0;
  double val_loss = 0.0;
  double val_ppl = 1.0;  // exp(val_loss)
};

EvalReport evaluate(const SyntheticTask& task, const ParamVector& params);

// Empirical label distribution of a classification dataset.
std::vector<double> label_distribution(const Dataset& data,
                                       std::size_t num_classes);

double total_variation(std::span<const double> p, std::span<const double> q);

}  // namespace overlapsim
