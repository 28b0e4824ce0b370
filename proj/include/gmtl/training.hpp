#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gmtl/model.hpp"
#include "gmtl/synthdata.hpp"

namespace gmtl {

struct TrainConfig {
  std::size_t batch_size = 4;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_epochs = 4;
  // Evaluations without improvement of the total validation loss before stopping.
  std::size_t patience = 3;
  std::size_t eval_every = 500;  // iterations
  std::uint64_t seed = 0;
  std::optional<double> uncertainty_lr;  // defaults to lr
  double clip_norm = 0.0;                // 0 disables clipping
  std::size_t eval_chunk = 64;           // galleries per no-grad encoding chunk

  void validate() const;
};

// Dense view of a dataset for one task roster: labels[t][row] follows roster order.
struct LabeledSet {
  std::vector<std::string> ids;
  std::vector<const Gallery*> galleries;
  std::vector<TaskSpec> roster;
  std::vector<std::vector<double>> labels;

  std::size_t size() const { return galleries.size(); }
  const std::vector<double>& column(const std::string& task) const;
  LabeledSet subset(std::span<const std::size_t> rows) const;
};

// Throws kUnknownTask when a record lacks a roster label.
LabeledSet make_labeled_set(const std::vector<PropertyRecord>& records,
                            const std::vector<TaskSpec>& roster);

struct EvalRecord {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  std::map<std::string, double> train_loss;  // mean over the window since the previous record
  std::map<std::string, double> val_loss;
  double val_total = 0.0;
  std::map<std::string, double> log_variances;  // kendall only
  double wall_seconds = 0.0;                    // excluded from determinism comparisons
};

struct TrainLog {
  std::vector<EvalRecord> records;
  std::size_t best_index = 0;
  bool early_stopped = false;

  // JSON lines; `with_timing` adds wall_seconds (non-deterministic).
  std::string to_jsonl(bool with_timing) const;
};

struct TrainResult {
  MtlModel model;  // best-validation checkpoint, not the last iterate
  TrainLog log;
};

// Stacks no-grad gallery embeddings, [n, embed_dim], in input order.
Tensor embed_galleries(const Encoder& encoder, std::span<const Gallery* const> galleries,
                       std::size_t chunk = 64);

// Per-task mean losses over a whole set at fixed parameters.
std::map<std::string, double> dataset_losses(const MtlModel& model, const Tensor& embeddings,
                                             const LabeledSet& data);

// Visit order of one epoch: a seeded permutation of 0..n-1. Batches are
// consecutive slices of it, so every example is seen exactly once per epoch.
std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng);

TrainResult train(const MtlModel& initial, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& config);

struct TaskMetrics {
  std::string name;
  TaskKind kind = TaskKind::kBinary;
  std::size_t count = 0;
  double loss = 0.0;
  std::optional<double> accuracy;        // classification
  std::optional<double> mse;             // regression
  std::optional<double> class_balance;   // binary: minority fraction of the evaluated labels
  double baseline_accuracy = 0.0;        // majority class of the reference labels
  double baseline_mse = 0.0;             // mean of the reference labels
  // accuracy error (1 - accuracy) or MSE
  double error() const { return accuracy ? 1.0 - *accuracy : *mse; }
  double baseline_error() const { return accuracy ? 1.0 - baseline_accuracy : baseline_mse; }
};

struct Metrics {
  std::vector<TaskMetrics> tasks;
  const TaskMetrics& task(const std::string& name) const;
};

struct Predictions {
  std::vector<std::string> ids;
  std::vector<TaskSpec> roster;
  // per task: predicted class index or regression value, parallel to ids
  std::vector<std::vector<double>> predicted;
  std::vector<std::vector<double>> truth;
  std::vector<double> losses;  // per task mean loss

  // Long format: id,task,truth,prediction
  std::string to_csv() const;
};

Predictions predict(const MtlModel& model, const LabeledSet& data, std::size_t chunk = 64);

// Baselines come from `reference` (typically the training split); when null the
// evaluated data itself is used.
Metrics metrics_from_predictions(const Predictions& predictions, const LabeledSet* reference);
Metrics evaluate(const MtlModel& model, const LabeledSet& data, const LabeledSet* reference = nullptr);

std::string metrics_to_json(const Metrics& metrics);
Metrics metrics_from_json(const std::string& text);

}  // namespace gmtl
