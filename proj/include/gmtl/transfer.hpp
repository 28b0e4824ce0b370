#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gmtl/synthdata.hpp"
#include "gmtl/training.hpp"

namespace gmtl {

struct TransferConfig {
  std::vector<double> fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  // Share of the labelled pool held back for early stopping; fractions apply to the rest.
  double internal_val_fraction = 0.1;
  TrainConfig train;
  std::size_t head_hidden_dim = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

// Arms of the comparison, in report column order.
inline constexpr const char* kTransferArms[] = {"mtl_embeddings", "generic_frozen", "end_to_end"};

struct TransferRow {
  double fraction = 0.0;
  std::size_t train_size = 0;
  double mtl_embeddings = 0.0;  // frozen MTL encoder + new head
  double generic_frozen = 0.0;  // frozen randomly initialized encoder + new head
  double end_to_end = 0.0;      // same architecture trained on the hold-out task alone

  double accuracy(std::size_t arm) const;
};

struct ArmTiming {
  std::string arm;
  double fraction = 0.0;
  double total_seconds = 0.0;
  double seconds_per_instance = 0.0;  // per batch slot processed during training
};

// Smallest fraction at which `arm` beats the full-data accuracy of `reference`.
struct EfficiencyEntry {
  std::string arm;
  std::string reference;
  std::optional<double> fraction;
};

struct TransferReport {
  std::string task;
  std::size_t num_classes = 0;
  std::size_t pool_size = 0;
  std::size_t internal_val_size = 0;
  std::size_t test_size = 0;
  std::string test_hash;  // SHA-256 over the test ids and labels
  double majority_baseline = 0.0;
  bool frozen_encoders_unchanged = true;
  std::vector<TransferRow> rows;
  std::vector<EfficiencyEntry> efficiency;
  std::vector<ArmTiming> timing;  // wall-clock, not reproducible

  std::string to_json(bool with_timing) const;
  // Aligned text table, one row per fraction.
  std::string to_table() const;
};

// Labelled set for the hold-out task over `records`; every record needs a label.
LabeledSet make_holdout_set(const std::vector<PropertyRecord>& records, const HoldoutLabels& holdout,
                            std::size_t head_hidden_dim);

std::string labeled_set_hash(const LabeledSet& data);

// Refuses (kInvalidArgument) when the hold-out task is part of the model's roster.
TransferReport run_transfer(const MtlModel& mtl, const LabeledSet& pool, const LabeledSet& test,
                            const TransferConfig& config);

}  // namespace gmtl
