#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gmtl/checkpoint.hpp"
#include "gmtl/encoder.hpp"
#include "gmtl/mtl_loss.hpp"
#include "gmtl/tasks.hpp"

namespace gmtl {

// Shared encoder + one head per task + (kendall only) learned log-variances.
class MtlModel {
 public:
  MtlModel(EncoderConfig encoder_config, std::vector<TaskSpec> roster, WeightingScheme scheme,
           std::uint64_t seed);
  MtlModel(Encoder encoder, std::vector<TaskHead> heads, WeightingScheme scheme,
           std::optional<UncertaintyParams> uncertainty = std::nullopt);

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  std::vector<TaskHead>& heads() { return heads_; }
  const std::vector<TaskHead>& heads() const { return heads_; }
  const TaskHead& head(const std::string& task) const;
  std::vector<TaskSpec> roster() const;
  bool has_task(const std::string& task) const;

  WeightingScheme scheme() const { return scheme_; }
  const UncertaintyParams& uncertainty() const { return uncertainty_; }

  // Regression sample variances keyed by task name (pseudo-uniform weights).
  std::map<std::string, double> variances() const;
  Tensor total_loss(const LossVector& losses) const;

  // Encoder and head parameters (uncertainty parameters excluded).
  std::vector<Tensor> network_parameters() const;
  std::vector<NamedTensor> named_parameters() const;
  std::size_t trainable_parameter_count() const;

  MtlModel clone() const;
  Checkpoint to_checkpoint() const;
  static MtlModel from_checkpoint(const Checkpoint& checkpoint);
  void save(const std::string& path) const { save_checkpoint(path, to_checkpoint()); }
  static MtlModel load(const std::string& path) { return from_checkpoint(load_checkpoint(path)); }

 private:
  Encoder encoder_;
  std::vector<TaskHead> heads_;
  WeightingScheme scheme_;
  UncertaintyParams uncertainty_;
};

}  // namespace gmtl
