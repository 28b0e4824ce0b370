#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmtl/encoder.hpp"
#include "gmtl/mtl_loss.hpp"
#include "gmtl/synthdata.hpp"
#include "gmtl/training.hpp"
#include "gmtl/transfer.hpp"
#include "json.hpp"

namespace gmtl {

// Environment variable naming the config file used when --config is absent.
inline constexpr const char* kConfigEnvVar = "GMTL_CONFIG";

nlohmann::ordered_json gen_spec_to_json(const GenSpec& spec);
GenSpec gen_spec_from_json(const nlohmann::ordered_json& j);

// Input and output locations. Relative paths resolve against the working
// directory of the process; outputs always go to the run directory.
struct PathsConfig {
  std::string runs_root = "runs";
  std::string data_dir;          // holds train.jsonl, val.jsonl, holdout.jsonl
  std::string model;             // MTL checkpoint
  std::string eval_data;         // evaluate/project input; defaults to <data_dir>/val.jsonl
  std::string metrics_mtl;       // analyze inputs
  std::string metrics_optimal;
  std::string index;             // retrieve input
};

struct ModelConfig {
  std::vector<std::size_t> hidden_dims{64, 64};  // last entry is the embedding width
  std::size_t frozen_prefix = 0;
  std::size_t head_hidden_dim = 256;
  WeightingScheme scheme = WeightingScheme::kPseudoUniform;
  std::vector<std::string> tasks;  // training roster; empty means every dataset task
  // train: fit one single-task model per roster task instead of one MTL model
  bool single_task = false;
};

struct LshConfig {
  std::size_t tables = 16;
  std::size_t hashes = 8;
  double width = 0.0;  // <= 0 selects the data-driven default
  std::size_t k = 10;
  std::vector<std::string> seed_ids;  // retrieve query galleries
};

struct AnalysisConfig {
  std::size_t permutations = 10000;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  PathsConfig paths;
  GenSpec gen = GenSpec::default_spec();
  ModelConfig model;
  TrainConfig train;
  TransferConfig transfer;
  LshConfig lsh;
  AnalysisConfig analysis;

  void validate() const;
};

nlohmann::ordered_json experiment_to_json(const ExperimentConfig& config);
// Missing keys keep their defaults; unknown keys are rejected with kConfig.
ExperimentConfig experiment_from_json(const nlohmann::ordered_json& j);

// Sets `dotted.path=value` in a config document. The value is parsed as JSON
// when possible (numbers, booleans, arrays) and used as a string otherwise.
void apply_override(nlohmann::ordered_json& doc, const std::string& assignment);

// Reads `path` (empty: built-in defaults), applies overrides in order and
// validates the result.
ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace gmtl
