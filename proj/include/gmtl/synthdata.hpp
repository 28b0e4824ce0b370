#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gmtl/encoder.hpp"
#include "gmtl/tasks.hpp"

namespace gmtl {

inline constexpr int kDatasetSchemaVersion = 1;

// Generator for one supervised target. Every target is a function of the
// property's latent vector only.
struct TaskGen {
  std::string name;
  TaskKind kind = TaskKind::kBinary;
  // binary: positive-class fraction; converted to a threshold on a unit-variance score
  double balance = 0.5;
  // binary: explicit threshold on the score, overrides balance
  std::optional<double> threshold;
  std::size_t num_classes = 0;  // categorical
  // regression: y = offset + scale * (score + noise * eps)
  double noise = 0.0;
  double scale = 1.0;
  double offset = 0.0;
};

// Ordinal target written to its own file and never part of the training roster.
struct HoldoutGen {
  std::string name = "star_rating";
  std::size_t num_classes = 5;
  double noise = 0.25;
};

struct GenSpec {
  std::size_t n_properties = 10000;
  std::size_t latent_dim = 8;
  std::size_t item_dim = 16;
  std::size_t n_min = 5;
  std::size_t n_max = 44;
  // item = tanh(A z + view_noise * u) + style_scale * C c + item_noise * e
  // u, e are per item; c is a per-property nuisance shared by all its items.
  double view_noise = 0.3;
  double item_noise = 0.1;
  std::size_t style_dim = 4;
  double style_scale = 0.0;
  double train_fraction = 0.9;
  std::vector<TaskGen> tasks;
  HoldoutGen holdout;

  void validate() const;
  // 6 binary (balances 0.5 .. 0.02), 2 categorical (K=5, K=20), 2 regression.
  static GenSpec default_spec();
};

struct PropertyRecord {
  std::string id;
  Gallery gallery;
  std::map<std::string, double> labels;
};

struct DatasetHeader {
  std::size_t item_dim = 0;
  std::vector<TaskSpec> tasks;  // name, kind, num_classes
};

struct Dataset {
  DatasetHeader header;
  std::vector<PropertyRecord> records;
};

struct HoldoutLabels {
  TaskSpec task;
  std::map<std::string, double> labels;  // property id -> class index
};

// Fixed random maps of one synthetic world; exposed for test oracles.
struct SyntheticWorld {
  std::vector<double> view_map;   // item_dim x latent_dim
  std::vector<double> style_map;  // item_dim x style_dim
  struct Target {
    std::vector<double> weights;  // latent_dim per score (num_classes rows for categorical)
    double threshold = 0.0;       // binary
  };
  std::vector<Target> targets;    // parallel to GenSpec::tasks
  std::vector<double> holdout_direction;
  std::vector<double> holdout_cuts;
};

struct LatentRecord {
  std::string id;
  std::vector<double> latent;
  std::vector<double> style;
};

struct GeneratedData {
  DatasetHeader header;
  std::vector<PropertyRecord> train;
  std::vector<PropertyRecord> val;
  HoldoutLabels holdout;
  std::vector<LatentRecord> latents;  // debug only
  SyntheticWorld world;
};

GeneratedData generate(const GenSpec& spec, std::uint64_t seed);

// Writes train.jsonl, val.jsonl, holdout.jsonl, debug_latent.jsonl and
// gen_spec.json into `dir`. Returns the written file names.
std::vector<std::string> write_generated(const GeneratedData& data, const GenSpec& spec,
                                         const std::string& dir);

// Streaming JSON-lines reader. An optional first line
// {"schema":"gmtl.dataset","version":1,...} declares the task roster.
class DatasetReader {
 public:
  // When `expected` is non-empty, labels naming other tasks are rejected and
  // every expected task must be labelled.
  explicit DatasetReader(const std::string& path, std::vector<TaskSpec> expected = {});

  const std::optional<DatasetHeader>& header() const { return header_; }
  std::optional<PropertyRecord> next();
  std::size_t line_number() const { return line_no_; }

 private:
  PropertyRecord parse_record(const std::string& line);

  std::string path_;
  std::ifstream in_;
  std::optional<DatasetHeader> header_;
  std::vector<TaskSpec> roster_;
  std::optional<std::string> pending_;
  std::size_t line_no_ = 0;
  std::size_t pending_line_ = 0;
};

Dataset load_dataset(const std::string& path);
void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<PropertyRecord>& records);
HoldoutLabels load_holdout(const std::string& path);

// Minority-class fraction of a binary label column.
double minority_fraction(std::span<const double> labels);

}  // namespace gmtl
