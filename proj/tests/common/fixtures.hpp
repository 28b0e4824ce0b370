#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gmtl/model.hpp"
#include "gmtl/synthdata.hpp"
#include "gmtl/training.hpp"

namespace gmtl::testing {

// Small world with one task of each kind, fast enough for unit tests.
inline GenSpec small_spec(std::size_t n = 600) {
  GenSpec spec = GenSpec::default_spec();
  spec.n_properties = n;
  spec.item_dim = 8;
  spec.n_min = 2;
  spec.n_max = 10;
  std::vector<TaskGen> keep;
  for (const TaskGen& t : spec.tasks) {
    if (t.name == "b1" || t.name == "b3" || t.name == "c1" || t.name == "r2") keep.push_back(t);
  }
  spec.tasks = keep;
  return spec;
}

struct SmallData {
  GeneratedData data;
  LabeledSet train;
  LabeledSet val;
};

inline SmallData make_small_data(const GenSpec& spec, std::uint64_t seed, std::size_t head_hidden = 16) {
  SmallData d{generate(spec, seed), {}, {}};
  std::vector<TaskSpec> roster = d.data.header.tasks;
  for (TaskSpec& t : roster) t.hidden_dim = head_hidden;
  d.train = make_labeled_set(d.data.train, roster);
  d.val = make_labeled_set(d.data.val, roster);
  for (TaskSpec& t : d.train.roster) {
    if (t.kind == TaskKind::kRegression) t.sample_variance = compute_sample_variance(d.train.column(t.name));
  }
  d.val.roster = d.train.roster;
  return d;
}

inline MtlModel small_model(const LabeledSet& data, std::size_t item_dim, WeightingScheme scheme,
                            std::uint64_t seed, std::size_t frozen_prefix = 0) {
  return MtlModel(EncoderConfig{item_dim, {16, 16}, 16, frozen_prefix}, data.roster, scheme, seed);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("gmtl-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace gmtl::testing
