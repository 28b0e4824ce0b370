#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmtl/config.hpp"

namespace gmtl {

inline constexpr int kManifestVersion = 1;

// generate, train, evaluate, transfer, index, retrieve, analyze, project
const std::vector<std::string>& subcommand_names();

struct RunSummary {
  std::string run_dir;
  std::vector<std::string> outputs;           // file names inside run_dir, hashed in the manifest
  std::vector<std::string> nondeterministic;  // wall-clock sidecars, listed but not hashed
  std::vector<std::string> warnings;
};

// Stable per-module seed derived from the global seed.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose);

// <runs_root>/<YYYYmmdd-HHMMSS>-seed<seed> in local time.
std::string default_run_dir(const ExperimentConfig& config);

// Runs one subcommand into `run_dir` (created if needed) and writes
// manifest.json beside its outputs. Inputs are checked before any work starts.
RunSummary run_subcommand(const std::string& name, const ExperimentConfig& config,
                          const std::string& run_dir);

}  // namespace gmtl
