// Command-line front end. Talks to the toolkit only through the C interface.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gmtl/gmtl.h"

namespace {

struct Flags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
  std::string seed;
  std::string data_dir;
  std::string model;
  std::string eval_data;
  std::string index;
  std::string metrics_mtl;
  std::string metrics_optimal;
  std::vector<std::string> seed_ids;
  std::string k;
  bool print_config = false;
};

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

int report(int status, const std::string& message) {
  std::cerr << "error: category=" << gmtl_status_name(status) << " code=" << status
            << " message=" << quoted(message) << '\n';
  return status;
}

int check(int status) {
  if (status != GMTL_OK) throw status;
  return status;
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "Config file (JSON); defaults to $GMTL_CONFIG");
  cmd->add_option("--set", f.overrides, "Override a config value, e.g. --set train.lr=0.001")
      ->type_name("KEY=VALUE");
  cmd->add_option("--run-dir", f.run_dir, "Output directory (default: <runs_root>/<timestamp>-seed<seed>)");
  cmd->add_option("--seed", f.seed, "Global seed");
  cmd->add_option("--data", f.data_dir, "Directory with train.jsonl, val.jsonl, holdout.jsonl");
  cmd->add_option("--model", f.model, "Model checkpoint");
  cmd->add_option("--eval-data", f.eval_data, "Dataset file for evaluate, index and project");
  cmd->add_option("--index", f.index, "LSH index file");
  cmd->add_option("--metrics-mtl", f.metrics_mtl, "Metrics JSON of the multi-task model");
  cmd->add_option("--metrics-optimal", f.metrics_optimal, "Metrics JSON of the single-task models");
  cmd->add_option("--seed-id", f.seed_ids, "Seed gallery id for retrieve (repeatable)");
  cmd->add_option("-k", f.k, "Number of neighbours to return");
  cmd->add_flag("--print-config", f.print_config, "Print the resolved config and exit");
}

int run(const std::string& subcommand, const Flags& f) {
  std::string config_path = f.config_path;
  if (config_path.empty()) {
    if (const char* env = std::getenv("GMTL_CONFIG")) config_path = env;
  }
  gmtl_config* config = nullptr;
  check(gmtl_config_load(config_path.c_str(), &config));
  std::unique_ptr<gmtl_config, decltype(&gmtl_config_free)> owned(config, &gmtl_config_free);

  std::vector<std::string> sets = f.overrides;
  auto path_flag = [&](const char* key, const std::string& value) {
    if (!value.empty()) sets.push_back(std::string(key) + "=" + json_string(value));
  };
  if (!f.seed.empty()) sets.push_back("seed=" + f.seed);
  path_flag("paths.data_dir", f.data_dir);
  path_flag("paths.model", f.model);
  path_flag("paths.eval_data", f.eval_data);
  path_flag("paths.index", f.index);
  path_flag("paths.metrics_mtl", f.metrics_mtl);
  path_flag("paths.metrics_optimal", f.metrics_optimal);
  if (!f.seed_ids.empty()) {
    std::string list = "[";
    for (std::size_t i = 0; i < f.seed_ids.size(); ++i) list += (i ? "," : "") + json_string(f.seed_ids[i]);
    sets.push_back("lsh.seed_ids=" + list + "]");
  }
  if (!f.k.empty()) sets.push_back("lsh.k=" + f.k);
  for (const std::string& s : sets) check(gmtl_config_set(config, s.c_str()));

  if (f.print_config) {
    char* text = nullptr;
    check(gmtl_config_dump(config, &text));
    std::cout << text;
    gmtl_string_free(text);
    return 0;
  }
  char* dir = nullptr;
  char* warnings = nullptr;
  check(gmtl_run(config, subcommand.c_str(), f.run_dir.empty() ? nullptr : f.run_dir.c_str(), &dir,
                 &warnings));
  if (warnings && *warnings) {
    std::string w = warnings;
    std::size_t start = 0;
    while (start < w.size()) {
      const std::size_t end = w.find('\n', start);
      std::cerr << "warning: " << w.substr(start, end - start) << '\n';
      start = end == std::string::npos ? w.size() : end + 1;
    }
  }
  std::cout << dir << '\n';
  gmtl_string_free(dir);
  gmtl_string_free(warnings);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task gallery encoder toolkit"};
  app.require_subcommand(1);
  Flags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"generate", "Write a synthetic dataset (train/val/hold-out splits)"},
      {"train", "Train the shared encoder and task heads"},
      {"evaluate", "Per-task metrics and predictions for a checkpoint"},
      {"transfer", "Hold-out task comparison across data fractions"},
      {"index", "Embed galleries and build an LSH index"},
      {"retrieve", "Nearest galleries to the mean of seed galleries"},
      {"analyze", "Compare multi-task and single-task metrics"},
      {"project", "2D principal-component projection of embeddings"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(GMTL_ERR_INVALID_ARGUMENT, e.what());
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();
  try {
    return run(subcommand, flags);
  } catch (int status) {
    return report(status, gmtl_last_error());
  }
}
