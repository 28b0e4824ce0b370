#include "gmtl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "gmtl/analysis.hpp"
#include "gmtl/error.hpp"
#include "gmtl/hash.hpp"
#include "gmtl/retrieval.hpp"
#include "gmtl/transfer.hpp"

namespace gmtl {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {"generate", "train",    "evaluate", "transfer",
                                                 "index",    "retrieve", "analyze",  "project"};
  return names;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& purpose) {
  // FNV-1a over the purpose, folded into the seed, then a splitmix64 finalizer.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : purpose) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string default_run_dir(const ExperimentConfig& config) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm local{};
  localtime_r(&now, &local);
  std::ostringstream name;
  name << std::put_time(&local, "%Y%m%d-%H%M%S") << "-seed" << config.seed;
  return (fs::path(config.paths.runs_root) / name.str()).string();
}

namespace {

// Collects inputs and outputs of one run and writes the manifest.
class Run {
 public:
  Run(std::string name, const ExperimentConfig& config, std::string dir)
      : name_(std::move(name)), config_(config), dir_(std::move(dir)) {}

  const ExperimentConfig& config() const { return config_; }
  const std::string& dir() const { return dir_; }

  std::string input(const std::string& path, const char* what) {
    require(!path.empty(), ErrorCode::kConfig, name_ + ": no " + what + " configured");
    require(fs::is_regular_file(path), ErrorCode::kNotFound, name_ + ": " + what + " not found: " + path);
    inputs_.emplace_back(path, sha256_file(path));
    return path;
  }

  std::string output(const std::string& file) {
    summary_.outputs.push_back(file);
    return (fs::path(dir_) / file).string();
  }

  std::string sidecar(const std::string& file) {
    summary_.nondeterministic.push_back(file);
    return (fs::path(dir_) / file).string();
  }

  void warn(const std::string& message) { summary_.warnings.push_back(message); }

  RunSummary finish() {
    ordered_json m;
    m["schema"] = "gmtl.manifest";
    m["version"] = kManifestVersion;
    m["subcommand"] = name_;
    m["seed"] = config_.seed;
    m["config"] = experiment_to_json(config_);
    m["inputs"] = ordered_json::array();
    for (const auto& [path, digest] : inputs_) m["inputs"].push_back({{"path", path}, {"sha256", digest}});
    std::vector<std::string> outputs = summary_.outputs;
    std::sort(outputs.begin(), outputs.end());
    m["outputs"] = ordered_json::array();
    for (const std::string& file : outputs) {
      m["outputs"].push_back({{"file", file}, {"sha256", sha256_file((fs::path(dir_) / file).string())}});
    }
    std::vector<std::string> sidecars = summary_.nondeterministic;
    std::sort(sidecars.begin(), sidecars.end());
    m["nondeterministic"] = sidecars;
    write_text((fs::path(dir_) / "manifest.json").string(), m.dump(2) + "\n");
    summary_.run_dir = dir_;
    return summary_;
  }

  static void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
    out << text;
    require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path);
  }

 private:
  std::string name_;
  const ExperimentConfig& config_;
  std::string dir_;
  std::vector<std::pair<std::string, std::string>> inputs_;
  RunSummary summary_;
};

std::string data_file(const ExperimentConfig& c, const char* file) {
  require(!c.paths.data_dir.empty(), ErrorCode::kConfig, "paths.data_dir is not set");
  return (fs::path(c.paths.data_dir) / file).string();
}

std::string csv_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

// Training roster from the dataset header, narrowed to model.tasks when given.
std::vector<TaskSpec> select_roster(const ExperimentConfig& c, const Dataset& train_data) {
  require(!train_data.header.tasks.empty(), ErrorCode::kFormat,
          "training data has no schema header declaring its task roster");
  std::vector<TaskSpec> roster;
  if (c.model.tasks.empty()) {
    roster = train_data.header.tasks;
  } else {
    for (const std::string& name : c.model.tasks) {
      const auto it = std::find_if(train_data.header.tasks.begin(), train_data.header.tasks.end(),
                                   [&](const TaskSpec& t) { return t.name == name; });
      require(it != train_data.header.tasks.end(), ErrorCode::kUnknownTask,
              "task '" + name + "' is not in the dataset roster");
      roster.push_back(*it);
    }
  }
  for (TaskSpec& t : roster) t.hidden_dim = c.model.head_hidden_dim;
  return roster;
}

EncoderConfig encoder_config(const ExperimentConfig& c, std::size_t item_dim) {
  EncoderConfig e;
  e.item_dim = item_dim;
  e.hidden_dims = c.model.hidden_dims;
  e.embed_dim = c.model.hidden_dims.back();
  e.frozen_prefix = c.model.frozen_prefix;
  return e;
}

void merge_predictions(Predictions& into, const Predictions& from) {
  if (into.ids.empty()) into.ids = from.ids;
  for (std::size_t t = 0; t < from.roster.size(); ++t) {
    into.roster.push_back(from.roster[t]);
    into.predicted.push_back(from.predicted[t]);
    into.truth.push_back(from.truth[t]);
    into.losses.push_back(from.losses[t]);
  }
}

void cmd_generate(Run& run) {
  const ExperimentConfig& c = run.config();
  const GeneratedData data = generate(c.gen, derive_seed(c.seed, "generate"));
  for (const std::string& file : write_generated(data, c.gen, run.dir())) run.output(file);
}

void cmd_train(Run& run) {
  const ExperimentConfig& c = run.config();
  const Dataset train_data = load_dataset(run.input(data_file(c, "train.jsonl"), "training data"));
  const Dataset val_data = load_dataset(run.input(data_file(c, "val.jsonl"), "validation data"));
  std::vector<TaskSpec> roster = select_roster(c, train_data);
  LabeledSet train_set = make_labeled_set(train_data.records, roster);
  for (TaskSpec& t : roster) {
    if (t.kind == TaskKind::kRegression) t.sample_variance = compute_sample_variance(train_set.column(t.name));
  }
  train_set.roster = roster;
  LabeledSet val_set = make_labeled_set(val_data.records, roster);
  const EncoderConfig ec = encoder_config(c, train_data.header.item_dim);
  TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "train");

  std::vector<std::vector<TaskSpec>> groups;
  if (c.model.single_task) {
    for (const TaskSpec& t : roster) groups.push_back({t});
  } else {
    groups.push_back(roster);
  }
  Predictions all;
  for (const auto& group : groups) {
    const std::string suffix = c.model.single_task ? "_" + group.front().name : "";
    const MtlModel initial(ec, group, c.model.scheme, derive_seed(c.seed, "init"));
    const TrainResult result = train(initial, train_set, val_set, tc);
    result.model.save(run.output("model" + suffix + ".ckpt"));
    Run::write_text(run.output("train_log" + suffix + ".jsonl"), result.log.to_jsonl(false));
    Run::write_text(run.sidecar("train_timing" + suffix + ".jsonl"), result.log.to_jsonl(true));
    merge_predictions(all, predict(result.model, val_set, tc.eval_chunk));
  }
  Run::write_text(run.output("metrics_val.json"), metrics_to_json(metrics_from_predictions(all, &train_set)));
  Run::write_text(run.output("predictions_val.csv"), all.to_csv());
}

LabeledSet eval_set_for(const MtlModel& model, const Dataset& data) {
  return make_labeled_set(data.records, model.roster());
}

std::string eval_data_path(const ExperimentConfig& c) {
  return c.paths.eval_data.empty() ? data_file(c, "val.jsonl") : c.paths.eval_data;
}

void cmd_evaluate(Run& run) {
  const ExperimentConfig& c = run.config();
  const MtlModel model = MtlModel::load(run.input(c.paths.model, "model checkpoint"));
  const Dataset data = load_dataset(run.input(eval_data_path(c), "evaluation data"));
  std::optional<Dataset> reference_data;
  if (!c.paths.data_dir.empty()) {
    reference_data = load_dataset(run.input(data_file(c, "train.jsonl"), "training data"));
  }
  const LabeledSet eval = eval_set_for(model, data);
  std::optional<LabeledSet> reference;
  if (reference_data) reference = eval_set_for(model, *reference_data);
  const Predictions preds = predict(model, eval, c.train.eval_chunk);
  Run::write_text(run.output("metrics.json"),
                  metrics_to_json(metrics_from_predictions(preds, reference ? &*reference : nullptr)));
  Run::write_text(run.output("predictions.csv"), preds.to_csv());
}

void cmd_transfer(Run& run) {
  const ExperimentConfig& c = run.config();
  const MtlModel model = MtlModel::load(run.input(c.paths.model, "model checkpoint"));
  const Dataset train_data = load_dataset(run.input(data_file(c, "train.jsonl"), "training data"));
  const Dataset val_data = load_dataset(run.input(data_file(c, "val.jsonl"), "validation data"));
  const HoldoutLabels holdout = load_holdout(run.input(data_file(c, "holdout.jsonl"), "hold-out labels"));
  const LabeledSet pool = make_holdout_set(train_data.records, holdout, c.model.head_hidden_dim);
  const LabeledSet test = make_holdout_set(val_data.records, holdout, c.model.head_hidden_dim);
  TransferConfig tc = c.transfer;
  tc.head_hidden_dim = c.model.head_hidden_dim;
  tc.seed = derive_seed(c.seed, "transfer");
  const TransferReport report = run_transfer(model, pool, test, tc);
  Run::write_text(run.output("transfer_report.json"), report.to_json(false));
  Run::write_text(run.output("transfer_table.txt"), report.to_table());
  Run::write_text(run.sidecar("transfer_timing.json"), report.to_json(true));
}

// Embeddings of every record in the given datasets, in file order.
void embed_records(const MtlModel& model, const std::vector<const Dataset*>& sets, std::size_t chunk,
                   std::vector<std::string>& ids, std::vector<double>& flat) {
  std::vector<const Gallery*> galleries;
  for (const Dataset* d : sets) {
    for (const PropertyRecord& r : d->records) {
      ids.push_back(r.id);
      galleries.push_back(&r.gallery);
    }
  }
  require(!galleries.empty(), ErrorCode::kInvalidArgument, "no galleries to embed");
  const Tensor emb = embed_galleries(model.encoder(), galleries, chunk);
  flat.assign(emb.data().begin(), emb.data().end());
}

void cmd_index(Run& run) {
  const ExperimentConfig& c = run.config();
  const MtlModel model = MtlModel::load(run.input(c.paths.model, "model checkpoint"));
  std::vector<Dataset> data;
  if (!c.paths.eval_data.empty()) {
    data.push_back(load_dataset(run.input(c.paths.eval_data, "gallery data")));
  } else {
    data.push_back(load_dataset(run.input(data_file(c, "train.jsonl"), "training data")));
    data.push_back(load_dataset(run.input(data_file(c, "val.jsonl"), "validation data")));
  }
  std::vector<const Dataset*> sets;
  for (const Dataset& d : data) sets.push_back(&d);
  std::vector<std::string> ids;
  std::vector<double> flat;
  embed_records(model, sets, c.train.eval_chunk, ids, flat);
  const std::size_t dim = model.encoder().config().embed_dim;
  std::ostringstream csv;
  csv.precision(17);
  csv << "id";
  for (std::size_t d = 0; d < dim; ++d) csv << ",e" << d;
  csv << '\n';
  for (std::size_t r = 0; r < ids.size(); ++r) {
    csv << ids[r];
    for (std::size_t d = 0; d < dim; ++d) csv << ',' << flat[r * dim + d];
    csv << '\n';
  }
  Run::write_text(run.output("embeddings.csv"), csv.str());
  LshParams params{c.lsh.tables, c.lsh.hashes, c.lsh.width, derive_seed(c.seed, "lsh")};
  const LshIndex index = LshIndex::build(std::move(ids), std::move(flat), dim, params);
  index.save(run.output("index.lsh"));
}

void cmd_retrieve(Run& run) {
  const ExperimentConfig& c = run.config();
  const LshIndex index = LshIndex::load(run.input(c.paths.index, "index"));
  require(!c.lsh.seed_ids.empty(), ErrorCode::kConfig, "retrieve: lsh.seed_ids is empty");
  std::vector<std::vector<double>> seeds;
  for (const std::string& id : c.lsh.seed_ids) {
    const auto row = index.find(id);
    require(row.has_value(), ErrorCode::kNotFound, "retrieve: seed id '" + id + "' is not in the index");
    const auto e = index.embedding(*row);
    seeds.emplace_back(e.begin(), e.end());
  }
  const auto hits = index.query_seeds(seeds, c.lsh.k);
  std::ostringstream csv;
  csv << "rank,id,distance\n";
  for (std::size_t i = 0; i < hits.size(); ++i) {
    csv << i + 1 << ',' << hits[i].id << ',' << csv_number(hits[i].distance) << '\n';
  }
  Run::write_text(run.output("neighbors.csv"), csv.str());
  if (hits.size() < c.lsh.k) {
    run.warn("retrieve: only " + std::to_string(hits.size()) + " candidates shared a bucket with the query");
  }
}

Metrics read_metrics(Run& run, const std::string& path, const char* what) {
  std::ifstream in(run.input(path, what));
  std::stringstream text;
  text << in.rdbuf();
  return metrics_from_json(text.str());
}

void cmd_analyze(Run& run) {
  const ExperimentConfig& c = run.config();
  const Metrics mtl = read_metrics(run, c.paths.metrics_mtl, "MTL metrics");
  const Metrics optimal = read_metrics(run, c.paths.metrics_optimal, "single-task metrics");
  const auto rows = compare_tasks(mtl, optimal);
  ordered_json report;
  report["tasks"] = ordered_json::array();
  std::ostringstream degradation, balance;
  degradation << "task,kind,err_mtl,err_optimal,relative_increase_pct\n";
  balance << "task,class_balance,relative_increase_pct\n";
  for (const TaskComparison& r : rows) {
    ordered_json j;
    j["name"] = r.name;
    j["kind"] = task_kind_name(r.kind);
    j["class_balance"] = r.class_balance ? ordered_json(*r.class_balance) : ordered_json(nullptr);
    j["err_mtl"] = r.err_mtl;
    j["err_optimal"] = r.err_optimal;
    j["relative_increase_pct"] =
        r.relative_increase_pct ? ordered_json(*r.relative_increase_pct) : ordered_json(nullptr);
    report["tasks"].push_back(std::move(j));
    const std::string inc = r.relative_increase_pct ? csv_number(*r.relative_increase_pct) : "";
    degradation << r.name << ',' << task_kind_name(r.kind) << ',' << csv_number(r.err_mtl) << ','
         << csv_number(r.err_optimal) << ',' << inc << '\n';
    if (r.class_balance) balance << r.name << ',' << csv_number(*r.class_balance) << ',' << inc << '\n';
    if (!r.relative_increase_pct) run.warn("analyze: task '" + r.name + "' has zero optimal error; relative increase undefined");
  }
  try {
    const CorrelationResult corr =
        balance_correlation(rows, c.analysis.permutations, derive_seed(c.seed, "analysis"));
    report["balance_correlation"] = {{"pearson_r", corr.r},
                                     {"p_value", corr.p_value},
                                     {"n", corr.n},
                                     {"permutations", corr.permutations}};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInvalidArgument) throw;
    report["balance_correlation"] = {{"unavailable", e.what()}};
    run.warn(std::string("analyze: ") + e.what());
  }
  Run::write_text(run.output("analysis_report.json"), report.dump(2) + "\n");
  Run::write_text(run.output("degradation.csv"), degradation.str());
  Run::write_text(run.output("balance_vs_degradation.csv"), balance.str());
}

void cmd_project(Run& run) {
  const ExperimentConfig& c = run.config();
  const MtlModel model = MtlModel::load(run.input(c.paths.model, "model checkpoint"));
  const Dataset data = load_dataset(run.input(eval_data_path(c), "gallery data"));
  std::vector<std::string> ids;
  std::vector<double> flat;
  embed_records(model, {&data}, c.train.eval_chunk, ids, flat);
  const Projection p = project_2d(std::move(ids), flat, model.encoder().config().embed_dim);
  if (p.rank_deficient) run.warn("project: embeddings have rank < 2; second coordinate set to zero");
  std::ostringstream csv;
  csv << "id,x,y\n";
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    csv << p.ids[i] << ',' << csv_number(p.coords[i][0]) << ',' << csv_number(p.coords[i][1]) << '\n';
  }
  Run::write_text(run.output("projection.csv"), csv.str());
  ordered_json j;
  j["count"] = p.ids.size();
  j["component_variance"] = p.component_variance;
  j["total_variance"] = p.total_variance;
  j["explained_fraction"] = p.explained_fraction();
  j["rank_deficient"] = p.rank_deficient;
  Run::write_text(run.output("projection.json"), j.dump(2) + "\n");
}

}  // namespace

RunSummary run_subcommand(const std::string& name, const ExperimentConfig& config,
                          const std::string& run_dir) {
  static const std::map<std::string, std::function<void(Run&)>> commands = {
      {"generate", cmd_generate}, {"train", cmd_train},       {"evaluate", cmd_evaluate},
      {"transfer", cmd_transfer}, {"index", cmd_index},       {"retrieve", cmd_retrieve},
      {"analyze", cmd_analyze},   {"project", cmd_project}};
  const auto it = commands.find(name);
  require(it != commands.end(), ErrorCode::kInvalidArgument, "unknown subcommand '" + name + "'");
  config.validate();
  require(!run_dir.empty(), ErrorCode::kInvalidArgument, "run directory is empty");
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  require(!ec && fs::is_directory(run_dir), ErrorCode::kIo, "cannot create run directory " + run_dir);
  Run run(name, config, run_dir);
  it->second(run);
  return run.finish();
}

}  // namespace gmtl
