#include "gmtl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "gmtl/error.hpp"

namespace gmtl {

using nlohmann::ordered_json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const ordered_json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), ErrorCode::kConfig, "config: '" + where_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::kConfig, "config: '" + path(key) + "' has the wrong type");
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T value{};
    read(key, value);
    out = value;
  }

  const ordered_json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      require(seen_.contains(item.key()), ErrorCode::kConfig,
              "config: unknown key '" + path(item.key()) + "'");
    }
  }

 private:
  const ordered_json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ordered_json task_gen_to_json(const TaskGen& t) {
  ordered_json j;
  j["name"] = t.name;
  j["kind"] = task_kind_name(t.kind);
  switch (t.kind) {
    case TaskKind::kBinary:
      j["balance"] = t.balance;
      if (t.threshold) j["threshold"] = *t.threshold;
      break;
    case TaskKind::kCategorical:
      j["num_classes"] = t.num_classes;
      break;
    case TaskKind::kRegression:
      j["noise"] = t.noise;
      j["scale"] = t.scale;
      j["offset"] = t.offset;
      break;
  }
  return j;
}

TaskGen task_gen_from_json(const ordered_json& j, const std::string& where) {
  Section s(j, where);
  TaskGen t;
  std::string kind;
  s.read("name", t.name);
  s.read("kind", kind);
  try {
    t.kind = parse_task_kind(kind);
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, "config: " + where + ": " + e.what());
  }
  s.read("balance", t.balance);
  s.read_optional("threshold", t.threshold);
  s.read("num_classes", t.num_classes);
  s.read("noise", t.noise);
  s.read("scale", t.scale);
  s.read("offset", t.offset);
  s.finish();
  return t;
}

ordered_json train_to_json(const TrainConfig& c) {
  ordered_json j;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["eval_every"] = c.eval_every;
  j["uncertainty_lr"] = c.uncertainty_lr ? ordered_json(*c.uncertainty_lr) : ordered_json(nullptr);
  j["clip_norm"] = c.clip_norm;
  j["eval_chunk"] = c.eval_chunk;
  return j;
}

TrainConfig train_from_json(const ordered_json& j, const std::string& where, TrainConfig c) {
  Section s(j, where);
  s.read("batch_size", c.batch_size);
  s.read("lr", c.lr);
  s.read("beta1", c.beta1);
  s.read("beta2", c.beta2);
  s.read("epsilon", c.epsilon);
  s.read("max_epochs", c.max_epochs);
  s.read("patience", c.patience);
  s.read("eval_every", c.eval_every);
  s.read_optional("uncertainty_lr", c.uncertainty_lr);
  s.read("clip_norm", c.clip_norm);
  s.read("eval_chunk", c.eval_chunk);
  s.finish();
  return c;
}

}  // namespace

ordered_json gen_spec_to_json(const GenSpec& spec) {
  ordered_json j;
  j["n_properties"] = spec.n_properties;
  j["latent_dim"] = spec.latent_dim;
  j["item_dim"] = spec.item_dim;
  j["n_min"] = spec.n_min;
  j["n_max"] = spec.n_max;
  j["view_noise"] = spec.view_noise;
  j["item_noise"] = spec.item_noise;
  j["style_dim"] = spec.style_dim;
  j["style_scale"] = spec.style_scale;
  j["train_fraction"] = spec.train_fraction;
  j["tasks"] = ordered_json::array();
  for (const TaskGen& t : spec.tasks) j["tasks"].push_back(task_gen_to_json(t));
  j["holdout"] = {{"name", spec.holdout.name},
                  {"num_classes", spec.holdout.num_classes},
                  {"noise", spec.holdout.noise}};
  return j;
}

GenSpec gen_spec_from_json(const ordered_json& j) {
  GenSpec spec = GenSpec::default_spec();
  Section s(j, "gen");
  s.read("n_properties", spec.n_properties);
  s.read("latent_dim", spec.latent_dim);
  s.read("item_dim", spec.item_dim);
  s.read("n_min", spec.n_min);
  s.read("n_max", spec.n_max);
  s.read("view_noise", spec.view_noise);
  s.read("item_noise", spec.item_noise);
  s.read("style_dim", spec.style_dim);
  s.read("style_scale", spec.style_scale);
  s.read("train_fraction", spec.train_fraction);
  if (const ordered_json* tasks = s.child("tasks")) {
    require(tasks->is_array(), ErrorCode::kConfig, "config: 'gen.tasks' must be an array");
    spec.tasks.clear();
    for (std::size_t i = 0; i < tasks->size(); ++i) {
      spec.tasks.push_back(task_gen_from_json(tasks->at(i), "gen.tasks[" + std::to_string(i) + "]"));
    }
  }
  if (const ordered_json* h = s.child("holdout")) {
    Section hs(*h, "gen.holdout");
    hs.read("name", spec.holdout.name);
    hs.read("num_classes", spec.holdout.num_classes);
    hs.read("noise", spec.holdout.noise);
    hs.finish();
  }
  s.finish();
  return spec;
}

void ExperimentConfig::validate() const {
  gen.validate();
  require(!model.hidden_dims.empty(), ErrorCode::kConfig, "config: model.hidden_dims is empty");
  require(model.frozen_prefix <= model.hidden_dims.size(), ErrorCode::kConfig,
          "config: model.frozen_prefix exceeds the number of encoder layers");
  require(model.head_hidden_dim >= 1, ErrorCode::kConfig, "config: model.head_hidden_dim must be >= 1");
  train.validate();
  transfer.validate();
  require(lsh.tables >= 1 && lsh.hashes >= 1, ErrorCode::kConfig, "config: lsh tables and hashes must be >= 1");
  require(lsh.k >= 1, ErrorCode::kConfig, "config: lsh.k must be >= 1");
  require(analysis.permutations >= 1, ErrorCode::kConfig, "config: analysis.permutations must be >= 1");
}

ordered_json experiment_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["paths"] = {{"runs_root", c.paths.runs_root},
                {"data_dir", c.paths.data_dir},
                {"model", c.paths.model},
                {"eval_data", c.paths.eval_data},
                {"metrics_mtl", c.paths.metrics_mtl},
                {"metrics_optimal", c.paths.metrics_optimal},
                {"index", c.paths.index}};
  j["gen"] = gen_spec_to_json(c.gen);
  j["model"] = {{"hidden_dims", c.model.hidden_dims},
                {"frozen_prefix", c.model.frozen_prefix},
                {"head_hidden_dim", c.model.head_hidden_dim},
                {"scheme", weighting_scheme_name(c.model.scheme)},
                {"tasks", c.model.tasks},
                {"single_task", c.model.single_task}};
  j["train"] = train_to_json(c.train);
  j["transfer"] = {{"fractions", c.transfer.fractions},
                   {"internal_val_fraction", c.transfer.internal_val_fraction},
                   {"train", train_to_json(c.transfer.train)}};
  j["lsh"] = {{"tables", c.lsh.tables},
              {"hashes", c.lsh.hashes},
              {"width", c.lsh.width},
              {"k", c.lsh.k},
              {"seed_ids", c.lsh.seed_ids}};
  j["analysis"] = {{"permutations", c.analysis.permutations}};
  return j;
}

ExperimentConfig experiment_from_json(const ordered_json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  if (const ordered_json* p = root.child("paths")) {
    Section s(*p, "paths");
    s.read("runs_root", c.paths.runs_root);
    s.read("data_dir", c.paths.data_dir);
    s.read("model", c.paths.model);
    s.read("eval_data", c.paths.eval_data);
    s.read("metrics_mtl", c.paths.metrics_mtl);
    s.read("metrics_optimal", c.paths.metrics_optimal);
    s.read("index", c.paths.index);
    s.finish();
  }
  if (const ordered_json* g = root.child("gen")) c.gen = gen_spec_from_json(*g);
  if (const ordered_json* m = root.child("model")) {
    Section s(*m, "model");
    std::string scheme = weighting_scheme_name(c.model.scheme);
    s.read("hidden_dims", c.model.hidden_dims);
    s.read("frozen_prefix", c.model.frozen_prefix);
    s.read("head_hidden_dim", c.model.head_hidden_dim);
    s.read("scheme", scheme);
    s.read("tasks", c.model.tasks);
    s.read("single_task", c.model.single_task);
    s.finish();
    try {
      c.model.scheme = parse_weighting_scheme(scheme);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, std::string("config: model.scheme: ") + e.what());
    }
  }
  if (const ordered_json* t = root.child("train")) c.train = train_from_json(*t, "train", c.train);
  if (const ordered_json* t = root.child("transfer")) {
    Section s(*t, "transfer");
    s.read("fractions", c.transfer.fractions);
    s.read("internal_val_fraction", c.transfer.internal_val_fraction);
    if (const ordered_json* tt = s.child("train")) {
      c.transfer.train = train_from_json(*tt, "transfer.train", c.transfer.train);
    }
    s.finish();
  }
  if (const ordered_json* l = root.child("lsh")) {
    Section s(*l, "lsh");
    s.read("tables", c.lsh.tables);
    s.read("hashes", c.lsh.hashes);
    s.read("width", c.lsh.width);
    s.read("k", c.lsh.k);
    s.read("seed_ids", c.lsh.seed_ids);
    s.finish();
  }
  if (const ordered_json* a = root.child("analysis")) {
    Section s(*a, "analysis");
    s.read("permutations", c.analysis.permutations);
    s.finish();
  }
  root.finish();
  return c;
}

void apply_override(ordered_json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::kConfig,
          "config: override '" + assignment + "' is not of the form key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  ordered_json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    require(!part.empty(), ErrorCode::kConfig, "config: empty segment in override key '" + key + "'");
    path.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    require(node->is_object(), ErrorCode::kConfig, "config: '" + key + "' does not name an object path");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = ordered_json::object();
  }
  require(node->is_object(), ErrorCode::kConfig, "config: '" + key + "' does not name an object path");
  (*node)[path.back()] = std::move(value);
}

ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides) {
  ordered_json doc = ordered_json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::kNotFound, "config file not found: " + path);
    try {
      doc = ordered_json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kConfig, "config: " + path + " is not valid JSON: " + e.what());
    }
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  ExperimentConfig config = experiment_from_json(doc);
  config.validate();
  return config;
}

}  // namespace gmtl
