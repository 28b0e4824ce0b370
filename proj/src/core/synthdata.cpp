#include "gmtl/synthdata.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "gmtl/config.hpp"
#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"
#include "json.hpp"

namespace gmtl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

// Values are stored with 6 decimals so the text form is short and parses back
// to the identical double.
double quantize(double x) { return std::round(x * 1e6) / 1e6; }

std::vector<double> normal_vector(Rng& rng, std::size_t n, double stddev = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * stddev;
  return v;
}

std::vector<double> unit_vector(Rng& rng, std::size_t n) {
  auto v = normal_vector(rng, n);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string property_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%06zu", i);
  return buf;
}

[[noreturn]] void format_error(const std::string& path, std::size_t line, const std::string& what) {
  fail(ErrorCode::kFormat, path + ":" + std::to_string(line) + ": " + what);
}

ordered_json task_header_json(const TaskSpec& t) {
  ordered_json j;
  j["name"] = t.name;
  j["kind"] = task_kind_name(t.kind);
  if (t.kind == TaskKind::kCategorical) j["num_classes"] = t.num_classes;
  return j;
}

TaskSpec task_from_header_json(const json& j) {
  TaskSpec t;
  t.name = j.at("name").get<std::string>();
  t.kind = parse_task_kind(j.at("kind").get<std::string>());
  if (t.kind == TaskKind::kCategorical) t.num_classes = j.at("num_classes").get<std::size_t>();
  return t;
}

void check_schema(const json& j, const char* schema, const std::string& path) {
  const auto found = j.at("schema").get<std::string>();
  if (found != schema) {
    fail(ErrorCode::kFormat, path + ": expected schema '" + schema + "', found '" + found + "'");
  }
  const int version = j.at("version").get<int>();
  if (version != kDatasetSchemaVersion) {
    fail(ErrorCode::kSchemaVersion, path + ": schema version " + std::to_string(version) +
                                        " unsupported (expected " +
                                        std::to_string(kDatasetSchemaVersion) + ")");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  return out;
}

}  // namespace

void GenSpec::validate() const {
  require(n_properties >= 2, ErrorCode::kConfig, "gen: n_properties must be at least 2");
  require(latent_dim >= 1 && item_dim >= 1, ErrorCode::kConfig, "gen: dimensions must be positive");
  require(n_min >= 1 && n_min <= n_max, ErrorCode::kConfig, "gen: need 1 <= n_min <= n_max");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::kConfig,
          "gen: train_fraction must lie in (0, 1)");
  require(view_noise >= 0.0 && item_noise >= 0.0 && style_scale >= 0.0, ErrorCode::kConfig,
          "gen: noise scales must be non-negative");
  require(!tasks.empty(), ErrorCode::kConfig, "gen: at least one task is required");
  std::set<std::string> names;
  for (const TaskGen& t : tasks) {
    require(!t.name.empty() && names.insert(t.name).second, ErrorCode::kConfig,
            "gen: task names must be unique and non-empty ('" + t.name + "')");
    if (t.kind == TaskKind::kBinary && !t.threshold) {
      require(t.balance > 0.0 && t.balance < 1.0, ErrorCode::kInvalidArgument,
              "gen: infeasible balance target for '" + t.name + "' (must lie in (0, 1))");
    }
    if (t.kind == TaskKind::kCategorical) {
      require(t.num_classes >= 2, ErrorCode::kConfig, "gen: '" + t.name + "' needs >= 2 classes");
    }
    if (t.kind == TaskKind::kRegression) {
      require(t.noise >= 0.0 && t.scale != 0.0, ErrorCode::kConfig,
              "gen: '" + t.name + "' needs noise >= 0 and non-zero scale");
    }
  }
  require(!names.contains(holdout.name), ErrorCode::kConfig,
          "gen: hold-out task '" + holdout.name + "' must not be a training task");
  require(holdout.num_classes >= 2, ErrorCode::kConfig, "gen: hold-out task needs >= 2 classes");
}

GenSpec GenSpec::default_spec() {
  GenSpec spec;
  const double balances[] = {0.5, 0.3, 0.2, 0.1, 0.05, 0.02};
  for (std::size_t i = 0; i < std::size(balances); ++i) {
    TaskGen t;
    t.name = "b" + std::to_string(i + 1);
    t.kind = TaskKind::kBinary;
    t.balance = balances[i];
    spec.tasks.push_back(t);
  }
  std::size_t categorical = 0;
  for (std::size_t k : {5u, 20u}) {
    TaskGen t;
    t.name = "c" + std::to_string(++categorical);
    t.kind = TaskKind::kCategorical;
    t.num_classes = k;
    spec.tasks.push_back(t);
  }
  TaskGen r1;
  r1.name = "r1";
  r1.kind = TaskKind::kRegression;
  r1.noise = 0.2;
  r1.scale = 40.0;  // price-like scale
  r1.offset = 120.0;
  spec.tasks.push_back(r1);
  TaskGen r2;
  r2.name = "r2";
  r2.kind = TaskKind::kRegression;
  r2.noise = 0.2;
  r2.scale = 0.8;  // review-score-like scale
  r2.offset = 8.0;
  spec.tasks.push_back(r2);
  return spec;
}

GeneratedData generate(const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng world_rng(seed);
  Rng prop_rng(world_rng.fork_seed());
  Rng split_rng(world_rng.fork_seed());

  const std::size_t k = spec.latent_dim, d = spec.item_dim, q = spec.style_dim;
  GeneratedData out;
  SyntheticWorld& world = out.world;
  world.view_map = normal_vector(world_rng, d * k, 1.0 / std::sqrt(static_cast<double>(k)));
  if (q > 0) world.style_map = normal_vector(world_rng, d * q, 1.0 / std::sqrt(static_cast<double>(q)));
  for (const TaskGen& t : spec.tasks) {
    SyntheticWorld::Target target;
    switch (t.kind) {
      case TaskKind::kBinary:
        target.weights = unit_vector(world_rng, k);
        target.threshold = t.threshold ? *t.threshold : normal_quantile(1.0 - t.balance);
        break;
      case TaskKind::kCategorical:
        target.weights = normal_vector(world_rng, t.num_classes * k);
        break;
      case TaskKind::kRegression:
        target.weights = unit_vector(world_rng, k);
        break;
    }
    world.targets.push_back(std::move(target));
  }
  world.holdout_direction = unit_vector(world_rng, k);
  for (std::size_t j = 1; j < spec.holdout.num_classes; ++j) {
    world.holdout_cuts.push_back(
        normal_quantile(static_cast<double>(j) / static_cast<double>(spec.holdout.num_classes)));
  }

  out.header.item_dim = d;
  for (const TaskGen& t : spec.tasks) {
    TaskSpec ts;
    ts.name = t.name;
    ts.kind = t.kind;
    ts.num_classes = t.kind == TaskKind::kCategorical ? t.num_classes : 0;
    out.header.tasks.push_back(ts);
  }
  out.holdout.task.name = spec.holdout.name;
  out.holdout.task.kind = TaskKind::kCategorical;
  out.holdout.task.num_classes = spec.holdout.num_classes;

  std::vector<PropertyRecord> all;
  all.reserve(spec.n_properties);
  std::vector<double> pre(d);
  const double holdout_norm = std::sqrt(1.0 + spec.holdout.noise * spec.holdout.noise);
  for (std::size_t i = 0; i < spec.n_properties; ++i) {
    PropertyRecord rec;
    rec.id = property_id(i);
    const auto z = normal_vector(prop_rng, k);
    const auto c = normal_vector(prop_rng, q);
    const std::size_t length = spec.n_min + prop_rng.below(spec.n_max - spec.n_min + 1);
    rec.gallery.dim = d;
    rec.gallery.items.reserve(length * d);
    std::vector<double> style_offset(d, 0.0);
    for (std::size_t r = 0; r < d && q > 0; ++r) {
      style_offset[r] = spec.style_scale * dot(std::span(world.style_map).subspan(r * q, q), c);
    }
    for (std::size_t item = 0; item < length; ++item) {
      for (std::size_t r = 0; r < d; ++r) {
        pre[r] = dot(std::span(world.view_map).subspan(r * k, k), z) + spec.view_noise * prop_rng.normal();
      }
      for (std::size_t r = 0; r < d; ++r) {
        const double x = std::tanh(pre[r]) + style_offset[r] + spec.item_noise * prop_rng.normal();
        rec.gallery.items.push_back(quantize(x));
      }
    }
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
      const TaskGen& tg = spec.tasks[t];
      const auto& target = world.targets[t];
      double label = 0.0;
      switch (tg.kind) {
        case TaskKind::kBinary:
          label = dot(target.weights, z) > target.threshold ? 1.0 : 0.0;
          break;
        case TaskKind::kCategorical: {
          std::size_t best = 0;
          double best_score = -INFINITY;
          for (std::size_t cls = 0; cls < tg.num_classes; ++cls) {
            const double s = dot(std::span(target.weights).subspan(cls * k, k), z);
            if (s > best_score) best_score = s, best = cls;
          }
          label = static_cast<double>(best);
          break;
        }
        case TaskKind::kRegression:
          label = quantize(tg.offset + tg.scale * (dot(target.weights, z) + tg.noise * prop_rng.normal()));
          break;
      }
      rec.labels[tg.name] = label;
    }
    const double h = (dot(world.holdout_direction, z) + spec.holdout.noise * prop_rng.normal()) / holdout_norm;
    const auto rank = std::upper_bound(world.holdout_cuts.begin(), world.holdout_cuts.end(), h) -
                      world.holdout_cuts.begin();
    out.holdout.labels[rec.id] = static_cast<double>(rank);
    out.latents.push_back({rec.id, z, c});
    all.push_back(std::move(rec));
  }

  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    if (spec.tasks[t].kind != TaskKind::kBinary) continue;
    std::size_t positives = 0;
    for (const auto& rec : all) positives += rec.labels.at(spec.tasks[t].name) == 1.0;
    if (positives == 0 || positives == all.size()) {
      fail(ErrorCode::kInvalidArgument,
           "gen: threshold for '" + spec.tasks[t].name +
               "' lies outside the generated score range (all labels equal)");
    }
  }

  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  split_rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(all.size())));
  require(n_train >= 1 && n_train < all.size(), ErrorCode::kConfig,
          "gen: train/val split leaves an empty side");
  std::vector<bool> is_train(all.size(), false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
  for (std::size_t i = 0; i < all.size(); ++i) {
    (is_train[i] ? out.train : out.val).push_back(std::move(all[i]));
  }
  return out;
}

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<PropertyRecord>& records) {
  auto out = open_out(path);
  ordered_json head;
  head["schema"] = "gmtl.dataset";
  head["version"] = kDatasetSchemaVersion;
  head["item_dim"] = header.item_dim;
  head["tasks"] = ordered_json::array();
  for (const TaskSpec& t : header.tasks) head["tasks"].push_back(task_header_json(t));
  out << head.dump() << '\n';
  for (const PropertyRecord& rec : records) {
    ordered_json j;
    j["id"] = rec.id;
    ordered_json gallery = ordered_json::array();
    for (std::size_t i = 0; i < rec.gallery.length(); ++i) {
      auto item = rec.gallery.item(i);
      gallery.push_back(std::vector<double>(item.begin(), item.end()));
    }
    j["gallery"] = std::move(gallery);
    ordered_json labels = ordered_json::object();
    for (const TaskSpec& t : header.tasks) {
      const auto it = rec.labels.find(t.name);
      if (it != rec.labels.end()) labels[t.name] = it->second;
    }
    j["labels"] = std::move(labels);
    out << j.dump() << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path);
}

std::vector<std::string> write_generated(const GeneratedData& data, const GenSpec& spec,
                                         const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  write_dataset((root / "train.jsonl").string(), data.header, data.train);
  write_dataset((root / "val.jsonl").string(), data.header, data.val);
  {
    auto out = open_out((root / "holdout.jsonl").string());
    ordered_json head;
    head["schema"] = "gmtl.holdout";
    head["version"] = kDatasetSchemaVersion;
    head["task"] = task_header_json(data.holdout.task);
    out << head.dump() << '\n';
    for (const auto& [id, label] : data.holdout.labels) {
      ordered_json j;
      j["id"] = id;
      j["label"] = static_cast<long long>(label);
      out << j.dump() << '\n';
    }
  }
  {
    auto out = open_out((root / "debug_latent.jsonl").string());
    ordered_json head;
    head["schema"] = "gmtl.debug_latent";
    head["version"] = kDatasetSchemaVersion;
    head["test_only"] = true;
    out << head.dump() << '\n';
    for (const LatentRecord& rec : data.latents) {
      ordered_json j;
      j["id"] = rec.id;
      j["latent"] = rec.latent;
      j["style"] = rec.style;
      out << j.dump() << '\n';
    }
  }
  {
    auto out = open_out((root / "gen_spec.json").string());
    out << gen_spec_to_json(spec).dump(2) << '\n';
  }
  return {"train.jsonl", "val.jsonl", "holdout.jsonl", "debug_latent.jsonl", "gen_spec.json"};
}

DatasetReader::DatasetReader(const std::string& path, std::vector<TaskSpec> expected)
    : path_(path), in_(path), roster_(std::move(expected)) {
  require(static_cast<bool>(in_), ErrorCode::kNotFound, "dataset not found: " + path);
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      format_error(path_, line_no_, std::string("malformed JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("schema")) {
      try {
        check_schema(j, "gmtl.dataset", path_);
        DatasetHeader header;
        header.item_dim = j.at("item_dim").get<std::size_t>();
        for (const auto& t : j.at("tasks")) header.tasks.push_back(task_from_header_json(t));
        header_ = std::move(header);
      } catch (const json::exception& e) {
        format_error(path_, line_no_, std::string("malformed header: ") + e.what());
      }
      if (roster_.empty()) roster_ = header_->tasks;
    } else {
      pending_ = std::move(line);
      pending_line_ = line_no_;
    }
    break;
  }
  if (!roster_.empty() && header_) {
    for (const TaskSpec& want : roster_) {
      const bool declared = std::any_of(header_->tasks.begin(), header_->tasks.end(),
                                        [&](const TaskSpec& t) { return t.name == want.name; });
      require(declared, ErrorCode::kUnknownTask,
              path_ + ": task '" + want.name + "' is not declared by the dataset");
    }
  }
}

std::optional<PropertyRecord> DatasetReader::next() {
  if (pending_) {
    std::string line = std::move(*pending_);
    pending_.reset();
    const std::size_t saved = line_no_;
    line_no_ = pending_line_;
    auto rec = parse_record(line);
    line_no_ = saved;
    return rec;
  }
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    return parse_record(line);
  }
  return std::nullopt;
}

PropertyRecord DatasetReader::parse_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    format_error(path_, line_no_, std::string("malformed JSON: ") + e.what());
  }
  PropertyRecord rec;
  try {
    rec.id = j.at("id").get<std::string>();
    const auto& gallery = j.at("gallery");
    if (!gallery.is_array() || gallery.empty()) format_error(path_, line_no_, "gallery must be a non-empty array");
    const std::size_t dim = gallery.front().size();
    if (dim == 0) format_error(path_, line_no_, "items must be non-empty arrays");
    if (header_ && header_->item_dim != dim) {
      format_error(path_, line_no_, "item dimension " + std::to_string(dim) + " does not match header " +
                                        std::to_string(header_->item_dim));
    }
    rec.gallery.dim = dim;
    rec.gallery.items.reserve(gallery.size() * dim);
    for (const auto& item : gallery) {
      if (!item.is_array() || item.size() != dim) format_error(path_, line_no_, "ragged gallery items");
      for (const auto& v : item) {
        if (!v.is_number()) format_error(path_, line_no_, "non-numeric item feature");
        rec.gallery.items.push_back(v.get<double>());
      }
    }
    for (const auto& [name, value] : j.at("labels").items()) {
      if (!value.is_number()) format_error(path_, line_no_, "label '" + name + "' is not a number");
      rec.labels[name] = value.get<double>();
    }
  } catch (const json::exception& e) {
    format_error(path_, line_no_, std::string("malformed record: ") + e.what());
  }
  if (!roster_.empty()) {
    for (const auto& [name, value] : rec.labels) {
      const bool known = std::any_of(roster_.begin(), roster_.end(),
                                     [&](const TaskSpec& t) { return t.name == name; });
      if (!known) {
        fail(ErrorCode::kUnknownTask,
             path_ + ":" + std::to_string(line_no_) + ": unknown task '" + name + "'");
      }
    }
    for (const TaskSpec& t : roster_) {
      if (!rec.labels.contains(t.name)) {
        format_error(path_, line_no_, "missing label for task '" + t.name + "'");
      }
    }
  }
  return rec;
}

Dataset load_dataset(const std::string& path) {
  DatasetReader reader(path);
  Dataset out;
  while (auto rec = reader.next()) out.records.push_back(std::move(*rec));
  if (reader.header()) {
    out.header = *reader.header();
  } else if (!out.records.empty()) {
    out.header.item_dim = out.records.front().gallery.dim;
  }
  return out;
}

HoldoutLabels load_holdout(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "hold-out labels not found: " + path);
  HoldoutLabels out;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (!j.contains("schema")) format_error(path, line_no, "missing hold-out header");
        check_schema(j, "gmtl.holdout", path);
        out.task = task_from_header_json(j.at("task"));
        have_header = true;
        continue;
      }
      const double label = j.at("label").get<double>();
      TaskSpec check = out.task;
      validate_labels(std::span(&label, 1), check);
      out.labels[j.at("id").get<std::string>()] = label;
    } catch (const json::exception& e) {
      format_error(path, line_no, std::string("malformed hold-out line: ") + e.what());
    }
  }
  require(have_header, ErrorCode::kFormat, path + ": empty hold-out file");
  return out;
}

double minority_fraction(std::span<const double> labels) {
  require(!labels.empty(), ErrorCode::kInvalidArgument, "minority_fraction: no labels");
  double positives = 0.0;
  for (double y : labels) positives += y;
  const double p = positives / static_cast<double>(labels.size());
  return std::min(p, 1.0 - p);
}

}  // namespace gmtl
