#include "gmtl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gmtl/adam.hpp"
#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"
#include "json.hpp"

namespace gmtl {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorCode::kConfig, "train: batch_size must be >= 1");
  require(patience >= 1, ErrorCode::kConfig, "train: patience must be >= 1");
  require(eval_every >= 1, ErrorCode::kConfig, "train: eval_every must be >= 1");
  require(max_epochs >= 1, ErrorCode::kConfig, "train: max_epochs must be >= 1");
  require(lr >= 0.0 && std::isfinite(lr), ErrorCode::kConfig, "train: lr must be finite and >= 0");
  require(!uncertainty_lr || (*uncertainty_lr >= 0.0 && std::isfinite(*uncertainty_lr)),
          ErrorCode::kConfig, "train: uncertainty_lr must be finite and >= 0");
  require(clip_norm >= 0.0, ErrorCode::kConfig, "train: clip_norm must be >= 0");
  require(eval_chunk >= 1, ErrorCode::kConfig, "train: eval_chunk must be >= 1");
}

const std::vector<double>& LabeledSet::column(const std::string& task) const {
  for (std::size_t t = 0; t < roster.size(); ++t) {
    if (roster[t].name == task) return labels[t];
  }
  fail(ErrorCode::kUnknownTask, "data has no labels for task '" + task + "'");
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> rows) const {
  LabeledSet out;
  out.roster = roster;
  out.labels.resize(roster.size());
  for (std::size_t r : rows) {
    require(r < size(), ErrorCode::kInvalidArgument, "subset: row out of range");
    out.ids.push_back(ids[r]);
    out.galleries.push_back(galleries[r]);
    for (std::size_t t = 0; t < roster.size(); ++t) out.labels[t].push_back(labels[t][r]);
  }
  return out;
}

LabeledSet make_labeled_set(const std::vector<PropertyRecord>& records,
                            const std::vector<TaskSpec>& roster) {
  LabeledSet out;
  out.roster = roster;
  out.labels.assign(roster.size(), {});
  for (const PropertyRecord& rec : records) {
    out.ids.push_back(rec.id);
    out.galleries.push_back(&rec.gallery);
    for (std::size_t t = 0; t < roster.size(); ++t) {
      const auto it = rec.labels.find(roster[t].name);
      require(it != rec.labels.end(), ErrorCode::kUnknownTask,
              "record '" + rec.id + "' has no label for task '" + roster[t].name + "'");
      out.labels[t].push_back(it->second);
    }
  }
  for (std::size_t t = 0; t < roster.size(); ++t) validate_labels(out.labels[t], roster[t]);
  return out;
}

std::string TrainLog::to_jsonl(bool with_timing) const {
  std::ostringstream out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EvalRecord& r = records[i];
    ordered_json j;
    j["iteration"] = r.iteration;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["val_total"] = r.val_total;
    if (!r.log_variances.empty()) j["log_variances"] = r.log_variances;
    j["best"] = (i == best_index);
    if (with_timing) j["wall_seconds"] = r.wall_seconds;
    out << j.dump() << '\n';
  }
  return out.str();
}

Tensor embed_galleries(const Encoder& encoder, std::span<const Gallery* const> galleries,
                       std::size_t chunk) {
  require(!galleries.empty(), ErrorCode::kInvalidArgument, "embed_galleries: no galleries");
  require(chunk >= 1, ErrorCode::kInvalidArgument, "embed_galleries: chunk must be >= 1");
  NoGradGuard no_grad;
  const std::size_t n = galleries.size();
  const std::size_t e = encoder.config().embed_dim;
  // Rows are independent, so grouping by length only reduces padding work.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return galleries[a]->length() < galleries[b]->length();
  });
  std::vector<double> out(n * e);
  std::vector<const Gallery*> group;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    group.clear();
    for (std::size_t i = start; i < stop; ++i) group.push_back(galleries[order[i]]);
    const Tensor emb = encoder.encode(make_batch(std::span<const Gallery* const>(group)));
    for (std::size_t i = start; i < stop; ++i) {
      std::copy_n(emb.data().begin() + static_cast<std::ptrdiff_t>((i - start) * e), e,
                  out.begin() + static_cast<std::ptrdiff_t>(order[i] * e));
    }
  }
  return Tensor::from({n, e}, std::move(out));
}

namespace {

Tensor gather_rows(const Tensor& matrix, std::span<const std::size_t> rows) {
  const std::size_t width = matrix.dim(1);
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (std::size_t r : rows) {
    auto row = matrix.data().subspan(r * width, width);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::from({rows.size(), width}, std::move(out));
}

std::vector<double> gather(const std::vector<double>& column, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(column[r]);
  return out;
}

bool encoder_fully_frozen(const Encoder& encoder) {
  return encoder.config().frozen_prefix == encoder.layer_count();
}

void check_roster(const MtlModel& model, const LabeledSet& data, const char* what) {
  for (const TaskHead& h : model.heads()) {
    const auto it = std::find_if(data.roster.begin(), data.roster.end(),
                                 [&](const TaskSpec& s) { return s.name == h.spec().name; });
    require(it != data.roster.end(), ErrorCode::kUnknownTask,
            std::string(what) + " has no labels for model task '" + h.spec().name + "'");
    require(it->kind == h.spec().kind && it->output_dim() == h.spec().output_dim(),
            ErrorCode::kUnknownTask,
            std::string(what) + " declares task '" + h.spec().name + "' with a different kind");
  }
}

double total_from_values(const MtlModel& model, const std::map<std::string, double>& losses) {
  NoGradGuard no_grad;
  LossVector vec;
  for (const TaskHead& h : model.heads()) {
    vec.push_back({h.spec().name, h.spec().kind, Tensor::scalar(losses.at(h.spec().name))});
  }
  return model.total_loss(vec).item();
}

}  // namespace

std::map<std::string, double> dataset_losses(const MtlModel& model, const Tensor& embeddings,
                                             const LabeledSet& data) {
  NoGradGuard no_grad;
  std::map<std::string, double> out;
  for (const TaskHead& h : model.heads()) {
    const Tensor logits = h.logits(embeddings);
    out[h.spec().name] = task_loss_from_logits(logits, data.column(h.spec().name), h.spec()).item();
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  return order;
}

TrainResult train(const MtlModel& initial, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& config) {
  config.validate();
  require(train_set.size() > 0, ErrorCode::kInvalidArgument, "train: empty training set");
  require(val_set.size() > 0, ErrorCode::kInvalidArgument, "train: empty validation set");
  check_roster(initial, train_set, "training set");
  check_roster(initial, val_set, "validation set");

  const auto started = std::chrono::steady_clock::now();
  MtlModel model = initial.clone();
  Rng rng(config.seed);

  std::vector<Tensor> params = model.network_parameters();
  AdamState adam(params, AdamConfig{config.lr, config.beta1, config.beta2, config.epsilon});
  std::vector<Tensor> log_vars = model.uncertainty().log_variances();
  AdamState adam_u(log_vars, AdamConfig{config.uncertainty_lr.value_or(config.lr), config.beta1,
                                        config.beta2, config.epsilon});
  const bool kendall = model.scheme() == WeightingScheme::kKendall;

  // Per-task label columns in head order.
  std::vector<const std::vector<double>*> train_cols, val_cols;
  for (const TaskHead& h : model.heads()) {
    train_cols.push_back(&train_set.column(h.spec().name));
    val_cols.push_back(&val_set.column(h.spec().name));
  }

  const bool frozen_encoder = encoder_fully_frozen(model.encoder());
  std::optional<Tensor> train_cache;
  if (frozen_encoder) train_cache = embed_galleries(model.encoder(), train_set.galleries, config.eval_chunk);
  const Tensor val_embeddings_frozen =
      frozen_encoder ? embed_galleries(model.encoder(), val_set.galleries, config.eval_chunk) : Tensor();

  TrainResult result{model.clone(), {}};
  double best_total = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t iteration = 0;
  std::vector<double> window_sums(model.heads().size(), 0.0);
  std::size_t window_steps = 0;
  bool stop = false;

  auto run_evaluation = [&](std::size_t epoch) {
    const Tensor val_emb = frozen_encoder
                               ? val_embeddings_frozen
                               : embed_galleries(model.encoder(), val_set.galleries, config.eval_chunk);
    EvalRecord rec;
    rec.iteration = iteration;
    rec.epoch = epoch;
    rec.val_loss = dataset_losses(model, val_emb, val_set);
    rec.val_total = total_from_values(model, rec.val_loss);
    for (std::size_t t = 0; t < model.heads().size(); ++t) {
      rec.train_loss[model.heads()[t].spec().name] =
          window_steps ? window_sums[t] / static_cast<double>(window_steps) : 0.0;
    }
    if (kendall) {
      for (std::size_t t = 0; t < log_vars.size(); ++t) {
        const double s = log_vars[t].item();
        require(std::isfinite(s), ErrorCode::kNumeric, "train: log-variance became non-finite");
        rec.log_variances[model.uncertainty().names()[t]] = s;
      }
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::fill(window_sums.begin(), window_sums.end(), 0.0);
    window_steps = 0;
    result.log.records.push_back(rec);
    if (rec.val_total < best_total) {
      best_total = rec.val_total;
      since_best = 0;
      result.log.best_index = result.log.records.size() - 1;
      result.model = model.clone();
    } else if (++since_best >= config.patience) {
      stop = true;
      result.log.early_stopped = true;
    }
  };

  std::vector<std::size_t> order(train_set.size());
  std::vector<const Gallery*> batch_galleries;
  std::size_t epoch = 0;
  for (; epoch < config.max_epochs && !stop; ++epoch) {
    order = epoch_order(train_set.size(), rng);
    for (std::size_t start = 0; start < order.size() && !stop; start += config.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start,
                                              std::min(config.batch_size, order.size() - start));
      Tensor embedding;
      if (frozen_encoder) {
        embedding = gather_rows(*train_cache, rows);
      } else {
        batch_galleries.clear();
        for (std::size_t r : rows) batch_galleries.push_back(train_set.galleries[r]);
        embedding = model.encoder().encode(make_batch(std::span<const Gallery* const>(batch_galleries)));
      }
      LossVector losses;
      for (std::size_t t = 0; t < model.heads().size(); ++t) {
        const TaskHead& head = model.heads()[t];
        try {
          const auto labels = gather(*train_cols[t], rows);
          losses.push_back({head.spec().name, head.spec().kind,
                            task_loss_from_logits(head.logits(embedding), labels, head.spec())});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNumeric) throw;
          fail(ErrorCode::kNumeric, "train: non-finite loss in task '" + head.spec().name +
                                        "' at iteration " + std::to_string(iteration) + ": " + e.what());
        }
      }
      const Tensor total = model.total_loss(losses);
      backward(total);
      if (config.clip_norm > 0.0) clip_grad_norm(params, config.clip_norm);
      adam_step(params, adam);
      if (kendall) adam_step(log_vars, adam_u);
      for (std::size_t t = 0; t < losses.size(); ++t) window_sums[t] += losses[t].loss.item();
      ++window_steps;
      ++iteration;
      if (iteration % config.eval_every == 0) run_evaluation(epoch);
    }
  }
  if (!stop && (result.log.records.empty() || result.log.records.back().iteration != iteration)) {
    run_evaluation(epoch == 0 ? 0 : epoch - 1);
  }
  return result;
}

const TaskMetrics& Metrics::task(const std::string& name) const {
  for (const TaskMetrics& m : tasks) {
    if (m.name == name) return m;
  }
  fail(ErrorCode::kUnknownTask, "metrics have no task '" + name + "'");
}

Predictions predict(const MtlModel& model, const LabeledSet& data, std::size_t chunk) {
  check_roster(model, data, "evaluation set");
  NoGradGuard no_grad;
  Predictions out;
  out.ids = data.ids;
  out.roster = model.roster();
  if (data.size() == 0) {
    out.predicted.assign(out.roster.size(), {});
    out.truth.assign(out.roster.size(), {});
    out.losses.assign(out.roster.size(), 0.0);
    return out;
  }
  const Tensor emb = embed_galleries(model.encoder(), data.galleries, chunk);
  for (const TaskHead& head : model.heads()) {
    const TaskSpec& spec = head.spec();
    const auto& truth = data.column(spec.name);
    const Tensor logits = head.logits(emb);
    out.losses.push_back(task_loss_from_logits(logits, truth, spec).item());
    std::vector<double> pred(data.size());
    const std::size_t width = spec.output_dim();
    for (std::size_t r = 0; r < data.size(); ++r) {
      auto row = logits.data().subspan(r * width, width);
      switch (spec.kind) {
        case TaskKind::kBinary: pred[r] = row[0] > 0.0 ? 1.0 : 0.0; break;
        case TaskKind::kCategorical:
          pred[r] = static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin());
          break;
        case TaskKind::kRegression: pred[r] = row[0]; break;
      }
    }
    out.predicted.push_back(std::move(pred));
    out.truth.push_back(truth);
  }
  return out;
}

std::string Predictions::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "id,task,truth,prediction\n";
  for (std::size_t t = 0; t < roster.size(); ++t) {
    for (std::size_t r = 0; r < ids.size(); ++r) {
      out << ids[r] << ',' << roster[t].name << ',' << truth[t][r] << ',' << predicted[t][r] << '\n';
    }
  }
  return out.str();
}

Metrics metrics_from_predictions(const Predictions& predictions, const LabeledSet* reference) {
  Metrics out;
  for (std::size_t t = 0; t < predictions.roster.size(); ++t) {
    const TaskSpec& spec = predictions.roster[t];
    const auto& truth = predictions.truth[t];
    const auto& pred = predictions.predicted[t];
    const auto& ref = reference ? reference->column(spec.name) : truth;
    TaskMetrics m;
    m.name = spec.name;
    m.kind = spec.kind;
    m.count = truth.size();
    m.loss = predictions.losses[t];
    if (truth.empty()) {
      if (is_classification(spec.kind)) m.accuracy = 0.0; else m.mse = 0.0;
      out.tasks.push_back(m);
      continue;
    }
    const double n = static_cast<double>(truth.size());
    if (is_classification(spec.kind)) {
      double correct = 0.0;
      for (std::size_t r = 0; r < truth.size(); ++r) correct += pred[r] == truth[r];
      m.accuracy = correct / n;
      const std::size_t classes = spec.kind == TaskKind::kBinary ? 2 : spec.num_classes;
      std::vector<std::size_t> counts(classes, 0);
      for (double y : ref) counts[static_cast<std::size_t>(y)]++;
      const double majority =
          static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      double hits = 0.0;
      for (double y : truth) hits += y == majority;
      m.baseline_accuracy = hits / n;
      if (spec.kind == TaskKind::kBinary) m.class_balance = minority_fraction(truth);
    } else {
      double sq = 0.0;
      for (std::size_t r = 0; r < truth.size(); ++r) sq += (pred[r] - truth[r]) * (pred[r] - truth[r]);
      m.mse = sq / n;
      double mean = 0.0;
      for (double y : ref) mean += y;
      mean /= static_cast<double>(ref.size());
      double base = 0.0;
      for (double y : truth) base += (y - mean) * (y - mean);
      m.baseline_mse = base / n;
    }
    out.tasks.push_back(m);
  }
  return out;
}

Metrics evaluate(const MtlModel& model, const LabeledSet& data, const LabeledSet* reference) {
  return metrics_from_predictions(predict(model, data), reference);
}

std::string metrics_to_json(const Metrics& metrics) {
  ordered_json j;
  j["tasks"] = ordered_json::array();
  for (const TaskMetrics& m : metrics.tasks) {
    ordered_json t;
    t["name"] = m.name;
    t["kind"] = task_kind_name(m.kind);
    t["count"] = m.count;
    t["loss"] = m.loss;
    if (m.accuracy) {
      t["accuracy"] = *m.accuracy;
      t["accuracy_error"] = 1.0 - *m.accuracy;
      t["baseline_accuracy"] = m.baseline_accuracy;
    }
    if (m.mse) {
      t["mse"] = *m.mse;
      t["baseline_mse"] = m.baseline_mse;
    }
    if (m.class_balance) t["class_balance"] = *m.class_balance;
    t["error"] = m.error();
    t["baseline_error"] = m.baseline_error();
    j["tasks"].push_back(std::move(t));
  }
  return j.dump(2) + "\n";
}

Metrics metrics_from_json(const std::string& text) {
  Metrics out;
  try {
    const auto j = ordered_json::parse(text);
    for (const auto& t : j.at("tasks")) {
      TaskMetrics m;
      m.name = t.at("name").get<std::string>();
      m.kind = parse_task_kind(t.at("kind").get<std::string>());
      m.count = t.at("count").get<std::size_t>();
      m.loss = t.at("loss").get<double>();
      if (t.contains("accuracy")) {
        m.accuracy = t.at("accuracy").get<double>();
        m.baseline_accuracy = t.at("baseline_accuracy").get<double>();
      }
      if (t.contains("mse")) {
        m.mse = t.at("mse").get<double>();
        m.baseline_mse = t.at("baseline_mse").get<double>();
      }
      if (t.contains("class_balance")) m.class_balance = t.at("class_balance").get<double>();
      require(m.accuracy.has_value() != m.mse.has_value(), ErrorCode::kFormat,
              "metrics: task '" + m.name + "' needs exactly one of accuracy or mse");
      out.tasks.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed metrics JSON: ") + e.what());
  }
  return out;
}

}  // namespace gmtl
