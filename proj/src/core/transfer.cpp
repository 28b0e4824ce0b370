#include "gmtl/transfer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "gmtl/error.hpp"
#include "gmtl/hash.hpp"
#include "gmtl/rng.hpp"
#include "json.hpp"

namespace gmtl {

using nlohmann::ordered_json;

void TransferConfig::validate() const {
  require(!fractions.empty(), ErrorCode::kConfig, "transfer: fraction list is empty");
  for (double f : fractions) {
    require(f > 0.0 && f <= 1.0, ErrorCode::kConfig, "transfer: fractions must lie in (0, 1]");
  }
  require(internal_val_fraction > 0.0 && internal_val_fraction < 1.0, ErrorCode::kConfig,
          "transfer: internal_val_fraction must lie in (0, 1)");
  require(head_hidden_dim >= 1, ErrorCode::kConfig, "transfer: head_hidden_dim must be >= 1");
  train.validate();
}

double TransferRow::accuracy(std::size_t arm) const {
  switch (arm) {
    case 0: return mtl_embeddings;
    case 1: return generic_frozen;
    case 2: return end_to_end;
    default: fail(ErrorCode::kInvalidArgument, "transfer: arm index out of range");
  }
}

LabeledSet make_holdout_set(const std::vector<PropertyRecord>& records, const HoldoutLabels& holdout,
                            std::size_t head_hidden_dim) {
  LabeledSet out;
  TaskSpec spec = holdout.task;
  spec.hidden_dim = head_hidden_dim;
  spec.validate();
  out.roster = {spec};
  out.labels.assign(1, {});
  for (const PropertyRecord& rec : records) {
    const auto it = holdout.labels.find(rec.id);
    require(it != holdout.labels.end(), ErrorCode::kFormat,
            "hold-out labels lack property '" + rec.id + "'");
    out.ids.push_back(rec.id);
    out.galleries.push_back(&rec.gallery);
    out.labels[0].push_back(it->second);
  }
  validate_labels(out.labels[0], spec);
  return out;
}

std::string labeled_set_hash(const LabeledSet& data) {
  std::ostringstream text;
  text.precision(17);
  for (std::size_t r = 0; r < data.size(); ++r) {
    text << data.ids[r];
    for (const auto& column : data.labels) text << ',' << column[r];
    text << '\n';
  }
  return sha256_hex(text.str());
}

namespace {

bool same_values(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].data();
    const auto y = b[i].data();
    if (x.size() != y.size() || !std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

struct ArmOutcome {
  double accuracy = 0.0;
  double seconds = 0.0;
  std::size_t instances = 0;
  bool encoder_unchanged = true;
};

ArmOutcome run_arm(Encoder encoder, const TaskSpec& spec, std::uint64_t head_seed,
                   const LabeledSet& train_set, const LabeledSet& val_set, const LabeledSet& test,
                   const TrainConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const std::vector<Tensor> before = [&] {
    std::vector<Tensor> copies;
    for (const Tensor& p : encoder.parameters()) copies.push_back(p.clone());
    return copies;
  }();
  Rng head_rng(head_seed);
  std::vector<TaskHead> heads;
  heads.emplace_back(spec, encoder.config().embed_dim, head_rng);
  const MtlModel initial(std::move(encoder), std::move(heads), WeightingScheme::kPseudoUniform);
  const TrainResult result = train(initial, train_set, val_set, config);
  ArmOutcome out;
  out.accuracy = *evaluate(result.model, test, &train_set).task(spec.name).accuracy;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const std::size_t iterations = result.log.records.empty() ? 0 : result.log.records.back().iteration;
  out.instances = iterations * config.batch_size;
  if (result.model.encoder().config().frozen_prefix == result.model.encoder().layer_count()) {
    out.encoder_unchanged = same_values(before, result.model.encoder().parameters());
  }
  return out;
}

}  // namespace

TransferReport run_transfer(const MtlModel& mtl, const LabeledSet& pool, const LabeledSet& test,
                            const TransferConfig& config) {
  config.validate();
  require(pool.roster.size() == 1 && test.roster.size() == 1, ErrorCode::kInvalidArgument,
          "transfer: expected a single hold-out task");
  const TaskSpec& spec = pool.roster.front();
  require(spec.kind != TaskKind::kRegression, ErrorCode::kInvalidArgument,
          "transfer: hold-out task must be a classification task");
  require(!mtl.has_task(spec.name), ErrorCode::kInvalidArgument,
          "transfer: hold-out task '" + spec.name + "' is part of the MTL roster; refusing to run");
  require(test.size() > 0, ErrorCode::kInvalidArgument, "transfer: empty test set");

  TransferReport report;
  report.task = spec.name;
  report.num_classes = spec.output_dim() == 1 ? 2 : spec.output_dim();
  report.pool_size = pool.size();
  report.test_size = test.size();
  report.test_hash = labeled_set_hash(test);

  // Fixed internal validation slice, then nested training prefixes of one shuffled order.
  Rng rng(config.seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const auto val_count = static_cast<std::size_t>(
      std::llround(config.internal_val_fraction * static_cast<double>(pool.size())));
  require(val_count >= 1 && val_count < pool.size(), ErrorCode::kInvalidArgument,
          "transfer: pool too small for an internal validation split");
  const LabeledSet val_set =
      pool.subset(std::span<const std::size_t>(order.data(), val_count));
  const std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  report.internal_val_size = val_count;

  {
    const auto& labels = pool.column(spec.name);
    std::vector<std::size_t> counts(report.num_classes, 0);
    for (std::size_t r : rest) counts[static_cast<std::size_t>(labels[r])]++;
    const double majority =
        static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const auto& truth = test.column(spec.name);
    report.majority_baseline =
        static_cast<double>(std::count(truth.begin(), truth.end(), majority)) / static_cast<double>(truth.size());
  }

  Encoder mtl_encoder = mtl.encoder().clone();
  mtl_encoder.set_frozen_prefix(mtl_encoder.layer_count());
  EncoderConfig generic_config = mtl.encoder().config();
  generic_config.frozen_prefix = 0;
  const std::uint64_t encoder_seed = rng.fork_seed();
  const std::uint64_t head_seed = rng.fork_seed();
  Encoder generic_encoder(generic_config, encoder_seed);
  Encoder end_to_end_encoder = generic_encoder.clone();
  generic_encoder.set_frozen_prefix(generic_encoder.layer_count());

  std::vector<double> fractions = config.fractions;
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

  TrainConfig train_config = config.train;
  train_config.seed = rng.fork_seed();
  for (double f : fractions) {
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(f * static_cast<double>(rest.size()))));
    const LabeledSet train_set = pool.subset(std::span<const std::size_t>(rest.data(), n));
    TransferRow row;
    row.fraction = f;
    row.train_size = n;
    const Encoder* encoders[] = {&mtl_encoder, &generic_encoder, &end_to_end_encoder};
    double* slots[] = {&row.mtl_embeddings, &row.generic_frozen, &row.end_to_end};
    for (std::size_t arm = 0; arm < 3; ++arm) {
      const ArmOutcome outcome =
          run_arm(encoders[arm]->clone(), spec, head_seed, train_set, val_set, test, train_config);
      *slots[arm] = outcome.accuracy;
      if (arm < 2) report.frozen_encoders_unchanged &= outcome.encoder_unchanged;
      report.timing.push_back({kTransferArms[arm], f, outcome.seconds,
                               outcome.instances ? outcome.seconds / static_cast<double>(outcome.instances) : 0.0});
    }
    report.rows.push_back(row);
  }

  const TransferRow& full = report.rows.back();
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      if (a == b) continue;
      EfficiencyEntry e{kTransferArms[a], kTransferArms[b], std::nullopt};
      for (const TransferRow& row : report.rows) {
        if (row.accuracy(a) > full.accuracy(b)) {
          e.fraction = row.fraction;
          break;
        }
      }
      report.efficiency.push_back(e);
    }
  }
  return report;
}

std::string TransferReport::to_json(bool with_timing) const {
  ordered_json j;
  j["task"] = task;
  j["num_classes"] = num_classes;
  j["pool_size"] = pool_size;
  j["internal_val_size"] = internal_val_size;
  j["test_size"] = test_size;
  j["test_hash"] = test_hash;
  j["majority_baseline"] = majority_baseline;
  j["frozen_encoders_unchanged"] = frozen_encoders_unchanged;
  j["rows"] = ordered_json::array();
  for (const TransferRow& r : rows) {
    j["rows"].push_back({{"fraction", r.fraction},
                         {"train_size", r.train_size},
                         {"mtl_embeddings", r.mtl_embeddings},
                         {"generic_frozen", r.generic_frozen},
                         {"end_to_end", r.end_to_end}});
  }
  j["efficiency"] = ordered_json::array();
  for (const EfficiencyEntry& e : efficiency) {
    j["efficiency"].push_back({{"arm", e.arm},
                               {"reference", e.reference},
                               {"fraction", e.fraction ? ordered_json(*e.fraction) : ordered_json(nullptr)}});
  }
  if (with_timing) {
    j["timing"] = ordered_json::array();
    for (const ArmTiming& t : timing) {
      j["timing"].push_back({{"arm", t.arm},
                             {"fraction", t.fraction},
                             {"total_seconds", t.total_seconds},
                             {"seconds_per_instance", t.seconds_per_instance}});
    }
  }
  return j.dump(2) + "\n";
}

std::string TransferReport::to_table() const {
  std::ostringstream out;
  out << "Hold-out task: " << task << " (" << num_classes << " classes, test n=" << test_size
      << ", majority baseline " << std::fixed << std::setprecision(3) << majority_baseline << ")\n";
  out << std::left << std::setw(12) << "fraction" << std::setw(10) << "n" << std::right
      << std::setw(16) << "mtl_embeddings" << std::setw(16) << "generic_frozen" << std::setw(14)
      << "end_to_end" << '\n';
  for (const TransferRow& r : rows) {
    std::ostringstream frac;
    frac << std::fixed << std::setprecision(0) << r.fraction * 100.0 << "%";
    out << std::left << std::setw(12) << frac.str() << std::setw(10) << r.train_size << std::right
        << std::fixed << std::setprecision(3) << std::setw(16) << r.mtl_embeddings << std::setw(16)
        << r.generic_frozen << std::setw(14) << r.end_to_end << '\n';
  }
  return out.str();
}

}  // namespace gmtl
