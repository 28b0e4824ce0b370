#include "gmtl/model.hpp"

#include <set>

#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"
#include "json.hpp"

namespace gmtl {

using nlohmann::ordered_json;

MtlModel::MtlModel(EncoderConfig encoder_config, std::vector<TaskSpec> roster,
                   WeightingScheme scheme, std::uint64_t seed)
    : encoder_(std::move(encoder_config), seed), scheme_(scheme) {
  require(!roster.empty(), ErrorCode::kConfig, "model: task roster is empty");
  Rng rng(seed ^ 0x5DEECE66DULL);
  for (TaskSpec& spec : roster) heads_.emplace_back(std::move(spec), encoder_.config().embed_dim, rng);
  std::set<std::string> names;
  for (const TaskHead& h : heads_) {
    require(names.insert(h.spec().name).second, ErrorCode::kConfig,
            "model: duplicate task '" + h.spec().name + "'");
  }
  if (scheme_ == WeightingScheme::kKendall) {
    const auto specs = this->roster();
    uncertainty_ = UncertaintyParams(specs);
  }
}

MtlModel::MtlModel(Encoder encoder, std::vector<TaskHead> heads, WeightingScheme scheme,
                   std::optional<UncertaintyParams> uncertainty)
    : encoder_(std::move(encoder)), heads_(std::move(heads)), scheme_(scheme) {
  require(!heads_.empty(), ErrorCode::kConfig, "model: task roster is empty");
  for (const TaskHead& h : heads_) {
    require(h.embed_dim() == encoder_.config().embed_dim, ErrorCode::kShape,
            "model: head '" + h.spec().name + "' does not match the embedding width");
  }
  if (scheme_ == WeightingScheme::kKendall) {
    const auto specs = roster();
    uncertainty_ = uncertainty ? std::move(*uncertainty) : UncertaintyParams(specs);
    require(uncertainty_.size() == heads_.size(), ErrorCode::kInvalidArgument,
            "model: uncertainty parameters do not match the task roster");
    for (const TaskSpec& s : specs) (void)uncertainty_.at(s.name);
  }
}

const TaskHead& MtlModel::head(const std::string& task) const {
  for (const TaskHead& h : heads_) {
    if (h.spec().name == task) return h;
  }
  fail(ErrorCode::kUnknownTask, "model has no task '" + task + "'");
}

std::vector<TaskSpec> MtlModel::roster() const {
  std::vector<TaskSpec> out;
  for (const TaskHead& h : heads_) out.push_back(h.spec());
  return out;
}

bool MtlModel::has_task(const std::string& task) const {
  for (const TaskHead& h : heads_) {
    if (h.spec().name == task) return true;
  }
  return false;
}

std::map<std::string, double> MtlModel::variances() const {
  std::map<std::string, double> out;
  for (const TaskHead& h : heads_) {
    if (h.spec().sample_variance) out[h.spec().name] = *h.spec().sample_variance;
  }
  return out;
}

Tensor MtlModel::total_loss(const LossVector& losses) const {
  return scheme_ == WeightingScheme::kKendall ? kendall_total(losses, uncertainty_)
                                              : pseudo_uniform_total(losses, variances());
}

std::vector<Tensor> MtlModel::network_parameters() const {
  std::vector<Tensor> out = encoder_.parameters();
  for (const TaskHead& h : heads_) {
    for (Tensor& t : h.parameters()) out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> MtlModel::named_parameters() const {
  std::vector<NamedTensor> out;
  const auto& layers = encoder_.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back({"encoder.layer" + std::to_string(i) + ".weight", layers[i].weight});
    out.push_back({"encoder.layer" + std::to_string(i) + ".bias", layers[i].bias});
  }
  for (const TaskHead& h : heads_) {
    const std::string prefix = "head." + h.spec().name;
    out.push_back({prefix + ".hidden.weight", h.hidden().weight});
    out.push_back({prefix + ".hidden.bias", h.hidden().bias});
    out.push_back({prefix + ".output.weight", h.output().weight});
    out.push_back({prefix + ".output.bias", h.output().bias});
  }
  for (std::size_t i = 0; i < uncertainty_.size(); ++i) {
    out.push_back({"uncertainty." + uncertainty_.names()[i], uncertainty_.log_variances()[i]});
  }
  return out;
}

std::size_t MtlModel::trainable_parameter_count() const {
  std::size_t n = encoder_.trainable_parameter_count();
  for (const TaskHead& h : heads_) n += h.parameter_count();
  return n + uncertainty_.size();
}

MtlModel MtlModel::clone() const {
  std::vector<TaskHead> heads;
  for (const TaskHead& h : heads_) heads.push_back(h.clone());
  std::optional<UncertaintyParams> u;
  if (scheme_ == WeightingScheme::kKendall) u = uncertainty_.clone();
  return MtlModel(encoder_.clone(), std::move(heads), scheme_, std::move(u));
}

Checkpoint MtlModel::to_checkpoint() const {
  ordered_json meta;
  meta["format"] = "gmtl.model";
  meta["scheme"] = weighting_scheme_name(scheme_);
  const EncoderConfig& ec = encoder_.config();
  meta["encoder"] = {{"item_dim", ec.item_dim},
                     {"hidden_dims", ec.hidden_dims},
                     {"embed_dim", ec.embed_dim},
                     {"frozen_prefix", ec.frozen_prefix}};
  meta["tasks"] = ordered_json::array();
  for (const TaskHead& h : heads_) {
    const TaskSpec& s = h.spec();
    ordered_json t;
    t["name"] = s.name;
    t["kind"] = task_kind_name(s.kind);
    t["num_classes"] = s.num_classes;
    t["hidden_dim"] = s.hidden_dim;
    if (s.sample_variance) t["sample_variance"] = *s.sample_variance;
    meta["tasks"].push_back(std::move(t));
  }
  return Checkpoint{meta.dump(), named_parameters()};
}

MtlModel MtlModel::from_checkpoint(const Checkpoint& checkpoint) {
  ordered_json meta;
  try {
    meta = ordered_json::parse(checkpoint.meta_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, tensor] : checkpoint.tensors) by_name.emplace(name, tensor);
  auto take = [&](const std::string& name) {
    const auto it = by_name.find(name);
    require(it != by_name.end(), ErrorCode::kFormat, "checkpoint lacks tensor '" + name + "'");
    Tensor t = it->second;
    t.set_requires_grad(true);
    return t;
  };
  try {
    require(meta.at("format") == "gmtl.model", ErrorCode::kFormat, "checkpoint is not a model");
    EncoderConfig ec;
    const auto& je = meta.at("encoder");
    ec.item_dim = je.at("item_dim").get<std::size_t>();
    ec.hidden_dims = je.at("hidden_dims").get<std::vector<std::size_t>>();
    ec.embed_dim = je.at("embed_dim").get<std::size_t>();
    ec.frozen_prefix = je.at("frozen_prefix").get<std::size_t>();
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i < ec.hidden_dims.size(); ++i) {
      layers.push_back({take("encoder.layer" + std::to_string(i) + ".weight"),
                        take("encoder.layer" + std::to_string(i) + ".bias")});
    }
    Encoder encoder(ec, std::move(layers));
    std::vector<TaskHead> heads;
    for (const auto& jt : meta.at("tasks")) {
      TaskSpec s;
      s.name = jt.at("name").get<std::string>();
      s.kind = parse_task_kind(jt.at("kind").get<std::string>());
      s.num_classes = jt.at("num_classes").get<std::size_t>();
      s.hidden_dim = jt.at("hidden_dim").get<std::size_t>();
      if (jt.contains("sample_variance")) s.sample_variance = jt.at("sample_variance").get<double>();
      const std::string prefix = "head." + s.name;
      heads.emplace_back(s, DenseLayer{take(prefix + ".hidden.weight"), take(prefix + ".hidden.bias")},
                         DenseLayer{take(prefix + ".output.weight"), take(prefix + ".output.bias")});
    }
    const WeightingScheme scheme = parse_weighting_scheme(meta.at("scheme").get<std::string>());
    std::optional<UncertaintyParams> u;
    if (scheme == WeightingScheme::kKendall) {
      std::vector<std::string> names;
      std::vector<Tensor> values;
      for (const TaskHead& h : heads) {
        names.push_back(h.spec().name);
        values.push_back(take("uncertainty." + h.spec().name));
      }
      u = UncertaintyParams(std::move(names), std::move(values));
    }
    return MtlModel(std::move(encoder), std::move(heads), scheme, std::move(u));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("malformed checkpoint metadata: ") + e.what());
  }
}

}  // namespace gmtl
