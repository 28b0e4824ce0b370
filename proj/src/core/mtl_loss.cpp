#include "gmtl/mtl_loss.hpp"

#include <cmath>

#include "gmtl/error.hpp"

namespace gmtl {

const char* weighting_scheme_name(WeightingScheme scheme) {
  return scheme == WeightingScheme::kKendall ? "kendall" : "pseudo_uniform";
}

WeightingScheme parse_weighting_scheme(const std::string& name) {
  if (name == "pseudo_uniform") return WeightingScheme::kPseudoUniform;
  if (name == "kendall") return WeightingScheme::kKendall;
  fail(ErrorCode::kConfig, "unknown weighting scheme '" + name + "' (pseudo_uniform | kendall)");
}

UncertaintyParams::UncertaintyParams(std::span<const TaskSpec> roster) {
  for (const TaskSpec& spec : roster) {
    names_.push_back(spec.name);
    values_.push_back(Tensor::scalar(0.0, true));
  }
}

UncertaintyParams::UncertaintyParams(std::vector<std::string> names, std::vector<Tensor> log_variances)
    : names_(std::move(names)), values_(std::move(log_variances)) {
  require(names_.size() == values_.size(), ErrorCode::kInvalidArgument,
          "uncertainty params: name/value count mismatch");
  for (Tensor& t : values_) {
    require(t.numel() == 1 && std::isfinite(t.item()), ErrorCode::kNumeric,
            "uncertainty params must be finite scalars");
    t.set_requires_grad(true);
  }
}

const Tensor& UncertaintyParams::at(const std::string& task) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == task) return values_[i];
  }
  fail(ErrorCode::kUnknownTask, "no uncertainty parameter for task '" + task + "'");
}

UncertaintyParams UncertaintyParams::clone() const {
  std::vector<Tensor> copies;
  for (const Tensor& t : values_) copies.push_back(t.clone());
  return UncertaintyParams(names_, std::move(copies));
}

Tensor pseudo_uniform_total(const LossVector& losses, const std::map<std::string, double>& variances) {
  require(!losses.empty(), ErrorCode::kInvalidArgument, "pseudo_uniform_total: empty loss vector");
  std::vector<Tensor> terms;
  std::vector<double> weights;
  for (const LossEntry& entry : losses) {
    double weight = 1.0;
    if (entry.kind == TaskKind::kRegression) {
      const auto it = variances.find(entry.name);
      require(it != variances.end(), ErrorCode::kInvalidArgument,
              "pseudo_uniform_total: no sample variance for regression task '" + entry.name + "'");
      require(std::isfinite(it->second) && it->second > 0.0, ErrorCode::kNumeric,
              "pseudo_uniform_total: variance of '" + entry.name + "' must be positive");
      weight = 1.0 / it->second;
    }
    terms.push_back(entry.loss);
    weights.push_back(weight);
  }
  return ops::weighted_sum(terms, weights);
}

Tensor kendall_total(const LossVector& losses, const UncertaintyParams& params) {
  require(!losses.empty(), ErrorCode::kInvalidArgument, "kendall_total: empty loss vector");
  require(losses.size() == params.size(), ErrorCode::kInvalidArgument,
          "kendall_total: " + std::to_string(losses.size()) + " losses but " +
              std::to_string(params.size()) + " uncertainty parameters");
  std::vector<Tensor> terms;
  std::vector<double> weights;
  std::vector<Tensor> penalties;
  for (const LossEntry& entry : losses) {
    const Tensor& s = params.at(entry.name);
    terms.push_back(ops::mul(ops::exp(ops::scale(s, -1.0)), entry.loss));
    weights.push_back(entry.kind == TaskKind::kRegression ? 0.5 : 1.0);
    penalties.push_back(s);
  }
  // log sigma_k = 0.5 s_k
  for (Tensor& s : penalties) {
    terms.push_back(s);
    weights.push_back(0.5);
  }
  return ops::weighted_sum(terms, weights);
}

}  // namespace gmtl
