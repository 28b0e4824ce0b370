#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gmtl/tasks.hpp"
#include "gmtl/tensor.hpp"

namespace gmtl {

enum class WeightingScheme { kPseudoUniform, kKendall };

const char* weighting_scheme_name(WeightingScheme scheme);
WeightingScheme parse_weighting_scheme(const std::string& name);

struct LossEntry {
  std::string name;
  TaskKind kind;
  Tensor loss;  // scalar
};

// One entry per configured task, in roster order.
using LossVector = std::vector<LossEntry>;

// Learnable per-task log-variances s_k = log sigma_k^2, initialized to 0.
class UncertaintyParams {
 public:
  UncertaintyParams() = default;
  explicit UncertaintyParams(std::span<const TaskSpec> roster);
  UncertaintyParams(std::vector<std::string> names, std::vector<Tensor> log_variances);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor>& log_variances() const { return values_; }
  // Throws kUnknownTask when the task has no parameter.
  const Tensor& at(const std::string& task) const;
  double value(const std::string& task) const { return at(task).item(); }
  UncertaintyParams clone() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// L_tot = sum_{cls} L_i + sum_{reg} L_j / sigma_j^2, with sigma_j^2 taken from
// `variances` (constants, no gradient).
Tensor pseudo_uniform_total(const LossVector& losses, const std::map<std::string, double>& variances);

// L_tot = sum_{cls} e^{-s_i} L_i + sum_{reg} 0.5 e^{-s_j} L_j + sum_k 0.5 s_k.
// The last term is sum_k log sigma_k written in log-variance space.
Tensor kendall_total(const LossVector& losses, const UncertaintyParams& params);

}  // namespace gmtl
