#include "gmtl/adam.hpp"

#include <cmath>

#include "gmtl/error.hpp"

namespace gmtl {

AdamState::AdamState(std::span<const Tensor> params, AdamConfig config) : config_(config) {
  require(config.lr >= 0.0 && std::isfinite(config.lr), ErrorCode::kInvalidArgument,
          "adam: learning rate must be finite and non-negative");
  require(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0,
          ErrorCode::kInvalidArgument, "adam: betas must lie in [0, 1)");
  require(config.epsilon > 0.0, ErrorCode::kInvalidArgument, "adam: epsilon must be positive");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  require(params.size() == state.m_.size(), ErrorCode::kInvalidArgument,
          "adam_step: parameter list does not match optimizer state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].numel() == state.m_[i].size(), ErrorCode::kShape,
            "adam_step: parameter " + std::to_string(i) + " changed size");
    if (!params[i].frozen() && !params[i].has_grad()) {
      fail(ErrorCode::kInvalidArgument,
           "adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }

  state.t_ += 1;
  const AdamConfig& c = state.config_;
  const double t = static_cast<double>(state.t_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (p.frozen()) {
      p.clear_grad();
      continue;
    }
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = state.m_[i];
    auto& v = state.v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      w[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    p.clear_grad();
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (p.frozen() || !p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& p : params) {
      if (p.frozen() || !p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace gmtl
