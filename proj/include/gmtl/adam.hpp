#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gmtl/tensor.hpp"

namespace gmtl {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers for a fixed, ordered parameter list. The list passed to
// adam_step must be the one the state was created for.
class AdamState {
 public:
  AdamState(std::span<const Tensor> params, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::int64_t step_count() const { return t_; }
  std::span<const double> first_moment(std::size_t param) const { return m_.at(param); }
  std::span<const double> second_moment(std::size_t param) const { return v_.at(param); }

 private:
  friend void adam_step(std::span<Tensor> params, AdamState& state);

  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

// One bias-corrected Adam update in place. Frozen parameters are skipped
// untouched; every other parameter must hold a gradient. Gradients of all
// parameters are released afterwards.
void adam_step(std::span<Tensor> params, AdamState& state);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace gmtl
