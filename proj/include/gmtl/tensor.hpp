#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gmtl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorImpl;

// Backward rule of one recorded op: reads out.grad and accumulates into the
// grads of the inputs that require them.
using BackwardFn = std::function<void(
    const TensorImpl& out, const std::vector<std::shared_ptr<TensorImpl>>& inputs)>;

struct GraphNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when no gradient is held
  bool requires_grad = false;
  bool frozen = false;
  std::shared_ptr<GraphNode> node;  // null for leaves

  bool has_grad() const { return !grad.empty(); }
  // Allocates a zero gradient on first use.
  std::vector<double>& grad_buffer();
};

// Dense row-major float64 array with reverse-mode autodiff. Copies share
// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(std::shared_ptr<TensorImpl> impl);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t i) const { return impl_->data.at(i); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }
  bool frozen() const { return impl_->frozen; }
  void set_frozen(bool value) { impl_->frozen = value; }

  bool has_grad() const { return impl_->has_grad(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad_buffer(); }
  void clear_grad() { impl_->grad.clear(); }

  bool is_leaf() const { return impl_->node == nullptr; }
  // Detached deep copy: same values and flags, no graph, no grad.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Runs reverse-mode differentiation from a scalar. Leaf gradients accumulate
// across calls; interior gradients are recomputed on every call, so calling
// backward twice on the same loss doubles the leaf gradients.
void backward(const Tensor& loss);

namespace ops {

// Shapes: [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// [n,m] + [m] broadcast over rows
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
// Row-wise softmax of a [n,k] matrix, max-subtracted.
Tensor softmax(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
// Mean over axis 1 of [b,n,d] restricted to slots with mask 1; mask is [b,n]
// of 0/1 with at least one 1 per row. Result [b,d].
Tensor masked_mean(const Tensor& x, const Tensor& mask);
// sum_i weights[i] * terms[i]; all terms share one shape, weights are constants.
Tensor weighted_sum(std::span<const Tensor> terms, std::span<const double> weights);

// Loss primitives (batch-mean reductions, scalar output).
// Probability inputs are clamped to [kProbClamp, 1 - kProbClamp] inside logs.
inline constexpr double kProbClamp = 1e-12;
// probs [b,1], labels in {0,1}
Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> labels);
// logits [b,1], labels in {0,1}; fused sigmoid + cross-entropy
Tensor binary_cross_entropy_with_logits(const Tensor& logits, std::span<const double> labels);
// probs [b,k], labels are class indices
Tensor categorical_cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);
// logits [b,k]; fused log-softmax + cross-entropy
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
// pred [b,1] or [b]
Tensor mse(const Tensor& pred, std::span<const double> targets);

}  // namespace ops

}  // namespace gmtl
