#include "gmtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "gmtl/error.hpp"

namespace gmtl {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  fail(ErrorCode::kShape,
       std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void check_finite(const char* op, std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << op << ": non-finite " << what << " at flat index " << i;
      fail(ErrorCode::kNumeric, msg.str());
    }
  }
}

void check_inputs(const char* op, std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) check_finite(op, t->data(), "input");
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

Tensor make_output(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  check_finite(op, values, "output");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (any_requires_grad(inputs)) {
    impl->requires_grad = true;
    auto node = std::make_shared<GraphNode>();
    node->op = op;
    for (const Tensor* t : inputs) node->inputs.push_back(t->impl());
    node->backward = std::move(fn);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    fail(ErrorCode::kShape, std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) { return std::clamp(p, ops::kProbClamp, 1.0 - ops::kProbClamp); }

bool inside_clamp(double p) { return p > ops::kProbClamp && p < 1.0 - ops::kProbClamp; }

void check_binary_labels(const char* op, std::span<const double> labels, std::size_t rows) {
  if (labels.size() != rows) shape_error(op, Shape{rows}, Shape{labels.size()});
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] != 0.0 && labels[r] != 1.0) {
      std::ostringstream msg;
      msg << op << ": label " << labels[r] << " at row " << r << " is not 0 or 1";
      fail(ErrorCode::kInvalidArgument, msg.str());
    }
  }
}

void check_class_labels(const char* op, std::span<const std::size_t> labels, std::size_t rows,
                        std::size_t classes) {
  if (labels.size() != rows) shape_error(op, Shape{rows}, Shape{labels.size()});
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= classes) {
      std::ostringstream msg;
      msg << op << ": class label " << labels[r] << " at row " << r << " outside [0, " << classes
          << ")";
      fail(ErrorCode::kInvalidArgument, msg.str());
    }
  }
}

template <typename F, typename D>
Tensor unary(const char* op, const Tensor& x, F forward, D derivative) {
  check_inputs(op, {&x});
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_output(op, x.shape(), std::move(out), {&x},
                     [derivative](const TensorImpl& o, const auto& inputs) {
                       TensorImpl& a = *inputs[0];
                       if (!a.requires_grad) return;
                       auto& g = a.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += o.grad[i] * derivative(a.data[i], o.data[i]);
                       }
                     });
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {}

Tensor::Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t extent : shape) {
    require(extent > 0, ErrorCode::kShape, "tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    fail(ErrorCode::kShape, "tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{1}, {value}, requires_grad);
}

double Tensor::item() const {
  require(numel() == 1, ErrorCode::kShape, "item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  impl->frozen = impl_->frozen;
  return Tensor(std::move(impl));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  require(loss.numel() == 1, ErrorCode::kShape,
          "backward: loss must be a scalar, got " + shape_str(loss.shape()));
  TensorImpl* root = loss.impl().get();
  if (!root->node) {
    if (root->requires_grad) root->grad_buffer()[0] += 1.0;
    return;
  }

  // Iterative post-order DFS; `order` ends up inputs-before-outputs.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (impl->node && next < impl->node->inputs.size()) {
      TensorImpl* child = impl->node->inputs[next++].get();
      if (child->node && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  for (TensorImpl* impl : order) impl->grad.assign(impl->data.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    impl->node->backward(*impl, impl->node->inputs);
  }
}

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  check_inputs("matmul", {&a, &b});
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += av * brow[j];
    }
  }
  return make_output("matmul", {n, m}, std::move(out), {&a, &b},
                     [n, k, m](const TensorImpl& o, const auto& inputs) {
                       TensorImpl& ta = *inputs[0];
                       TensorImpl& tb = *inputs[1];
                       const double* G = o.grad.data();
                       if (ta.requires_grad) {
                         auto& ga = ta.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double* brow = tb.data.data() + p * m;
                             const double* grow = G + i * m;
                             double acc = 0.0;
                             for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                             ga[i * k + p] += acc;
                           }
                         }
                       }
                       if (tb.requires_grad) {
                         auto& gb = tb.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double av = ta.data[i * k + p];
                             if (av == 0.0) continue;
                             double* gbrow = gb.data() + p * m;
                             const double* grow = G + i * m;
                             for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
                           }
                         }
                       }
                     });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix("add_bias", x);
  if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) shape_error("add_bias", x.shape(), bias.shape());
  check_inputs("add_bias", {&x, &bias});
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias.data()[j];
  return make_output("add_bias", x.shape(), std::move(out), {&x, &bias},
                     [n, m](const TensorImpl& o, const auto& inputs) {
                       if (inputs[0]->requires_grad) {
                         auto& gx = inputs[0]->grad_buffer();
                         for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
                       }
                       if (inputs[1]->requires_grad) {
                         auto& gb = inputs[1]->grad_buffer();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < m; ++j) gb[j] += o.grad[i * m + j];
                       }
                     });
}

namespace {

Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, double sign_b, bool product) {
  require_same_shape(op, a, b);
  check_inputs(op, {&a, &b});
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = product ? a.data()[i] * b.data()[i] : a.data()[i] + sign_b * b.data()[i];
  }
  return make_output(op, a.shape(), std::move(out), {&a, &b},
                     [sign_b, product](const TensorImpl& o, const auto& inputs) {
                       TensorImpl& ta = *inputs[0];
                       TensorImpl& tb = *inputs[1];
                       if (ta.requires_grad) {
                         auto& g = ta.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += product ? o.grad[i] * tb.data[i] : o.grad[i];
                       }
                       if (tb.requires_grad) {
                         auto& g = tb.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += product ? o.grad[i] * ta.data[i] : sign_b * o.grad[i];
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise("add", a, b, 1.0, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise("sub", a, b, -1.0, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise("mul", a, b, 0.0, true); }

Tensor scale(const Tensor& x, double factor) {
  require(std::isfinite(factor), ErrorCode::kNumeric, "scale: non-finite factor");
  return unary("scale", x, [factor](double v) { return factor * v; },
               [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid,
               [](double, double out) { return out * (1.0 - out); });
}

Tensor log(const Tensor& x) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!(x.data()[i] > 0.0)) {
      fail(ErrorCode::kNumeric, "log: non-positive input at flat index " + std::to_string(i));
    }
  }
  return unary("log", x, [](double v) { return std::log(v); },
               [](double in, double) { return 1.0 / in; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); },
               [](double, double out) { return out; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; },
               [](double in, double) { return 2.0 * in; });
}

Tensor softmax(const Tensor& x) {
  require_matrix("softmax", x);
  check_inputs("softmax", {&x});
  const std::size_t n = x.dim(0), k = x.dim(1);
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += (out[i * k + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= total;
  }
  return make_output("softmax", x.shape(), std::move(out), {&x},
                     [n, k](const TensorImpl& o, const auto& inputs) {
                       if (!inputs[0]->requires_grad) return;
                       auto& g = inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < n; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < k; ++j) dot += o.grad[i * k + j] * o.data[i * k + j];
                         for (std::size_t j = 0; j < k; ++j)
                           g[i * k + j] += o.data[i * k + j] * (o.grad[i * k + j] - dot);
                       }
                     });
}

Tensor sum(const Tensor& x) {
  check_inputs("sum", {&x});
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_output("sum", {1}, {total}, {&x}, [](const TensorImpl& o, const auto& inputs) {
    if (!inputs[0]->requires_grad) return;
    for (double& g : inputs[0]->grad_buffer()) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  check_inputs("mean", {&x});
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.numel());
  return make_output("mean", {1}, {total / n}, {&x}, [n](const TensorImpl& o, const auto& inputs) {
    if (!inputs[0]->requires_grad) return;
    for (double& g : inputs[0]->grad_buffer()) g += o.grad[0] / n;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_output("reshape", std::move(shape), std::move(out), {&x},
                     [](const TensorImpl& o, const auto& inputs) {
                       if (!inputs[0]->requires_grad) return;
                       auto& g = inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                     });
}

Tensor masked_mean(const Tensor& x, const Tensor& mask) {
  if (x.rank() != 3) fail(ErrorCode::kShape, "masked_mean: expected [b,n,d], got " + shape_str(x.shape()));
  if (mask.rank() != 2 || mask.dim(0) != x.dim(0) || mask.dim(1) != x.dim(1)) {
    shape_error("masked_mean", x.shape(), mask.shape());
  }
  check_inputs("masked_mean", {&x});
  const std::size_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
  std::vector<double> counts(b, 0.0);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t s = 0; s < n; ++s) {
      const double m = mask.data()[r * n + s];
      if (m != 0.0 && m != 1.0) {
        fail(ErrorCode::kInvalidArgument, "masked_mean: mask entries must be 0 or 1");
      }
      counts[r] += m;
    }
    if (counts[r] == 0.0) {
      fail(ErrorCode::kInvalidArgument,
           "masked_mean: row " + std::to_string(r) + " has no unmasked items");
    }
  }
  std::vector<double> out(b * d, 0.0);
  const double* X = x.data().data();
  const double* M = mask.data().data();
  for (std::size_t r = 0; r < b; ++r) {
    double* orow = out.data() + r * d;
    for (std::size_t s = 0; s < n; ++s) {
      if (M[r * n + s] == 0.0) continue;
      const double* xrow = X + (r * n + s) * d;
      for (std::size_t j = 0; j < d; ++j) orow[j] += xrow[j];
    }
    for (std::size_t j = 0; j < d; ++j) orow[j] /= counts[r];
  }
  // The mask is data, not a differentiable input; capture it by value.
  std::vector<double> mask_copy(mask.data().begin(), mask.data().end());
  return make_output("masked_mean", {b, d}, std::move(out), {&x},
                     [b, n, d, counts = std::move(counts), mask_copy = std::move(mask_copy)](
                         const TensorImpl& o, const auto& inputs) {
                       if (!inputs[0]->requires_grad) return;
                       auto& g = inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < b; ++r) {
                         for (std::size_t s = 0; s < n; ++s) {
                           if (mask_copy[r * n + s] == 0.0) continue;
                           for (std::size_t j = 0; j < d; ++j)
                             g[(r * n + s) * d + j] += o.grad[r * d + j] / counts[r];
                         }
                       }
                     });
}

Tensor weighted_sum(std::span<const Tensor> terms, std::span<const double> weights) {
  require(!terms.empty(), ErrorCode::kInvalidArgument, "weighted_sum: no terms");
  if (terms.size() != weights.size()) {
    shape_error("weighted_sum", Shape{terms.size()}, Shape{weights.size()});
  }
  const Shape& shape = terms[0].shape();
  std::vector<double> out(terms[0].numel(), 0.0);
  bool record = false;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    if (terms[t].shape() != shape) shape_error("weighted_sum", shape, terms[t].shape());
    check_finite("weighted_sum", terms[t].data(), "input");
    require(std::isfinite(weights[t]), ErrorCode::kNumeric, "weighted_sum: non-finite weight");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[t] * terms[t].data()[i];
    record = record || terms[t].requires_grad();
  }
  check_finite("weighted_sum", out, "output");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(out);
  if (record && g_grad_enabled) {
    impl->requires_grad = true;
    auto node = std::make_shared<GraphNode>();
    node->op = "weighted_sum";
    for (const Tensor& t : terms) node->inputs.push_back(t.impl());
    node->backward = [w = std::vector<double>(weights.begin(), weights.end())](
                         const TensorImpl& o, const auto& inputs) {
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        if (!inputs[t]->requires_grad) continue;
        auto& g = inputs[t]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[t] * o.grad[i];
      }
    };
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> labels) {
  const std::size_t rows = probs.numel();
  if (probs.rank() == 2 && probs.dim(1) != 1) {
    fail(ErrorCode::kShape, "binary_cross_entropy: expected [b,1], got " + shape_str(probs.shape()));
  }
  check_inputs("binary_cross_entropy", {&probs});
  check_binary_labels("binary_cross_entropy", labels, rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double p = clamp_prob(probs.data()[r]);
    total -= labels[r] * std::log(p) + (1.0 - labels[r]) * std::log(1.0 - p);
  }
  const double n = static_cast<double>(rows);
  std::vector<double> y(labels.begin(), labels.end());
  return make_output("binary_cross_entropy", {1}, {total / n}, {&probs},
                     [n, y = std::move(y)](const TensorImpl& o, const auto& inputs) {
                       TensorImpl& tp = *inputs[0];
                       if (!tp.requires_grad) return;
                       auto& g = tp.grad_buffer();
                       for (std::size_t r = 0; r < g.size(); ++r) {
                         const double p = tp.data[r];
                         if (!inside_clamp(p)) continue;
                         g[r] += o.grad[0] * -(y[r] / p - (1.0 - y[r]) / (1.0 - p)) / n;
                       }
                     });
}

Tensor binary_cross_entropy_with_logits(const Tensor& logits, std::span<const double> labels) {
  const std::size_t rows = logits.numel();
  if (logits.rank() == 2 && logits.dim(1) != 1) {
    fail(ErrorCode::kShape,
         "binary_cross_entropy_with_logits: expected [b,1], got " + shape_str(logits.shape()));
  }
  check_inputs("binary_cross_entropy_with_logits", {&logits});
  check_binary_labels("binary_cross_entropy_with_logits", labels, rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double z = logits.data()[r];
    total += std::max(z, 0.0) - z * labels[r] + std::log1p(std::exp(-std::abs(z)));
  }
  const double n = static_cast<double>(rows);
  std::vector<double> y(labels.begin(), labels.end());
  return make_output("binary_cross_entropy_with_logits", {1}, {total / n}, {&logits},
                     [n, y = std::move(y)](const TensorImpl& o, const auto& inputs) {
                       TensorImpl& tz = *inputs[0];
                       if (!tz.requires_grad) return;
                       auto& g = tz.grad_buffer();
                       for (std::size_t r = 0; r < g.size(); ++r)
                         g[r] += o.grad[0] * (stable_sigmoid(tz.data[r]) - y[r]) / n;
                     });
}

Tensor categorical_cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
  require_matrix("categorical_cross_entropy", probs);
  check_inputs("categorical_cross_entropy", {&probs});
  const std::size_t rows = probs.dim(0), k = probs.dim(1);
  check_class_labels("categorical_cross_entropy", labels, rows, k);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) total -= std::log(clamp_prob(probs.data()[r * k + labels[r]]));
  const double n = static_cast<double>(rows);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return make_output("categorical_cross_entropy", {1}, {total / n}, {&probs},
                     [n, k, y = std::move(y)](const TensorImpl& o, const auto& inputs) {
                       TensorImpl& tp = *inputs[0];
                       if (!tp.requires_grad) return;
                       auto& g = tp.grad_buffer();
                       for (std::size_t r = 0; r < y.size(); ++r) {
                         const double p = tp.data[r * k + y[r]];
                         if (!inside_clamp(p)) continue;
                         g[r * k + y[r]] += o.grad[0] * -1.0 / (p * n);
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_matrix("softmax_cross_entropy", logits);
  check_inputs("softmax_cross_entropy", {&logits});
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  check_class_labels("softmax_cross_entropy", labels, rows, k);
  std::vector<double> probs(rows * k);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = logits.data().data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[labels[r]];
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - log_z);
  }
  const double n = static_cast<double>(rows);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return make_output("softmax_cross_entropy", {1}, {total / n}, {&logits},
                     [n, k, y = std::move(y), probs = std::move(probs)](const TensorImpl& o,
                                                                         const auto& inputs) {
                       TensorImpl& tz = *inputs[0];
                       if (!tz.requires_grad) return;
                       auto& g = tz.grad_buffer();
                       const double s = o.grad[0] / n;
                       for (std::size_t r = 0; r < y.size(); ++r) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = (j == y[r]) ? 1.0 : 0.0;
                           g[r * k + j] += s * (probs[r * k + j] - onehot);
                         }
                       }
                     });
}

Tensor mse(const Tensor& pred, std::span<const double> targets) {
  const std::size_t rows = pred.numel();
  if (targets.size() != rows) shape_error("mse", pred.shape(), Shape{targets.size()});
  check_inputs("mse", {&pred});
  check_finite("mse", targets, "target");
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double diff = pred.data()[r] - targets[r];
    total += diff * diff;
  }
  const double n = static_cast<double>(rows);
  std::vector<double> y(targets.begin(), targets.end());
  return make_output("mse", {1}, {total / n}, {&pred},
                     [n, y = std::move(y)](const TensorImpl& o, const auto& inputs) {
                       TensorImpl& tp = *inputs[0];
                       if (!tp.requires_grad) return;
                       auto& g = tp.grad_buffer();
                       for (std::size_t r = 0; r < g.size(); ++r)
                         g[r] += o.grad[0] * 2.0 * (tp.data[r] - y[r]) / n;
                     });
}

}  // namespace ops

}  // namespace gmtl
