#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmtl/encoder.hpp"
#include "gmtl/tensor.hpp"

namespace gmtl {

enum class TaskKind { kBinary, kCategorical, kRegression };

const char* task_kind_name(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

inline bool is_classification(TaskKind kind) { return kind != TaskKind::kRegression; }

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::kBinary;
  std::size_t num_classes = 0;  // categorical only
  std::size_t hidden_dim = 256;
  // Regression only: training-split label variance used by pseudo-uniform weighting.
  std::optional<double> sample_variance;

  void validate() const;
  // 1 for binary and regression, K for categorical.
  std::size_t output_dim() const;
};

// Shallow per-task learner: ReLU dense layer then an output layer whose
// activation follows the task kind (sigmoid, softmax or identity).
class TaskHead {
 public:
  TaskHead(TaskSpec spec, std::size_t embed_dim, Rng& rng);
  TaskHead(TaskSpec spec, DenseLayer hidden, DenseLayer output);

  const TaskSpec& spec() const { return spec_; }
  TaskSpec& spec() { return spec_; }
  std::size_t embed_dim() const { return hidden_.in_dim(); }

  // Pre-activation output layer values, [B, output_dim].
  Tensor logits(const Tensor& embedding) const;
  // Activated predictions: probabilities for classification, values for regression.
  Tensor forward(const Tensor& embedding) const;

  const DenseLayer& hidden() const { return hidden_; }
  const DenseLayer& output() const { return output_; }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const { return hidden_.parameter_count() + output_.parameter_count(); }
  TaskHead clone() const;

 private:
  TaskSpec spec_;
  DenseLayer hidden_;
  DenseLayer output_;
};

inline Tensor head_forward(const Tensor& embedding, const TaskHead& head) {
  return head.forward(embedding);
}

// Throws Error(kInvalidArgument) naming the task and the first bad row.
void validate_labels(std::span<const double> labels, const TaskSpec& spec);

// Batch-mean loss from activated predictions: binary cross-entropy, categorical
// cross-entropy (labels are class indices) or MSE.
Tensor task_loss(const Tensor& predictions, std::span<const double> labels, const TaskSpec& spec);

// Same quantity computed from logits with fused, numerically stable kernels.
// This is the training path.
Tensor task_loss_from_logits(const Tensor& logits, std::span<const double> labels,
                             const TaskSpec& spec);

// Unbiased (n - 1) sample variance. Requires at least two labels, not all equal.
double compute_sample_variance(std::span<const double> labels);

}  // namespace gmtl
