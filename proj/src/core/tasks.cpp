#include "gmtl/tasks.hpp"

#include <cmath>
#include <sstream>

#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"

namespace gmtl {

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kBinary: return "binary";
    case TaskKind::kCategorical: return "categorical";
    case TaskKind::kRegression: return "regression";
  }
  return "binary";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "binary") return TaskKind::kBinary;
  if (name == "categorical") return TaskKind::kCategorical;
  if (name == "regression") return TaskKind::kRegression;
  fail(ErrorCode::kConfig, "unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
  require(!name.empty(), ErrorCode::kConfig, "task name must not be empty");
  require(hidden_dim > 0, ErrorCode::kConfig, "task '" + name + "': hidden_dim must be positive");
  if (kind == TaskKind::kCategorical) {
    require(num_classes >= 2, ErrorCode::kConfig,
            "task '" + name + "': categorical tasks need at least 2 classes");
  }
  if (sample_variance) {
    require(kind == TaskKind::kRegression, ErrorCode::kConfig,
            "task '" + name + "': sample_variance applies to regression tasks only");
    require(std::isfinite(*sample_variance) && *sample_variance > 0.0, ErrorCode::kConfig,
            "task '" + name + "': sample_variance must be positive");
  }
}

std::size_t TaskSpec::output_dim() const {
  return kind == TaskKind::kCategorical ? num_classes : 1;
}

TaskHead::TaskHead(TaskSpec spec, std::size_t embed_dim, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  hidden_ = make_dense(embed_dim, spec_.hidden_dim, rng);
  output_ = make_dense(spec_.hidden_dim, spec_.output_dim(), rng);
}

TaskHead::TaskHead(TaskSpec spec, DenseLayer hidden, DenseLayer output)
    : spec_(std::move(spec)), hidden_(std::move(hidden)), output_(std::move(output)) {
  spec_.validate();
  require(hidden_.weight.rank() == 2 && hidden_.out_dim() == spec_.hidden_dim &&
              output_.weight.rank() == 2 && output_.in_dim() == spec_.hidden_dim &&
              output_.out_dim() == spec_.output_dim(),
          ErrorCode::kShape, "task head '" + spec_.name + "' has inconsistent layer shapes");
  for (Tensor* t : {&hidden_.weight, &hidden_.bias, &output_.weight, &output_.bias}) {
    t->set_requires_grad(true);
  }
}

Tensor TaskHead::logits(const Tensor& embedding) const {
  if (embedding.rank() != 2 || embedding.dim(1) != embed_dim()) {
    fail(ErrorCode::kShape, "head '" + spec_.name + "': embedding shape " +
                                shape_str(embedding.shape()) + " does not match input width " +
                                std::to_string(embed_dim()));
  }
  return output_.forward(ops::relu(hidden_.forward(embedding)));
}

Tensor TaskHead::forward(const Tensor& embedding) const {
  Tensor z = logits(embedding);
  switch (spec_.kind) {
    case TaskKind::kBinary: return ops::sigmoid(z);
    case TaskKind::kCategorical: return ops::softmax(z);
    case TaskKind::kRegression: return z;
  }
  return z;
}

std::vector<Tensor> TaskHead::parameters() const {
  return {hidden_.weight, hidden_.bias, output_.weight, output_.bias};
}

TaskHead TaskHead::clone() const {
  return TaskHead(spec_, DenseLayer{hidden_.weight.clone(), hidden_.bias.clone()},
                  DenseLayer{output_.weight.clone(), output_.bias.clone()});
}

void validate_labels(std::span<const double> labels, const TaskSpec& spec) {
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double y = labels[r];
    bool ok = std::isfinite(y);
    if (ok && spec.kind == TaskKind::kBinary) ok = (y == 0.0 || y == 1.0);
    if (ok && spec.kind == TaskKind::kCategorical) {
      ok = y >= 0.0 && y < static_cast<double>(spec.num_classes) && y == std::floor(y);
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "task '" << spec.name << "': invalid " << task_kind_name(spec.kind) << " label " << y
          << " at row " << r;
      fail(ErrorCode::kInvalidArgument, msg.str());
    }
  }
}

namespace {

std::vector<std::size_t> class_indices(std::span<const double> labels) {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t r = 0; r < labels.size(); ++r) out[r] = static_cast<std::size_t>(labels[r]);
  return out;
}

void check_rows(const Tensor& t, std::span<const double> labels, const TaskSpec& spec) {
  if (t.rank() != 2 || t.dim(0) != labels.size() || t.dim(1) != spec.output_dim()) {
    fail(ErrorCode::kShape, "task '" + spec.name + "': predictions " + shape_str(t.shape()) +
                                " do not match " + std::to_string(labels.size()) + " labels x " +
                                std::to_string(spec.output_dim()) + " outputs");
  }
}

}  // namespace

Tensor task_loss(const Tensor& predictions, std::span<const double> labels, const TaskSpec& spec) {
  check_rows(predictions, labels, spec);
  validate_labels(labels, spec);
  switch (spec.kind) {
    case TaskKind::kBinary: return ops::binary_cross_entropy(predictions, labels);
    case TaskKind::kCategorical: {
      const auto idx = class_indices(labels);
      return ops::categorical_cross_entropy(predictions, idx);
    }
    case TaskKind::kRegression: return ops::mse(predictions, labels);
  }
  fail(ErrorCode::kInternal, "unreachable task kind");
}

Tensor task_loss_from_logits(const Tensor& logits, std::span<const double> labels,
                             const TaskSpec& spec) {
  check_rows(logits, labels, spec);
  validate_labels(labels, spec);
  switch (spec.kind) {
    case TaskKind::kBinary: return ops::binary_cross_entropy_with_logits(logits, labels);
    case TaskKind::kCategorical: {
      const auto idx = class_indices(labels);
      return ops::softmax_cross_entropy(logits, idx);
    }
    case TaskKind::kRegression: return ops::mse(logits, labels);
  }
  fail(ErrorCode::kInternal, "unreachable task kind");
}

double compute_sample_variance(std::span<const double> labels) {
  require(labels.size() >= 2, ErrorCode::kNumeric, "sample variance needs at least two labels");
  // Welford's recurrence.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(std::isfinite(labels[i]), ErrorCode::kNumeric, "sample variance: non-finite label");
    const double delta = labels[i] - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (labels[i] - mean);
  }
  const double variance = m2 / static_cast<double>(labels.size() - 1);
  require(variance > 0.0, ErrorCode::kNumeric,
          "sample variance is zero (constant labels); inverse-variance weight undefined");
  return variance;
}

}  // namespace gmtl
