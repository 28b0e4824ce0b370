#include "gmtl/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"

namespace gmtl {

double relative_increase_pct(double err_mtl, double err_optimal) {
  require(err_optimal > 0.0, ErrorCode::kInvalidArgument, "relative increase undefined for zero optimal error");
  return 100.0 * (err_mtl - err_optimal) / err_optimal;
}

std::vector<TaskComparison> compare_tasks(const Metrics& mtl, const Metrics& optimal) {
  std::vector<TaskComparison> rows;
  require(mtl.tasks.size() == optimal.tasks.size(), ErrorCode::kUnknownTask,
          "compare: metric sets cover different task rosters");
  for (const TaskMetrics& m : mtl.tasks) {
    const TaskMetrics& o = optimal.task(m.name);
    require(o.kind == m.kind, ErrorCode::kUnknownTask, "compare: task '" + m.name + "' differs in kind");
    require(o.count == m.count, ErrorCode::kInvalidArgument,
            "compare: task '" + m.name + "' was evaluated on different test sets (" +
                std::to_string(m.count) + " vs " + std::to_string(o.count) + " rows)");
    TaskComparison row;
    row.name = m.name;
    row.kind = m.kind;
    row.class_balance = m.class_balance;
    row.err_mtl = m.error();
    row.err_optimal = o.error();
    if (row.err_optimal > 0.0) row.relative_increase_pct = relative_increase_pct(row.err_mtl, row.err_optimal);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

// Centers a column and returns it with its sum of squares.
std::pair<std::vector<double>, double> centered(std::span<const double> v, const char* which) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::vector<double> c(v.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    c[i] = v[i] - mean;
    ss += c[i] * c[i];
  }
  require(ss > 0.0, ErrorCode::kInvalidArgument, std::string("pearson: ") + which + " column has zero variance");
  return {std::move(c), ss};
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kShape, "pearson: columns differ in length");
  require(x.size() >= 2, ErrorCode::kInvalidArgument, "pearson: need at least two points");
  const auto [cx, sx] = centered(x, "x");
  const auto [cy, sy] = centered(y, "y");
  return std::clamp(dot(cx, cy) / (std::sqrt(sx) * std::sqrt(sy)), -1.0, 1.0);
}

CorrelationResult permutation_test(std::span<const double> x, std::span<const double> y,
                                   std::size_t permutations, std::uint64_t seed) {
  require(permutations >= 1, ErrorCode::kInvalidArgument, "permutation test: need at least one permutation");
  CorrelationResult out;
  out.r = pearson(x, y);
  out.n = x.size();
  out.permutations = permutations;
  // Centering and norms are permutation invariant, so each shuffle costs one dot product.
  const auto [cx, sx] = centered(x, "x");
  auto [cy, sy] = centered(y, "y");
  const double norm = std::sqrt(sx) * std::sqrt(sy);
  // Permutations that reproduce the observed statistic up to rounding count as extreme.
  const double threshold = std::abs(out.r) - 1e-12;
  Rng rng(seed);
  std::size_t extreme = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    rng.shuffle(cy);
    if (std::abs(dot(cx, cy) / norm) >= threshold) ++extreme;
  }
  out.p_value = static_cast<double>(extreme + 1) / static_cast<double>(permutations + 1);
  return out;
}

CorrelationResult balance_correlation(const std::vector<TaskComparison>& rows,
                                      std::size_t permutations, std::uint64_t seed) {
  std::vector<double> balance, increase;
  for (const TaskComparison& r : rows) {
    if (!r.class_balance || !r.relative_increase_pct) continue;
    balance.push_back(*r.class_balance);
    increase.push_back(*r.relative_increase_pct);
  }
  require(balance.size() >= 3, ErrorCode::kInvalidArgument,
          "balance correlation: need at least 3 classification tasks with a defined relative increase, have " +
              std::to_string(balance.size()));
  return permutation_test(balance, increase, permutations, seed);
}

Projection project_2d(std::vector<std::string> ids, std::span<const double> embeddings, std::size_t dim) {
  require(dim >= 1 && embeddings.size() == ids.size() * dim, ErrorCode::kShape,
          "project: expected " + std::to_string(ids.size()) + " rows of width " + std::to_string(dim));
  const std::size_t n = ids.size();
  require(n >= 2, ErrorCode::kInvalidArgument, "project: need at least two embeddings");
  Eigen::MatrixXd x(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) x(i, d) = embeddings[i * dim + d];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::kNumeric, "project: eigen-decomposition failed");

  Projection out;
  out.ids = std::move(ids);
  out.total_variance = cov.trace();
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const double scale = std::max(std::abs(values(dim - 1)), 1e-300);
  Eigen::MatrixXd basis(dim, 2);
  basis.setZero();
  const std::size_t components = std::min<std::size_t>(2, dim);
  for (std::size_t c = 0; c < components; ++c) {
    const Eigen::Index col = static_cast<Eigen::Index>(dim - 1 - c);
    out.component_variance[c] = std::max(values(col), 0.0);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.col(static_cast<Eigen::Index>(c)) = v;
  }
  if (dim < 2 || values(dim - 2) <= 1e-12 * scale) {
    out.rank_deficient = true;
    out.component_variance[1] = 0.0;
    basis.col(1).setZero();
  }
  const Eigen::MatrixXd coords = x * basis;
  out.coords.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.coords[i] = {coords(i, 0), coords(i, 1)};
  return out;
}

}  // namespace gmtl
