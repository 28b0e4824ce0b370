#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmtl/training.hpp"

namespace gmtl {

struct TaskComparison {
  std::string name;
  TaskKind kind = TaskKind::kBinary;
  std::optional<double> class_balance;  // binary tasks only
  double err_mtl = 0.0;
  double err_optimal = 0.0;
  // 100 * (err_mtl - err_optimal) / err_optimal; empty when err_optimal == 0
  std::optional<double> relative_increase_pct;
};

double relative_increase_pct(double err_mtl, double err_optimal);

// One row per task of `mtl`, in its order. Both metric sets must cover the
// same tasks on the same number of test rows.
std::vector<TaskComparison> compare_tasks(const Metrics& mtl, const Metrics& optimal);

// Sample Pearson correlation. Errors on length mismatch, n < 2 or a constant column.
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, add-one smoothed permutation p-value
  std::size_t n = 0;
  std::size_t permutations = 0;
};

// p = (1 + #{|r_perm| >= |r_obs|}) / (1 + permutations), y shuffled with a seeded stream.
CorrelationResult permutation_test(std::span<const double> x, std::span<const double> y,
                                   std::size_t permutations, std::uint64_t seed);

// Class balance vs relative increase over rows that carry both. Needs >= 3 such rows.
CorrelationResult balance_correlation(const std::vector<TaskComparison>& rows,
                                      std::size_t permutations, std::uint64_t seed);

struct Projection {
  std::vector<std::string> ids;
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> component_variance{};  // top-2 covariance eigenvalues
  double total_variance = 0.0;                 // trace of the covariance
  bool rank_deficient = false;                 // second coordinate zeroed

  double explained_fraction() const {
    return total_variance > 0.0 ? (component_variance[0] + component_variance[1]) / total_variance : 0.0;
  }
};

// Top-2 principal components of the mean-centered rows ([n, dim], row-major).
// Each component's largest-magnitude loading is made positive.
Projection project_2d(std::vector<std::string> ids, std::span<const double> embeddings, std::size_t dim);

}  // namespace gmtl
