#include <gtest/gtest.h>

#include <cmath>

#include "gmtl/analysis.hpp"
#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"

namespace gmtl {
namespace {

TaskMetrics binary_metrics(const std::string& name, double accuracy, double balance, std::size_t count = 100) {
  TaskMetrics m;
  m.name = name;
  m.kind = TaskKind::kBinary;
  m.count = count;
  m.accuracy = accuracy;
  m.class_balance = balance;
  return m;
}

TaskMetrics regression_metrics(const std::string& name, double mse, std::size_t count = 100) {
  TaskMetrics m;
  m.name = name;
  m.kind = TaskKind::kRegression;
  m.count = count;
  m.mse = mse;
  return m;
}

TEST(Compare, FivePercentIncrease) { EXPECT_NEAR(relative_increase_pct(0.21, 0.20), 5.0, 1e-12); }

TEST(Compare, EqualErrorsGiveZero) { EXPECT_EQ(relative_increase_pct(0.3, 0.3), 0.0); }

TEST(Compare, RowsFollowMtlOrderWithUndefinedRowKept) {
  Metrics mtl, opt;
  mtl.tasks = {binary_metrics("a", 0.79, 0.3), regression_metrics("r", 2.0), binary_metrics("z", 0.9, 0.1)};
  opt.tasks = {binary_metrics("z", 1.0, 0.1), binary_metrics("a", 0.80, 0.3), regression_metrics("r", 2.5)};
  const auto rows = compare_tasks(mtl, opt);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].name, "a");
  EXPECT_NEAR(*rows[0].relative_increase_pct, 5.0, 1e-9);
  EXPECT_NEAR(*rows[0].class_balance, 0.3, 0.0);
  EXPECT_NEAR(*rows[1].relative_increase_pct, -20.0, 1e-12);
  EXPECT_FALSE(rows[1].class_balance.has_value());
  EXPECT_EQ(rows[2].name, "z");
  EXPECT_FALSE(rows[2].relative_increase_pct.has_value());
  EXPECT_NEAR(rows[2].err_mtl, 0.1, 1e-15);
}

TEST(Compare, SwappingInputsInvertsErrorRatios) {
  Metrics a, b;
  a.tasks = {binary_metrics("x", 0.7, 0.4), regression_metrics("y", 3.0)};
  b.tasks = {binary_metrics("x", 0.8, 0.4), regression_metrics("y", 1.5)};
  const auto ab = compare_tasks(a, b), ba = compare_tasks(b, a);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    const double forward = 1.0 + *ab[i].relative_increase_pct / 100.0;
    const double reverse = 1.0 + *ba[i].relative_increase_pct / 100.0;
    EXPECT_NEAR(forward * reverse, 1.0, 1e-12);
  }
}

TEST(Compare, MismatchedInputsAreErrors) {
  Metrics a, b;
  a.tasks = {binary_metrics("x", 0.7, 0.4)};
  b.tasks = {binary_metrics("y", 0.8, 0.4)};
  EXPECT_THROW(compare_tasks(a, b), Error);
  b.tasks = {binary_metrics("x", 0.8, 0.4, 50)};
  EXPECT_THROW(compare_tasks(a, b), Error);
  b.tasks = {regression_metrics("x", 1.0)};
  EXPECT_THROW(compare_tasks(a, b), Error);
}

TEST(Pearson, CollinearIsOne) {
  const double x[] = {1, 2, 3}, y[] = {2, 4, 6};
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-12);
  const double z[] = {-1, -2, -3};
  EXPECT_NEAR(pearson(x, z), -1.0, 1e-12);
}

TEST(Pearson, ExactHandCase) {
  const double x[] = {1, 2, 3, 4}, y[] = {2, 1, 4, 3};
  EXPECT_NEAR(pearson(x, y), 0.6, 1e-12);
}

double closed_form_r(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

std::pair<std::vector<double>, std::vector<double>> bivariate(Rng& rng, std::size_t n, double rho) {
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * rng.normal();
  }
  return {x, y};
}

TEST(Pearson, BivariateNormalNearRho) {
  Rng rng(80);
  const auto [x, y] = bivariate(rng, 200, 0.8);
  const double r = pearson(x, y);
  EXPECT_NEAR(r, 0.8, 0.1);
  EXPECT_NEAR(r, closed_form_r(x, y), 1e-12);
}

TEST(Pearson, AffineInvariance) {
  Rng rng(81);
  for (int rep = 0; rep < 20; ++rep) {
    auto [x, y] = bivariate(rng, 30, rng.uniform(-0.9, 0.9));
    const double r = pearson(x, y);
    const double a = rng.uniform(0.1, 50), b = rng.uniform(-100, 100);
    std::vector<double> xs(x), ys(y);
    for (double& v : xs) v = a * v + b;
    for (double& v : ys) v = 0.3 * v - 7;
    EXPECT_NEAR(pearson(xs, ys), r, 1e-12);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(Pearson, DegenerateInputsAreErrors) {
  const double x[] = {1, 1, 1}, y[] = {1, 2, 3};
  EXPECT_THROW(pearson(x, y), Error);
  EXPECT_THROW(pearson(y, x), Error);
  const double two[] = {1, 2};
  EXPECT_THROW(pearson(two, y), Error);
}

TEST(Permutation, PerfectCorrelationAtTwenty) {
  std::vector<double> x(20), y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    x[i] = static_cast<double>(i);
    y[i] = 3.0 * static_cast<double>(i) - 2.0;
  }
  const CorrelationResult c = permutation_test(x, y, 10000, 1);
  EXPECT_NEAR(c.r, 1.0, 1e-12);
  EXPECT_LT(c.p_value, 0.001);
  EXPECT_EQ(c.permutations, 10000u);
  EXPECT_EQ(c.n, 20u);
}

TEST(Permutation, NullRarelyRejects) {
  Rng rng(90);
  int kept = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    auto [x, y] = bivariate(rng, 50, 0.0);
    kept += permutation_test(x, y, 1000, 1000 + rep).p_value >= 0.05;
  }
  EXPECT_GE(kept, 90);
}

TEST(Permutation, DeterministicGivenSeed) {
  Rng rng(91);
  auto [x, y] = bivariate(rng, 15, 0.4);
  EXPECT_EQ(permutation_test(x, y, 2000, 5).p_value, permutation_test(x, y, 2000, 5).p_value);
  const double p = permutation_test(x, y, 2000, 5).p_value;
  EXPECT_GT(p, 0.0);
  EXPECT_LE(p, 1.0);
}

TEST(BalanceCorrelation, NeedsThreeRows) {
  std::vector<TaskComparison> rows(2);
  rows[0] = {"a", TaskKind::kBinary, 0.1, 0.2, 0.1, 100.0};
  rows[1] = {"b", TaskKind::kBinary, 0.4, 0.2, 0.2, 0.0};
  EXPECT_THROW(balance_correlation(rows, 100, 1), Error);
  rows.push_back({"c", TaskKind::kBinary, 0.3, 0.2, 0.0, std::nullopt});
  EXPECT_THROW(balance_correlation(rows, 100, 1), Error);
  rows.push_back({"d", TaskKind::kBinary, 0.2, 0.3, 0.2, 50.0});
  const CorrelationResult c = balance_correlation(rows, 100, 1);
  EXPECT_EQ(c.n, 3u);
  const double bal[] = {0.1, 0.4, 0.2}, inc[] = {100.0, 0.0, 50.0};
  EXPECT_NEAR(c.r, pearson(bal, inc), 1e-15);
}

// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

std::vector<std::string> ids_for(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
  return ids;
}

TEST(Projection, ExplainedVarianceMatchesJacobiOracle) {
  Rng rng(100);
  const std::size_t n = 60, dim = 7;
  std::vector<double> flat(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) flat[i * dim + d] = rng.normal(0.0, 1.0 + static_cast<double>(d));
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += flat[i * dim + d] / n;
  std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b)
        cov[a][b] += (flat[i * dim + a] - mean[a]) * (flat[i * dim + b] - mean[b]) / (n - 1);
  const auto ev = jacobi_eigenvalues(cov);
  double trace = 0.0;
  for (double e : ev) trace += e;

  const Projection p = project_2d(ids_for(n), flat, dim);
  EXPECT_NEAR(p.component_variance[0], ev[0], 1e-9);
  EXPECT_NEAR(p.component_variance[1], ev[1], 1e-9);
  EXPECT_NEAR(p.total_variance, trace, 1e-9);
  EXPECT_NEAR(p.explained_fraction(), (ev[0] + ev[1]) / trace, 1e-9);
  EXPECT_FALSE(p.rank_deficient);
  // Sample variance of each projected coordinate equals its eigenvalue.
  for (int c = 0; c < 2; ++c) {
    double s = 0.0, ss = 0.0;
    for (const auto& xy : p.coords) s += xy[c];
    for (const auto& xy : p.coords) ss += (xy[c] - s / n) * (xy[c] - s / n);
    EXPECT_NEAR(ss / (n - 1), ev[c], 1e-9);
  }
}

TEST(Projection, PlanarPointsKeepPairwiseDistances) {
  Rng rng(101);
  const std::size_t n = 40, dim = 10;
  // Orthonormal basis of a random plane via Gram-Schmidt.
  std::vector<double> u(dim), v(dim), origin(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    u[d] = rng.normal();
    v[d] = rng.normal();
    origin[d] = rng.normal(0, 5);
  }
  auto dotp = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) s += a[d] * b[d];
    return s;
  };
  const double nu = std::sqrt(dotp(u, u));
  for (double& x : u) x /= nu;
  const double uv = dotp(u, v);
  for (std::size_t d = 0; d < dim; ++d) v[d] -= uv * u[d];
  const double nv = std::sqrt(dotp(v, v));
  for (double& x : v) x /= nv;

  std::vector<double> flat;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(0, 3), b = rng.normal(0, 1);
    for (std::size_t d = 0; d < dim; ++d) flat.push_back(origin[d] + a * u[d] + b * v[d]);
  }
  const Projection p = project_2d(ids_for(n), flat, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double full = 0.0;
      for (std::size_t d = 0; d < dim; ++d) full += (flat[i * dim + d] - flat[j * dim + d]) * (flat[i * dim + d] - flat[j * dim + d]);
      const double dx = p.coords[i][0] - p.coords[j][0], dy = p.coords[i][1] - p.coords[j][1];
      EXPECT_NEAR(std::sqrt(dx * dx + dy * dy), std::sqrt(full), 1e-9);
    }
  }
  EXPECT_NEAR(p.explained_fraction(), 1.0, 1e-9);
}

TEST(Projection, DuplicatesProjectIdentically) {
  Rng rng(102);
  std::vector<double> flat;
  for (int i = 0; i < 10; ++i)
    for (int d = 0; d < 5; ++d) flat.push_back(rng.normal());
  std::vector<double> doubled(flat);
  doubled.insert(doubled.end(), flat.begin(), flat.end());
  const Projection p = project_2d(ids_for(20), doubled, 5);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(p.coords[i][0], p.coords[i + 10][0]);
    EXPECT_EQ(p.coords[i][1], p.coords[i + 10][1]);
  }
}

TEST(Projection, CollinearInputIsRankDeficient) {
  std::vector<double> flat;
  for (int i = 0; i < 6; ++i) {
    const double t = i - 2.5;
    flat.insert(flat.end(), {t, 2 * t, -t});
  }
  const Projection p = project_2d(ids_for(6), flat, 3);
  EXPECT_TRUE(p.rank_deficient);
  for (const auto& xy : p.coords) EXPECT_EQ(xy[1], 0.0);
  // Sign convention: the largest-magnitude loading is positive, so the point with
  // the largest second feature has the largest first coordinate.
  EXPECT_GT(p.coords[5][0], p.coords[0][0]);
}

TEST(Projection, NeedsTwoPoints) {
  EXPECT_THROW(project_2d(ids_for(1), std::vector<double>{1, 2}, 2), Error);
}

TEST(Projection, SignConventionIsStableUnderRowOrder) {
  Rng rng(103);
  std::vector<double> flat;
  for (int i = 0; i < 30; ++i)
    for (int d = 0; d < 4; ++d) flat.push_back(rng.normal(0, 1 + d));
  std::vector<double> reversed;
  for (int i = 29; i >= 0; --i) reversed.insert(reversed.end(), flat.begin() + i * 4, flat.begin() + i * 4 + 4);
  const Projection a = project_2d(ids_for(30), flat, 4), b = project_2d(ids_for(30), reversed, 4);
  for (int i = 0; i < 30; ++i) {
    EXPECT_NEAR(a.coords[i][0], b.coords[29 - i][0], 1e-9);
    EXPECT_NEAR(a.coords[i][1], b.coords[29 - i][1], 1e-9);
  }
}

}  // namespace
}  // namespace gmtl
