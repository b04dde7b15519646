#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "replin/estimators.hpp"
#include "replin/random.hpp"

using namespace replin;

namespace {

// Independent oracle: projected gradient descent on the ridge objective,
// run to gradient norm 1e-11. Strong convexity (2*lambda) turns that into a
// coordinatewise guarantee far below the 1e-8 comparison tolerance.
Vector ridge_gradient_descent(const LabeledDataset& data, double lambda) {
  const std::size_t d = data.dim;
  Vector w(d, 0.0);
  double lip = 2.0 * lambda;
  for (const Vector& x : data.points) lip += 2.0 * dot(x, x);
  const double step = 1.0 / lip;
  for (int iter = 0; iter < 2000000; ++iter) {
    Vector grad(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) grad[i] = 2.0 * lambda * w[i];
    for (std::size_t n = 0; n < data.size(); ++n) {
      const Vector& x = data.points[n];
      const double r = dot(w, x) - data.labels[n];
      for (std::size_t i = 0; i < d; ++i) grad[i] += 2.0 * r * x[i];
    }
    if (norm2(grad) < 1e-11) break;
    for (std::size_t i = 0; i < d; ++i) w[i] -= step * grad[i];
  }
  return w;
}

LabeledDataset random_dataset(std::size_t d, std::size_t n, std::uint64_t seed) {
  LabeledDataset data;
  data.dim = d;
  RandomStream rs{SharedRandomness(seed)};
  for (std::size_t k = 0; k < n; ++k) {
    Vector x(d);
    for (double& v : x) v = rs.next_uniform(-1.0, 1.0);
    data.add(std::move(x), rs.next_uniform(-1.0, 1.0));
  }
  data.block_sizes = {n};
  return data;
}

bool is_psd(const Matrix& a, double tol) {
  EigenDecomposition ed = jacobi_eigen(a);
  for (double v : ed.values)
    if (v < -tol) return false;
  return true;
}

}  // namespace

TEST_CASE("ridge solve matches the one point closed form") {
  LabeledDataset data;
  data.add({1.0, 0.0}, 1.0);
  // (x x^T + I) w = x  =>  w = (0.5, 0).
  Vector w = ridge_solve(data, 1.0);
  REQUIRE(w[0] == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(w[1] == 0.0);
}

TEST_CASE("huge regularization shrinks the solution toward zero") {
  LabeledDataset data = random_dataset(3, 40, 17);
  Vector w = ridge_solve(data, 1e9);
  REQUIRE(norm2(w) < 40.0 * 2.0 / 1e9);
}

TEST_CASE("ridge solve agrees with a gradient descent oracle") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    LabeledDataset data = random_dataset(4, 50, seed);
    const double lambda = 0.7;
    Vector exact = ridge_solve(data, lambda);
    Vector gd = ridge_gradient_descent(data, lambda);
    for (std::size_t i = 0; i < 4; ++i)
      REQUIRE(exact[i] == Catch::Approx(gd[i]).margin(1e-8));
  }
}

TEST_CASE("ridge solve satisfies first order optimality") {
  LabeledDataset data = random_dataset(5, 80, 23);
  const double lambda = 0.3;
  Vector w = ridge_solve(data, lambda);
  Vector grad(5, 0.0);
  for (std::size_t i = 0; i < 5; ++i) grad[i] = 2.0 * lambda * w[i];
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double r = dot(w, data.points[n]) - data.labels[n];
    for (std::size_t i = 0; i < 5; ++i) grad[i] += 2.0 * r * data.points[n][i];
  }
  REQUIRE(norm2(grad) <= 1e-8 * (1.0 + norm2(w)));
}

TEST_CASE("ridge rounding resolution has the closed form value") {
  // d=1: alpha = eps / (1 + rho - 2*delta).
  REQUIRE(ridge_rounding_alpha(1, 0.1, 0.1, 0.01) ==
          Catch::Approx(0.1 / 1.08).margin(1e-15));
  // Resolution shrinks roughly like 1/sqrt(d) at fixed accuracy.
  REQUIRE(ridge_rounding_alpha(100, 0.1, 0.1, 0.01) <
          ridge_rounding_alpha(4, 0.1, 0.1, 0.01));
}

TEST_CASE("replicable ridge is deterministic and idempotent on its grid") {
  LabeledDataset data = random_dataset(3, 60, 40);
  for (double& y : data.labels) y *= 0.05;  // keep ||w|| inside the bound
  RidgeConfig cfg;
  cfg.weight_bound = 1.0;
  SharedRandomness rng(321);
  Vector w1 = r_ridge_regression(data, cfg, rng);
  Vector w2 = r_ridge_regression(data, cfg, rng);
  REQUIRE(w1 == w2);
  // Output already sits on the shared grid.
  const double alpha = ridge_rounding_alpha(3, cfg.epsilon, cfg.rho, cfg.delta);
  REQUIRE(round_weights(w1, cfg.weight_bound, alpha, rng) == w1);
  // Rounding moved each coordinate by at most alpha/2.
  Vector raw = ridge_solve(data, cfg.lambda);
  for (std::size_t i = 0; i < 3; ++i)
    REQUIRE(std::abs(raw[i] - w1[i]) <= alpha / 2.0 + 1e-12);
}

TEST_CASE("replicable ridge enforces the declared weight bound") {
  LabeledDataset data;
  data.add({1.0}, 100.0);
  data.add({1.0}, 100.0);
  RidgeConfig cfg;
  cfg.weight_bound = 1.0;
  REQUIRE_THROWS_AS(r_ridge_regression(data, cfg, SharedRandomness(1)),
                    std::runtime_error);
}

TEST_CASE("estimator configs reject invalid parameters") {
  RidgeConfig rc;
  rc.rho = 0.02;
  rc.delta = 0.01;  // rho <= 2*delta
  REQUIRE_THROWS_AS(rc.validate(), std::invalid_argument);
  rc = RidgeConfig{};
  rc.epsilon = 1.5;
  REQUIRE_THROWS_AS(rc.validate(), std::invalid_argument);
  rc = RidgeConfig{};
  rc.lambda = 0.0;
  REQUIRE_THROWS_AS(rc.validate(), std::invalid_argument);

  CovConfig cc;
  cc.rho = 0.02;
  cc.delta = 0.01;
  REQUIRE_THROWS_AS(cc.validate(), std::invalid_argument);
  cc = CovConfig{};
  cc.block_size = 0;
  REQUIRE_THROWS_AS(cc.validate(), std::invalid_argument);
}

TEST_CASE("ridge sample size schedule has the expected form") {
  // All the formula's factors collapse to 1 at this point: B+Y = 1, d = 1,
  // lambda = 1, eps = 1, rho - 2*delta = 1, log(1/delta) = 1.
  const double delta = std::exp(-1.0);
  const double rho = 2.0 * delta + 1.0;
  REQUIRE(ridge_sample_size(0.5, 0.5, 1, 1.0, 1.0, rho, delta, 1.0) == 1);
  REQUIRE(ridge_sample_size(0.5, 0.5, 1, 1.0, 1.0, rho, delta, 8.0) == 8);
  // Halving eps quadruples N.
  REQUIRE(ridge_sample_size(0.5, 0.5, 1, 1.0, 0.5, rho, delta, 1.0) == 4);
  // Doubling d multiplies by 8.
  REQUIRE(ridge_sample_size(0.5, 0.5, 2, 1.0, 1.0, rho, delta, 1.0) == 8);
  REQUIRE_THROWS_AS(ridge_sample_size(1, 1, 1, 1, 1, 0.01, 0.01, 1.0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(ridge_sample_size(1, 1, 1, 1, 1, 0.5, 0.01, 0.0),
                    std::invalid_argument);
}

TEST_CASE("coreset regularizer balances the bias term") {
  // lambda = eps^2 / (4 k ||theta||^2); sqrt(k*lambda)*||theta|| = eps/2.
  const double lam = coreset_lambda(0.2, 4.0, 0.5);
  REQUIRE(lam == Catch::Approx(0.01).margin(1e-15));
  REQUIRE(std::sqrt(4.0 * lam) * 0.5 == Catch::Approx(0.1).margin(1e-15));
  REQUIRE_THROWS_AS(coreset_lambda(0.2, 4.0, 0.0), std::invalid_argument);
}

TEST_CASE("uncentered covariance on basis vectors") {
  Vector e1 = {1.0, 0.0};
  Matrix one = uncentered_cov({e1}, {1});
  REQUIRE(one(0, 0) == 1.0);
  REQUIRE(one(0, 1) == 0.0);
  REQUIRE(one(1, 1) == 0.0);
  // Sum over blocks of block means: two singleton blocks add up.
  Matrix two = uncentered_cov({e1, e1}, {1, 1});
  REQUIRE(two(0, 0) == 2.0);
  // One block of two averages instead.
  Matrix avg = uncentered_cov({e1, e1}, {2});
  REQUIRE(avg(0, 0) == 1.0);
  REQUIRE_THROWS_AS(uncentered_cov({e1}, {2}), std::invalid_argument);
  REQUIRE_THROWS_AS(uncentered_cov({}, {}), std::invalid_argument);
}

TEST_CASE("uncentered covariance matches a naive oracle") {
  RandomStream rs{SharedRandomness(55)};
  const std::size_t d = 3;
  std::vector<Vector> pts;
  for (std::size_t i = 0; i < 12; ++i) {
    Vector x(d);
    for (double& v : x) v = rs.next_uniform(-1.0, 1.0);
    pts.push_back(std::move(x));
  }
  std::vector<std::size_t> blocks = {5, 4, 3};
  Matrix fast = uncentered_cov(pts, blocks);
  Matrix naive(d, d);
  std::size_t pos = 0;
  for (std::size_t m : blocks) {
    for (std::size_t c = 0; c < m; ++c, ++pos)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          naive(i, j) += pts[pos][i] * pts[pos][j] / static_cast<double>(m);
  }
  REQUIRE(frobenius_distance(fast, naive) < 1e-12);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) REQUIRE(fast(i, j) == fast(j, i));
}

TEST_CASE("psd projection clips negative eigenvalues") {
  Matrix a(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = -3.0;
  Matrix p = psd_project(a);
  REQUIRE(p(0, 0) == Catch::Approx(2.0).margin(1e-12));
  REQUIRE(p(1, 1) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(is_psd(p, 1e-10));
}

TEST_CASE("psd projection fixes the psd cone pointwise") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RandomStream rs{SharedRandomness(seed)};
    Matrix b(3, 3);
    for (double& v : b.data()) v = rs.next_uniform(-1.0, 1.0);
    Matrix spd(3, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 3; ++k) s += b(i, k) * b(j, k);
        spd(i, j) = s;
      }
    REQUIRE(psd_project(spd) == spd);  // bitwise
  }
}

TEST_CASE("psd projection is idempotent and nonexpansive") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    RandomStream rs{SharedRandomness(seed + 900)};
    const std::size_t d = 3;
    Matrix a(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) {
        const double v = rs.next_uniform(-1.0, 1.0);
        a(i, j) = v;
        a(j, i) = v;
      }
    Matrix p = psd_project(a);
    REQUIRE(is_psd(p, 1e-9));
    REQUIRE(psd_project(p) == p);
    // Projection onto a convex set: no reference PSD point gets farther.
    Matrix b(d, d);
    for (double& v : b.data()) v = rs.next_uniform(-1.0, 1.0);
    Matrix ref(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += b(i, k) * b(j, k);
        ref(i, j) = s;
      }
    REQUIRE(frobenius_distance(p, ref) <=
            frobenius_distance(a, ref) + 1e-9);
  }
}

TEST_CASE("psd projection rejects malformed input") {
  Matrix a(2, 2);
  a(0, 1) = 1.0;  // a(1,0) stays 0: not symmetric
  REQUIRE_THROWS_AS(psd_project(a), std::invalid_argument);
  a(1, 0) = 1.0;
  a(0, 0) = std::nan("");
  REQUIRE_THROWS_AS(psd_project(a), std::invalid_argument);
}

TEST_CASE("covariance rounding resolution has the closed form value") {
  REQUIRE(cov_rounding_alpha(2, 0.1, 0.1, 0.01) ==
          Catch::Approx(0.4 / 8.08).margin(1e-15));
}

TEST_CASE("replicable covariance is deterministic symmetric and psd") {
  RandomStream rs{SharedRandomness(66)};
  std::vector<Vector> pts;
  for (std::size_t i = 0; i < 20; ++i) {
    Vector x(3);
    for (double& v : x) v = rs.next_uniform(-0.5, 0.5);
    pts.push_back(std::move(x));
  }
  CovConfig cfg;
  cfg.num_blocks = 2;
  cfg.block_size = 10;
  SharedRandomness rng(77);
  Matrix m1 = r_uc_cov_estimation(pts, cfg, rng);
  Matrix m2 = r_uc_cov_estimation(pts, cfg, rng);
  REQUIRE(m1 == m2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(m1(i, j) == m1(j, i));
  REQUIRE(is_psd(m1, 1e-10));
  // Rounding plus projection stays within the combined error budget.
  const double alpha = cov_rounding_alpha(3, cfg.epsilon, cfg.rho, cfg.delta);
  Matrix plain = uncentered_cov(pts, {10, 10});
  REQUIRE(frobenius_distance(m1, plain) <= 2.0 * 3.0 * alpha / 2.0 + 1e-9);
}

TEST_CASE("covariance sample size scales with the block count squared") {
  const double delta = 0.01, rho = 0.1, eps = 0.1;
  const std::size_t n1 = cov_sample_size(2, 1, eps, rho, delta, 1.0);
  const std::size_t n2 = cov_sample_size(2, 2, eps, rho, delta, 1.0);
  REQUIRE(n2 >= 4 * n1 - 4);
  REQUIRE(n2 <= 4 * n1 + 4);
  REQUIRE_THROWS_AS(cov_sample_size(2, 1, eps, 0.01, 0.01, 1.0),
                    std::invalid_argument);
}

TEST_CASE("independent samples give closer estimates as N grows") {
  const std::size_t d = 3;
  auto median_gap = [&](std::size_t n) {
    std::vector<double> gaps;
    for (std::uint64_t rep = 0; rep < 15; ++rep) {
      LabeledDataset a = random_dataset(d, n, 1000 + 2 * rep);
      LabeledDataset b = random_dataset(d, n, 1001 + 2 * rep);
      Vector wa = ridge_solve(a, 1.0);
      Vector wb = ridge_solve(b, 1.0);
      Vector diff(d);
      for (std::size_t i = 0; i < d; ++i) diff[i] = wa[i] - wb[i];
      gaps.push_back(norm2(diff));
    }
    std::sort(gaps.begin(), gaps.end());
    return gaps[gaps.size() / 2];
  };
  REQUIRE(median_gap(1600) < median_gap(100));
}

TEST_CASE("dataset text format round trips") {
  LabeledDataset data = random_dataset(3, 7, 88);
  data.block_sizes = {4, 3};
  const std::string text = serialize_dataset(data);
  LabeledDataset back = parse_dataset(text);
  REQUIRE(back.dim == data.dim);
  REQUIRE(back.points == data.points);
  REQUIRE(back.labels == data.labels);
  REQUIRE(back.block_sizes == data.block_sizes);
  REQUIRE(serialize_dataset(back) == text);
  REQUIRE_THROWS_AS(parse_dataset("labeled-dataset v2\n"), std::runtime_error);
  REQUIRE_THROWS_AS(parse_dataset("labeled-dataset v1\n2 5 1\n5\n1 2 3\n"),
                    std::runtime_error);
}
