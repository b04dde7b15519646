#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "replin/rounding.hpp"

using namespace replin;

namespace {

GridSpec scalar_grid(double b_start, double b_end, double alpha, double offset) {
  GridSpec g;
  g.b_start = b_start;
  g.b_end = b_end;
  g.alpha = alpha;
  g.offsets = Matrix(1, 1);
  g.offsets(0, 0) = offset;
  return g;
}

double round_scalar(double v, const GridSpec& g) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return hypergrid_round(m, g)(0, 0);
}

}  // namespace

TEST_CASE("offsets are deterministic and uniform on [0, alpha)") {
  SharedRandomness rng(5);
  const double alpha = 0.25;
  Matrix o1 = derive_offsets(rng, 20, 30, alpha);
  Matrix o2 = derive_offsets(SharedRandomness(5), 20, 30, alpha);
  REQUIRE(o1 == o2);

  double sum = 0.0;
  const std::size_t n = 100000;
  Matrix big = derive_offsets(SharedRandomness(99), n, 1, alpha);
  for (double v : big.data()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v < alpha);
    sum += v;
  }
  REQUIRE(std::abs(sum / n - alpha / 2.0) < 0.01 * alpha);
  REQUIRE_THROWS_AS(derive_offsets(rng, 2, 2, 0.0), std::invalid_argument);
}

TEST_CASE("grid cells follow the offset partition") {
  // Grid over [0, 2) with alpha = 1 and offset 0.3: cells are
  // [0, 0.3), [0.3, 1.3), [1.3, 2) with midpoints 0.15, 0.8, 1.65.
  GridSpec g = scalar_grid(0.0, 2.0, 1.0, 0.3);
  REQUIRE(round_scalar(0.1, g) == Catch::Approx(0.15).margin(1e-15));
  REQUIRE(round_scalar(0.55, g) == Catch::Approx(0.8).margin(1e-15));
  REQUIRE(round_scalar(0.3, g) == Catch::Approx(0.8).margin(1e-15));
  REQUIRE(round_scalar(1.29, g) == Catch::Approx(0.8).margin(1e-15));
  REQUIRE(round_scalar(1.3, g) == Catch::Approx(1.65).margin(1e-15));
  REQUIRE(round_scalar(1.99, g) == Catch::Approx(1.65).margin(1e-15));
  REQUIRE(round_scalar(0.0, g) == Catch::Approx(0.15).margin(1e-15));
}

TEST_CASE("zero offset degenerates to the plain grid") {
  GridSpec g = scalar_grid(0.0, 1.0, 0.25, 0.0);
  REQUIRE(round_scalar(0.1, g) == Catch::Approx(0.125).margin(1e-15));
  REQUIRE(round_scalar(0.26, g) == Catch::Approx(0.375).margin(1e-15));
}

TEST_CASE("rounding rejects out of range values and bad grids") {
  GridSpec g = scalar_grid(-1.0, 1.0, 0.5, 0.2);
  Matrix m(1, 1);
  m(0, 0) = 1.0;  // b_end is exclusive
  REQUIRE_THROWS_AS(hypergrid_round(m, g), std::out_of_range);
  m(0, 0) = -1.5;
  REQUIRE_THROWS_AS(hypergrid_round(m, g), std::out_of_range);

  GridSpec bad = scalar_grid(0.0, 1.0, 0.5, 0.6);  // offset >= alpha
  m(0, 0) = 0.5;
  REQUIRE_THROWS_AS(hypergrid_round(m, bad), std::invalid_argument);
  REQUIRE_THROWS_AS(scalar_grid(0.0, 1.0, -0.5, 0.0).validate(),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(scalar_grid(1.0, 0.0, 0.5, 0.1).validate(),
                    std::invalid_argument);

  GridSpec mismatch = make_grid(SharedRandomness(1), 2, 2, 0.5, -1.0, 1.0);
  REQUIRE_THROWS_AS(hypergrid_round(m, mismatch), std::invalid_argument);
}

TEST_CASE("rounding error never exceeds alpha/2 per entry") {
  const double alpha = 0.37;
  const double lo = -1.2, hi = 1.7;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    SharedRandomness rng(trial);
    GridSpec g = make_grid(rng.child("grid"), 3, 4, alpha, lo, hi);
    Matrix a(3, 4);
    SharedRandomness vals = rng.child("values");
    for (std::size_t i = 0; i < 12; ++i)
      a.data()[i] = lo + (hi - lo) * vals.uniform(i) * 0.999999;
    Matrix r = hypergrid_round(a, g);
    for (std::size_t i = 0; i < 12; ++i)
      REQUIRE(std::abs(a.data()[i] - r.data()[i]) <= alpha / 2.0 + 1e-12);
    const double bound = std::sqrt(12.0) * alpha / 2.0;
    REQUIRE(frobenius_distance(a, r) <= bound + 1e-9);
  }
}

TEST_CASE("rounding is idempotent on the same grid") {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    SharedRandomness rng(trial + 5000);
    GridSpec g = make_grid(rng.child("grid"), 4, 4, 0.21, -2.0, 2.0);
    Matrix a(4, 4);
    SharedRandomness vals = rng.child("values");
    for (std::size_t i = 0; i < 16; ++i)
      a.data()[i] = -2.0 + 4.0 * vals.uniform(i) * 0.999999;
    Matrix once = hypergrid_round(a, g);
    Matrix twice = hypergrid_round(once, g);
    REQUIRE(once == twice);
  }
}

TEST_CASE("rounding is deterministic given the grid") {
  SharedRandomness rng(31);
  GridSpec g = make_grid(rng, 5, 2, 0.1, -1.0, 1.0);
  Matrix a(5, 2);
  for (std::size_t i = 0; i < 10; ++i) a.data()[i] = 0.05 * (double)i - 0.2;
  REQUIRE(hypergrid_round(a, g) == hypergrid_round(a, g));
}

TEST_CASE("nearby values collide at the predicted rate") {
  // Two scalars delta apart share a cell with probability >= 1 - delta/alpha
  // over the offset draw.
  const double alpha = 0.1, delta = 0.01;
  const double v = 0.4321;
  const std::size_t trials = 10000;
  std::size_t collisions = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    GridSpec g = make_grid(SharedRandomness(t), 1, 1, alpha, 0.0, 1.0);
    if (round_scalar(v, g) == round_scalar(v + delta, g)) ++collisions;
  }
  const double predicted = 1.0 - delta / alpha;
  const double se = std::sqrt(predicted * (1.0 - predicted) /
                              static_cast<double>(trials));
  REQUIRE(static_cast<double>(collisions) / trials >= predicted - 3.0 * se);
}

TEST_CASE("vector overload matches the matrix path") {
  SharedRandomness rng(8);
  GridSpec g = make_grid(rng, 3, 1, 0.2, -1.0, 1.0);
  Vector v = {-0.5, 0.0, 0.73};
  Matrix m(3, 1);
  m.data() = v;
  REQUIRE(hypergrid_round(v, g) == hypergrid_round(m, g).data());
}
