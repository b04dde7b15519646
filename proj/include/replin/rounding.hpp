#pragma once

// Shared-randomness hypergrid rounding. Every matrix entry is mapped to the
// midpoint of a randomly offset interval grid of resolution alpha; two runs
// that share the offsets collide onto the same midpoint whenever their
// entries fall in the same cell.

#include <cmath>
#include <stdexcept>

#include "replin/matrix.hpp"
#include "replin/random.hpp"

namespace replin {

struct GridSpec {
  double b_start = 0.0;
  double b_end = 0.0;
  double alpha = 0.0;
  Matrix offsets;  // entrywise in [0, alpha)

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("GridSpec: alpha must be > 0");
    if (!(b_start < b_end))
      throw std::invalid_argument("GridSpec: b_start must be < b_end");
    for (double o : offsets.data())
      if (!(o >= 0.0 && o < alpha))
        throw std::invalid_argument("GridSpec: offset outside [0, alpha)");
  }
};

// Entrywise i.i.d. uniform offsets on [0, alpha), fully determined by
// (rng, alpha, shape). Offsets consume words row-major from index 0.
inline Matrix derive_offsets(const SharedRandomness& rng, std::size_t rows,
                             std::size_t cols, double alpha) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("derive_offsets: alpha must be > 0");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i)
    m.data()[i] = alpha * rng.uniform(i);
  return m;
}

inline GridSpec make_grid(const SharedRandomness& rng, std::size_t rows,
                          std::size_t cols, double alpha, double b_start,
                          double b_end) {
  GridSpec g;
  g.b_start = b_start;
  g.b_end = b_end;
  g.alpha = alpha;
  g.offsets = derive_offsets(rng, rows, cols, alpha);
  g.validate();
  return g;
}

namespace detail {

// Midpoint of the grid cell containing value v. Cells per entry:
//   [b_s, b_s+o), [b_s+o, b_s+o+a), ..., [b_s+o+k*a, b_e)
// with the first and last (truncated) cells taking their true midpoints.
inline double round_entry(double v, double b_s, double b_e, double o,
                          double a) {
  if (!(v >= b_s && v < b_e))
    throw std::out_of_range("hypergrid_round: entry outside [b_start, b_end)");
  long long j = static_cast<long long>(std::floor((v - b_s - o) / a));
  auto lo = [&](long long idx) { return idx < 0 ? b_s : b_s + o + static_cast<double>(idx) * a; };
  auto hi = [&](long long idx) {
    const double h = b_s + o + static_cast<double>(idx + 1) * a;
    return h < b_e ? h : b_e;
  };
  // Guard against floating-point boundary misassignment.
  while (j > -1 && v < lo(j)) --j;
  while (v >= hi(j)) ++j;
  return 0.5 * (lo(j) + hi(j));
}

}  // namespace detail

// Replaces each entry of A by the midpoint of its grid cell. Deterministic
// given the grid; entrywise error at most alpha/2.
inline Matrix hypergrid_round(const Matrix& a, const GridSpec& grid) {
  grid.validate();
  if (a.rows() != grid.offsets.rows() || a.cols() != grid.offsets.cols())
    throw std::invalid_argument("hypergrid_round: offset shape mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.data().size(); ++i)
    out.data()[i] = detail::round_entry(a.data()[i], grid.b_start, grid.b_end,
                                        grid.offsets.data()[i], grid.alpha);
  return out;
}

// Vector convenience: treats v as a column matrix.
inline Vector hypergrid_round(const Vector& v, const GridSpec& grid) {
  Matrix a(v.size(), 1);
  a.data() = v;
  return hypergrid_round(a, grid).data();
}

}  // namespace replin
