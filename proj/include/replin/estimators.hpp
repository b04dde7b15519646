#pragma once

// Replicable supervised primitives: ridge regression with shared-randomness
// rounding and uncentered covariance estimation with PSD projection, plus the
// sample-size and regularizer schedules they come with.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <sstream>
#include <string>

#include "replin/io.hpp"
#include "replin/matrix.hpp"
#include "replin/random.hpp"
#include "replin/rounding.hpp"

namespace replin {

// Feature/label pairs with block structure: blocks correspond to the T
// distributions the data was drawn from, in order.
struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<Vector> points;
  std::vector<double> labels;
  std::vector<std::size_t> block_sizes;

  std::size_t size() const { return points.size(); }

  void add(Vector x, double y) {
    if (dim == 0) dim = x.size();
    if (x.size() != dim)
      throw std::invalid_argument("LabeledDataset: dimension mismatch");
    points.push_back(std::move(x));
    labels.push_back(y);
  }

  void check_blocks() const {
    const std::size_t total =
        std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
    if (total != points.size())
      throw std::invalid_argument("LabeledDataset: block sizes do not sum to N");
  }
};

struct RidgeConfig {
  double lambda = 1.0;
  double epsilon = 0.1;
  double delta = 0.01;
  double rho = 0.1;
  double weight_bound = 1.0;  // a-priori bound B on ||w||

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("RidgeConfig: lambda <= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0))
      throw std::invalid_argument("RidgeConfig: epsilon outside (0,1)");
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("RidgeConfig: delta outside (0,1)");
    if (!(rho > 0.0 && rho < 1.0))
      throw std::invalid_argument("RidgeConfig: rho outside (0,1)");
    if (!(rho > 2.0 * delta))
      throw std::invalid_argument("RidgeConfig: requires rho > 2*delta");
    if (!(weight_bound > 0.0))
      throw std::invalid_argument("RidgeConfig: weight bound <= 0");
  }
};

struct CovConfig {
  double epsilon = 0.1;
  double delta = 0.01;
  double rho = 0.1;
  std::size_t num_blocks = 1;   // T
  std::size_t block_size = 1;   // M

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("CovConfig: epsilon <= 0");
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("CovConfig: delta outside (0,1)");
    if (!(rho > 0.0 && rho < 1.0))
      throw std::invalid_argument("CovConfig: rho outside (0,1)");
    if (!(rho > 2.0 * delta))
      throw std::invalid_argument("CovConfig: requires rho > 2*delta");
    if (num_blocks == 0 || block_size == 0)
      throw std::invalid_argument("CovConfig: empty blocks");
  }
};

// Exact ridge minimizer of sum_i (w^T x_i - y_i)^2 + lambda ||w||^2, via a
// fixed-order SPD solve of (sum x x^T + lambda I) w = sum x y. Sums run
// left-to-right over the dataset order.
inline Vector ridge_solve(const LabeledDataset& data, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("ridge_solve: lambda <= 0");
  const std::size_t d = data.dim;
  Matrix g(d, d);
  Vector b(d, 0.0);
  for (std::size_t n = 0; n < data.size(); ++n) {
    const Vector& x = data.points[n];
    if (x.size() != d) throw std::invalid_argument("ridge_solve: dim mismatch");
    const double y = data.labels[n];
    for (std::size_t i = 0; i < d; ++i) {
      b[i] += x[i] * y;
      for (std::size_t j = i; j < d; ++j) g(i, j) += x[i] * x[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
    g(i, i) += lambda;
  }
  return cholesky_solve(cholesky(g), b);
}

// Grid resolution used by replicable ridge.
inline double ridge_rounding_alpha(std::size_t d, double epsilon, double rho,
                                   double delta) {
  const double dd = static_cast<double>(d);
  return dd * epsilon / (std::pow(dd, 1.5) + rho - 2.0 * delta);
}

// Rounds a weight vector on the shared grid over [-B-alpha, B+alpha]. The
// range is widened by one cell so edge values at +-B keep the alpha/2 error.
inline Vector round_weights(const Vector& w, double weight_bound, double alpha,
                            const SharedRandomness& rng) {
  const double hi = weight_bound + alpha;
  GridSpec grid = make_grid(rng, w.size(), 1, alpha, -hi, hi);
  return hypergrid_round(w, grid);
}

inline Vector r_ridge_regression(const LabeledDataset& data,
                                 const RidgeConfig& cfg,
                                 const SharedRandomness& rng) {
  cfg.validate();
  Vector w = ridge_solve(data, cfg.lambda);
  if (norm2(w) > cfg.weight_bound)
    throw std::runtime_error(
        "r_ridge_regression: solution norm exceeds declared bound B");
  const double alpha =
      ridge_rounding_alpha(data.dim, cfg.epsilon, cfg.rho, cfg.delta);
  return round_weights(w, cfg.weight_bound, alpha, rng);
}

// Sample-size schedule for replicable ridge; the theory gives the rate only
// up to a constant, which the caller supplies (calibrated values live in the
// experiment configs).
inline std::size_t ridge_sample_size(double weight_bound, double label_bound,
                                     std::size_t d, double lambda,
                                     double epsilon, double rho, double delta,
                                     double constant) {
  if (!(rho > 2.0 * delta))
    throw std::invalid_argument("ridge_sample_size: requires rho > 2*delta");
  if (!(constant > 0.0))
    throw std::invalid_argument("ridge_sample_size: constant <= 0");
  const double dd = static_cast<double>(d);
  const double by = weight_bound + label_bound;
  const double num = by * by * dd * dd * dd * std::log(1.0 / delta);
  const double den = lambda * lambda * epsilon * epsilon *
                     (rho - 2.0 * delta) * (rho - 2.0 * delta);
  return static_cast<std::size_t>(std::ceil(constant * num / den));
}

// Regularizer making the core-set bias term sqrt(k*lambda)*||theta|| equal
// epsilon/2.
inline double coreset_lambda(double epsilon, double k, double theta_norm) {
  if (!(epsilon > 0.0 && k > 0.0))
    throw std::invalid_argument("coreset_lambda: parameters must be positive");
  if (!(theta_norm > 0.0))
    throw std::invalid_argument("coreset_lambda: degenerate target (zero norm)");
  return epsilon * epsilon / (4.0 * k * theta_norm * theta_norm);
}

// Sum over blocks of per-block averages of x x^T, consuming points one at a
// time from a callable (so huge sample sizes never materialize). Computed on
// the upper triangle and mirrored, so the output is exactly symmetric.
template <typename PointFn>
Matrix uncentered_cov_stream(PointFn&& next_point, std::size_t dim,
                             const std::vector<std::size_t>& block_sizes) {
  if (dim == 0 || block_sizes.empty())
    throw std::invalid_argument("uncentered_cov: no data");
  Matrix sigma(dim, dim);
  for (std::size_t m_block : block_sizes) {
    if (m_block == 0)
      throw std::invalid_argument("uncentered_cov: empty block");
    Matrix block(dim, dim);
    for (std::size_t m = 0; m < m_block; ++m) {
      const Vector& x = next_point();
      if (x.size() != dim)
        throw std::invalid_argument("uncentered_cov: dim mismatch");
      for (std::size_t j = 0; j < dim; ++j) {
        const double xj = x[j];
        if (xj == 0.0) continue;
        for (std::size_t l = j; l < dim; ++l) block(j, l) += xj * x[l];
      }
    }
    const double inv_m = 1.0 / static_cast<double>(m_block);
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t l = j; l < dim; ++l) sigma(j, l) += block(j, l) * inv_m;
  }
  for (std::size_t j = 0; j < dim; ++j)
    for (std::size_t l = 0; l < j; ++l) sigma(j, l) = sigma(l, j);
  return sigma;
}

inline Matrix uncentered_cov(const std::vector<Vector>& points,
                             const std::vector<std::size_t>& block_sizes) {
  if (points.empty()) throw std::invalid_argument("uncentered_cov: no data");
  const std::size_t total =
      std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
  if (total != points.size())
    throw std::invalid_argument("uncentered_cov: block sizes do not sum to N");
  std::size_t pos = 0;
  return uncentered_cov_stream(
      [&]() -> const Vector& { return points[pos++]; }, points.front().size(),
      block_sizes);
}

// Projection onto the PSD cone: eigendecompose, clip negative eigenvalues,
// recompose, symmetrize the recomposition exactly.
inline Matrix psd_project(const Matrix& a) {
  const std::size_t n = a.rows();
  for (double v : a.data())
    if (!std::isfinite(v))
      throw std::invalid_argument("psd_project: non-finite entry");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (a(i, j) != a(j, i))
        throw std::invalid_argument("psd_project: input not symmetric");
  EigenDecomposition ed = jacobi_eigen(a);
  // Already inside the cone (up to the numerical tolerance the output is
  // promised at): return the input bits so the projection is idempotent.
  constexpr double kPsdTol = 1e-10;
  double min_eig = 0.0;
  for (double v : ed.values) min_eig = std::min(min_eig, v);
  if (min_eig >= -kPsdTol) return a;
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double z = std::max(ed.values[k], 0.0);
        s += z * ed.vectors(i, k) * ed.vectors(j, k);
      }
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

// Grid resolution used by replicable covariance estimation.
inline double cov_rounding_alpha(std::size_t d, double epsilon, double rho,
                                 double delta) {
  const double dd = static_cast<double>(d);
  return dd * dd * epsilon / (dd * dd * dd + rho - 2.0 * delta);
}

// Rounding and projection stage of replicable covariance estimation: upper
// triangle rounded entrywise on the shared grid over [-T-alpha, T+alpha]
// (entries are bounded by T since ||x|| <= 1), mirrored, then PSD-projected.
inline Matrix r_uc_cov_round(const Matrix& sigma, const CovConfig& cfg,
                             const SharedRandomness& rng) {
  cfg.validate();
  const std::size_t d = sigma.rows();
  const double alpha = cov_rounding_alpha(d, cfg.epsilon, cfg.rho, cfg.delta);
  const double bound = static_cast<double>(cfg.num_blocks) + alpha;
  GridSpec grid = make_grid(rng, d, d, alpha, -bound, bound);
  Matrix rounded(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t l = j; l < d; ++l) {
      const double v = detail::round_entry(sigma(j, l), grid.b_start,
                                           grid.b_end, grid.offsets(j, l),
                                           grid.alpha);
      rounded(j, l) = v;
      rounded(l, j) = v;
    }
  }
  return psd_project(rounded);
}

inline Matrix r_uc_cov_estimation(const std::vector<Vector>& points,
                                  const CovConfig& cfg,
                                  const SharedRandomness& rng) {
  cfg.validate();
  std::vector<std::size_t> blocks(cfg.num_blocks, cfg.block_size);
  return r_uc_cov_round(uncentered_cov(points, blocks), cfg, rng);
}

// Streaming variant for sample sizes too large to materialize.
template <typename PointFn>
Matrix r_uc_cov_estimation_stream(PointFn&& next_point, std::size_t dim,
                                  const CovConfig& cfg,
                                  const SharedRandomness& rng) {
  cfg.validate();
  std::vector<std::size_t> blocks(cfg.num_blocks, cfg.block_size);
  return r_uc_cov_round(uncentered_cov_stream(next_point, dim, blocks), cfg,
                        rng);
}

// Columnar text format: header, sizes, block sizes, then one row per sample
// holding the features followed by the label. Full double precision.
inline std::string serialize_dataset(const LabeledDataset& data) {
  data.check_blocks();
  std::string out = "labeled-dataset v1\n";
  out += std::to_string(data.dim) + " " + std::to_string(data.size()) + " " +
         std::to_string(data.block_sizes.size()) + "\n";
  for (std::size_t i = 0; i < data.block_sizes.size(); ++i) {
    if (i) out += " ";
    out += std::to_string(data.block_sizes[i]);
  }
  out += "\n";
  for (std::size_t n = 0; n < data.size(); ++n) {
    for (std::size_t i = 0; i < data.dim; ++i)
      out += fmt_full(data.points[n][i]) + " ";
    out += fmt_full(data.labels[n]) + "\n";
  }
  return out;
}

inline LabeledDataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string tag, version;
  in >> tag >> version;
  if (tag != "labeled-dataset" || version != "v1")
    throw std::runtime_error("parse_dataset: bad header");
  std::size_t d = 0, n = 0, t = 0;
  in >> d >> n >> t;
  if (!in || d == 0) throw std::runtime_error("parse_dataset: bad sizes");
  LabeledDataset data;
  data.dim = d;
  data.block_sizes.resize(t);
  for (std::size_t i = 0; i < t; ++i) in >> data.block_sizes[i];
  for (std::size_t r = 0; r < n; ++r) {
    Vector x(d);
    double y = 0.0;
    for (std::size_t i = 0; i < d; ++i) in >> x[i];
    in >> y;
    if (!in) throw std::runtime_error("parse_dataset: truncated rows");
    data.points.push_back(std::move(x));
    data.labels.push_back(y);
  }
  data.check_blocks();
  return data;
}

inline void save_dataset(const std::string& path, const LabeledDataset& data) {
  write_text_file(path, serialize_dataset(data));
}

inline LabeledDataset load_dataset(const std::string& path) {
  return parse_dataset(read_text_file(path));
}

// Sample-size schedule for replicable covariance estimation. Implemented
// with (rho - 2*delta)^2 in the denominator, matching the derivation the
// estimator actually uses.
inline std::size_t cov_sample_size(std::size_t d, std::size_t num_blocks,
                                   double epsilon, double rho, double delta,
                                   double constant) {
  if (!(rho > 2.0 * delta))
    throw std::invalid_argument("cov_sample_size: requires rho > 2*delta");
  if (!(constant > 0.0))
    throw std::invalid_argument("cov_sample_size: constant <= 0");
  const double dd = static_cast<double>(d);
  const double tt = static_cast<double>(num_blocks);
  const double num =
      std::pow(dd, 8.0) * tt * tt * std::log(dd * dd / delta);
  const double den = epsilon * epsilon * (rho - 2.0 * delta) * (rho - 2.0 * delta);
  return static_cast<std::size_t>(std::ceil(constant * num / den));
}

}  // namespace replin
