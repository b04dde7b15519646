#pragma once

// Small dense matrices with fixed-order algorithms. Every routine here is a
// deterministic function of its input bits: Cholesky with the textbook
// elimination order and a cyclic-sweep Jacobi eigensolver. No pivoting, no
// blocking, no parallel reductions.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace replin {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

inline double dot(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline Vector matvec(const Matrix& m, const Vector& x) {
  Vector y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// Cholesky factorization A = L L^T of a symmetric positive-definite matrix.
// Fixed left-to-right, top-to-bottom order.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("cholesky: not square");
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0) throw std::runtime_error("cholesky: not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

inline Vector cholesky_solve(const Matrix& l, const Vector& b) {
  const std::size_t n = l.rows();
  Vector y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

// Solves (A) x = b for symmetric positive-definite A.
inline Vector spd_solve(const Matrix& a, const Vector& b) {
  return cholesky_solve(cholesky(a), b);
}

struct EigenDecomposition {
  Vector values;    // unsorted, in Jacobi output order
  Matrix vectors;   // column j is the eigenvector for values[j]
};

// Cyclic-sweep Jacobi eigendecomposition of a symmetric matrix. Sweeps run
// over the upper triangle in row-major order until the off-diagonal
// Frobenius norm drops below 1e-12 or 100 sweeps have completed.
inline EigenDecomposition jacobi_eigen(const Matrix& a_in) {
  const std::size_t n = a_in.rows();
  if (a_in.cols() != n) throw std::invalid_argument("jacobi_eigen: not square");
  Matrix a = a_in;
  Matrix v = Matrix::identity(n);
  constexpr double kTol = 1e-12;
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    if (std::sqrt(off) < kTol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0)
                             ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                             : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  EigenDecomposition ed;
  ed.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) ed.values[i] = a(i, i);
  ed.vectors = v;
  return ed;
}

// Minimum-norm solution of min ||x|| s.t. A x ~= b (least squares via the
// Gram pseudo-inverse). Singular directions below rel_cut * max_eig are
// dropped. Returns the solution; *residual (optional) receives ||Ax - b||.
inline Vector min_norm_least_squares(const Matrix& a, const Vector& b,
                                     double* residual = nullptr,
                                     double rel_cut = 1e-10) {
  const std::size_t m = a.rows(), n = a.cols();
  // Normal equations on the smaller side.
  if (n <= m) {
    Matrix g(n, n);
    Vector rhs(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        rhs[j] += a(i, j) * b[i];
        for (std::size_t k = j; k < n; ++k) g(j, k) += a(i, j) * a(i, k);
      }
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < j; ++k) g(j, k) = g(k, j);
    EigenDecomposition ed = jacobi_eigen(g);
    double max_eig = 0.0;
    for (double e : ed.values) max_eig = std::max(max_eig, e);
    const double cut = rel_cut * std::max(max_eig, 1e-300);
    Vector x(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (ed.values[j] <= cut) continue;
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += ed.vectors(i, j) * rhs[i];
      c /= ed.values[j];
      for (std::size_t i = 0; i < n; ++i) x[i] += c * ed.vectors(i, j);
    }
    if (residual) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double r = -b[i];
        for (std::size_t j = 0; j < n; ++j) r += a(i, j) * x[j];
        s += r * r;
      }
      *residual = std::sqrt(s);
    }
    return x;
  }
  // Underdetermined: x = A^T (A A^T)^+ b.
  Matrix g(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += a(i, k) * a(j, k);
      g(i, j) = s;
    }
  EigenDecomposition ed = jacobi_eigen(g);
  double max_eig = 0.0;
  for (double e : ed.values) max_eig = std::max(max_eig, e);
  const double cut = rel_cut * std::max(max_eig, 1e-300);
  Vector z(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    if (ed.values[j] <= cut) continue;
    double c = 0.0;
    for (std::size_t i = 0; i < m; ++i) c += ed.vectors(i, j) * b[i];
    c /= ed.values[j];
    for (std::size_t i = 0; i < m; ++i) z[i] += c * ed.vectors(i, j);
  }
  Vector x(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a(i, k) * z[i];
    x[k] = s;
  }
  if (residual) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double r = -b[i];
      for (std::size_t j = 0; j < n; ++j) r += a(i, j) * x[j];
      s += r * r;
    }
    *residual = std::sqrt(s);
  }
  return x;
}

}  // namespace replin
