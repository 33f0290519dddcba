#pragma once

// Dense linear algebra used throughout the toolkit: LU with partial pivoting,
// rank-revealing orthonormalization, and a one-sided Jacobi SVD. Everything is
// sized for systems of a few hundred unknowns.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lshed/error.hpp"

namespace lshed {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) throw ValidationError("ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix column(std::span<const double> v) {
    DenseMatrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  /// Max absolute row sum.
  double norm_inf() const {
    double best = 0.0;
    for (std::size_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (double v : row(r)) s += std::abs(v);
      best = std::max(best, s);
    }
    return best;
  }

  double norm_frobenius() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  DenseMatrix select_rows(std::span<const std::size_t> idx) const {
    DenseMatrix out(idx.size(), cols_);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto src = row(idx[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  }

  DenseMatrix select_cols(std::span<const std::size_t> idx) const {
    DenseMatrix out(rows_, idx.size());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t k = 0; k < idx.size(); ++k) out(r, k) = (*this)(r, idx[k]);
    return out;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ValidationError("matrix product dimension mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

inline DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("matrix difference dimension mismatch");
  DenseMatrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

inline std::vector<double> operator*(const DenseMatrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ValidationError("matrix-vector dimension mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < ai.size(); ++j) s += ai[j] * x[j];
    y[i] = s;
  }
  return y;
}

inline std::vector<double> operator*(const DenseMatrix& a, const std::vector<double>& x) {
  return a * std::span<const double>(x);
}

/// Thrown when elimination meets a pivot below tolerance.
class SingularMatrixError : public NumericalError {
 public:
  explicit SingularMatrixError(std::size_t pivot)
      : NumericalError("matrix singular to working tolerance at pivot " + std::to_string(pivot)), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// PA = LU with partial pivoting; factors are stored in place.
class LuFactorization {
 public:
  LuFactorization() = default;
  explicit LuFactorization(DenseMatrix a, double pivot_tol = 1e-13) : lu_(std::move(a)) {
    if (lu_.rows() != lu_.cols()) throw ValidationError("LU requires a square matrix");
    const std::size_t n = lu_.rows();
    perm_.resize(n);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    const double scale = std::max(lu_.max_abs(), 1e-300);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double v = std::abs(lu_(i, k));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      if (best <= pivot_tol * scale) throw SingularMatrixError(k);
      if (p != k) {
        std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(p).begin());
        std::swap(perm_[k], perm_[p]);
      }
      const double inv = 1.0 / lu_(k, k);
      auto rk = lu_.row(k);
      for (std::size_t i = k + 1; i < n; ++i) {
        auto ri = lu_.row(i);
        const double f = ri[k] * inv;
        ri[k] = f;
        if (f == 0.0) continue;
        for (std::size_t j = k + 1; j < n; ++j) ri[j] -= f * rk[j];
      }
    }
  }

  std::size_t size() const noexcept { return lu_.rows(); }

  std::vector<double> solve(std::span<const double> b) const {
    const std::size_t n = size();
    if (b.size() != n) throw ValidationError("LU solve dimension mismatch");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i) {
      auto ri = lu_.row(i);
      double s = x[i];
      for (std::size_t j = 0; j < i; ++j) s -= ri[j] * x[j];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      auto ri = lu_.row(i);
      double s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= ri[j] * x[j];
      x[i] = s / ri[i];
    }
    return x;
  }

  DenseMatrix solve(const DenseMatrix& rhs) const {
    if (rhs.rows() != size()) throw ValidationError("LU solve dimension mismatch");
    DenseMatrix x(rhs.rows(), rhs.cols());
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
      auto sol = solve(rhs.col(c));
      for (std::size_t r = 0; r < sol.size(); ++r) x(r, c) = sol[r];
    }
    return x;
  }

 private:
  DenseMatrix lu_;
  std::vector<std::size_t> perm_;
};

inline DenseMatrix lu_solve(const DenseMatrix& a, const DenseMatrix& rhs) { return LuFactorization(a).solve(rhs); }

/// Cholesky factor of a symmetric positive definite matrix (lower triangle).
class CholeskyFactorization {
 public:
  explicit CholeskyFactorization(DenseMatrix a) : l_(std::move(a)) {
    const std::size_t n = l_.rows();
    for (std::size_t j = 0; j < n; ++j) {
      auto rj = l_.row(j);
      double d = rj[j];
      for (std::size_t k = 0; k < j; ++k) d -= rj[k] * rj[k];
      if (!(d > 0.0)) throw SingularMatrixError(j);
      const double ljj = std::sqrt(d);
      rj[j] = ljj;
      const double inv = 1.0 / ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        auto ri = l_.row(i);
        double s = ri[j];
        for (std::size_t k = 0; k < j; ++k) s -= ri[k] * rj[k];
        ri[j] = s * inv;
      }
    }
  }

  std::vector<double> solve(std::span<const double> b) const {
    const std::size_t n = l_.rows();
    std::vector<double> x(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      auto ri = l_.row(i);
      double s = x[i];
      for (std::size_t k = 0; k < i; ++k) s -= ri[k] * x[k];
      x[i] = s / ri[i];
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= l_(k, i) * x[k];
      x[i] = s / l_(i, i);
    }
    return x;
  }

 private:
  DenseMatrix l_;
};

/// Orthonormal basis for the column span of `a`. Gram-Schmidt with one
/// re-orthogonalization pass; columns whose residual falls under
/// 1e-10 * ||a||_F are dropped, so the result has rank(a) columns.
inline DenseMatrix qr_orthonormal(const DenseMatrix& a, double rel_tol = 1e-10) {
  const std::size_t n = a.rows();
  const double tol = rel_tol * a.norm_frobenius();
  std::vector<std::vector<double>> basis;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    std::vector<double> v = a.col(c);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += q[i] * v[i];
        for (std::size_t i = 0; i < n; ++i) v[i] -= dot * q[i];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= tol || norm == 0.0) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  DenseMatrix q(n, basis.size());
  for (std::size_t c = 0; c < basis.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) q(i, c) = basis[c][i];
  return q;
}

struct SvdResult {
  DenseMatrix u;  // m x r
  std::vector<double> sigma;  // r, non-increasing
  DenseMatrix v;  // n x r
};

namespace detail {

// One-sided Jacobi on the columns of `w` (m x n, m >= n). On exit the columns
// of w are U*Sigma and v accumulates the rotations.
inline void jacobi_orthogonalize(DenseMatrix& w, DenseMatrix& v, int max_sweeps) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const double eps = 1e-15;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += w(i, p) * w(i, p);
          beta += w(i, q) * w(i, q);
          gamma += w(i, p) * w(i, q);
        }
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < v.rows(); ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericalError("Jacobi SVD did not converge within " + std::to_string(max_sweeps) +
                       " sweeps (matrix max |a| = " + std::to_string(w.max_abs()) + ")");
}

}  // namespace detail

/// Thin SVD A = U diag(sigma) V^T with r = min(m, n).
inline SvdResult svd_small(const DenseMatrix& a, int max_sweeps = 80) {
  const bool flip = a.rows() < a.cols();
  DenseMatrix w = flip ? a.transpose() : a;
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  DenseMatrix v = DenseMatrix::identity(n);
  detail::jacobi_orthogonalize(w, v, max_sweeps);

  std::vector<double> norms(n);
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += w(i, c) * w(i, c);
    norms[c] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdResult out{DenseMatrix(m, n), std::vector<double>(n), DenseMatrix(n, n)};
  const double cutoff = (norms.empty() ? 0.0 : norms[order[0]]) * 1e-300;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t c = order[k];
    out.sigma[k] = norms[c];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, c);
    if (norms[c] > cutoff && norms[c] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = w(i, c) / norms[c];
    }
  }
  // Complete U for zero singular values so it stays orthonormal.
  for (std::size_t k = 0; k < n; ++k) {
    if (out.sigma[k] > 0.0) continue;
    for (std::size_t e = 0; e < m; ++e) {
      std::vector<double> cand(m, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == k || (out.sigma[j] == 0.0 && j > k)) continue;
          double dot = 0.0;
          for (std::size_t i = 0; i < m; ++i) dot += out.u(i, j) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * out.u(i, j);
        }
      }
      double nrm = 0.0;
      for (double x : cand) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 0.5) {
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = cand[i] / nrm;
        break;
      }
    }
  }
  if (flip) std::swap(out.u, out.v);
  return out;
}

}  // namespace lshed
