#pragma once

// Primal-dual interior-point method (Mehrotra predictor-corrector) for the
// separable convex QP
//
//   min  sum_j 0.5 h_j x_j^2 + g_j x_j
//   s.t. sum_j x_j = balance                      (multiplier lambda)
//        lower <= A y <= upper,  y_b = sum_{j in b} x_j   (z_up, z_low)
//        lo_j <= x_j <= hi_j                       (v_low, v_up)
//
// Variables are grouped (one group per flexible bus) and the coupling rows
// act on group sums only, so each Newton step reduces to one Cholesky solve
// of size #groups.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "lshed/numerics.hpp"

namespace lshed {

struct SeparableQp {
  std::vector<double> h, g, lo, hi;
  std::vector<std::size_t> group;  // variable -> group
  std::size_t num_groups = 0;
  double balance = 0.0;
  DenseMatrix a;  // rows x num_groups
  std::vector<double> lower, upper;
};

enum class QpStatus { optimal, infeasible, max_iter, numerical };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::numerical: return "numerical";
  }
  return "unknown";
}

struct QpOptions {
  int max_iter = 100;
  double sigma_min = 0.1;
  double sigma_max = 0.9;
  double step_fraction = 0.995;
  double primal_tol = 1e-10;
  double dual_tol = 1e-10;  // relative to the cost scale
  double gap_tol = 1e-11;
};

struct QpResult {
  std::vector<double> x;
  double lambda = 0.0;
  std::vector<double> z_up, z_low;  // duals of A y <= upper and A y >= lower
  std::vector<double> v_low, v_up;
  QpStatus status = QpStatus::numerical;
  int iterations = 0;
  double primal_residual = 0.0, dual_residual = 0.0, mu = 0.0;
};

class SeparableQpSolver {
 public:
  SeparableQpSolver(const SeparableQp& qp, QpOptions opt) : qp_(qp), opt_(opt) {
    n_ = qp.h.size();
    m_ = qp.a.rows();
    ng_ = qp.num_groups;
    cost_scale_ = 1.0;
    for (std::size_t j = 0; j < n_; ++j)
      cost_scale_ = std::max({cost_scale_, std::abs(qp.g[j]), std::abs(qp.h[j]) * std::max(std::abs(qp.lo[j]), std::abs(qp.hi[j]))});
  }

  QpResult solve() {
    QpResult r;
    if (!trivially_feasible()) {
      r.status = QpStatus::infeasible;
      r.x.assign(n_, 0.0);
      r.z_up.assign(m_, 0.0);
      r.z_low.assign(m_, 0.0);
      r.v_low.assign(n_, 0.0);
      r.v_up.assign(n_, 0.0);
      return r;
    }
    initialize();
    double best_primal = std::numeric_limits<double>::infinity();
    int stall = 0;
    for (int it = 0; it <= opt_.max_iter; ++it) {
      compute_residuals();
      r.iterations = it;
      const double pres = primal_norm();
      const double dres = dual_norm();
      const double mu = mu_value();
      r.primal_residual = pres;
      r.dual_residual = dres;
      r.mu = mu;
      if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(mu)) {
        r.status = QpStatus::numerical;
        break;
      }
      if (pres <= opt_.primal_tol * (1.0 + rhs_scale_) && dres <= opt_.dual_tol * cost_scale_ &&
          mu <= opt_.gap_tol * cost_scale_) {
        r.status = QpStatus::optimal;
        break;
      }
      // Diverging multipliers with a stuck primal residual signal an empty
      // feasible set.
      if (pres < 0.5 * best_primal) {
        best_primal = pres;
        stall = 0;
      } else if (++stall > 15 && max_dual() > 1e8 * cost_scale_) {
        r.status = QpStatus::infeasible;
        break;
      }
      if (it == opt_.max_iter) {
        r.status = pres > 1e-6 * (1.0 + rhs_scale_) ? QpStatus::infeasible : QpStatus::max_iter;
        break;
      }
      if (!step()) {
        r.status = pres > 1e-6 * (1.0 + rhs_scale_) ? QpStatus::infeasible : QpStatus::numerical;
        break;
      }
    }
    r.x = x_;
    r.lambda = lambda_;
    r.z_up = zu_;
    r.z_low = zl_;
    r.v_low = vl_;
    r.v_up = vu_;
    return r;
  }

 private:
  bool trivially_feasible() const {
    double lo_sum = 0.0, hi_sum = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      if (qp_.lo[j] > qp_.hi[j]) return false;
      lo_sum += qp_.lo[j];
      hi_sum += qp_.hi[j];
    }
    const double tol = 1e-12 * (1.0 + std::abs(qp_.balance));
    return qp_.balance >= lo_sum - tol && qp_.balance <= hi_sum + tol;
  }

  void initialize() {
    x_.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) x_[j] = 0.5 * (qp_.lo[j] + qp_.hi[j]);
    lambda_ = 0.0;
    auto y = group_sums(x_);
    auto ay = qp_.a * y;
    rhs_scale_ = std::abs(qp_.balance);
    wu_.resize(m_);
    wl_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      wu_[i] = std::max(qp_.upper[i] - ay[i], 1.0);
      wl_[i] = std::max(ay[i] - qp_.lower[i], 1.0);
      rhs_scale_ = std::max({rhs_scale_, std::abs(qp_.upper[i]), std::abs(qp_.lower[i])});
    }
    const double d0 = std::max(1.0, 0.1 * cost_scale_);
    zu_.assign(m_, d0);
    zl_.assign(m_, d0);
    vl_.assign(n_, d0);
    vu_.assign(n_, d0);
  }

  std::vector<double> group_sums(const std::vector<double>& v) const {
    std::vector<double> y(ng_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) y[qp_.group[j]] += v[j];
    return y;
  }

  // A^T applied to a row-space vector, expanded back onto variables.
  std::vector<double> at_times(const std::vector<double>& r) const {
    std::vector<double> gsum(ng_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      if (r[i] == 0.0) continue;
      auto ai = qp_.a.row(i);
      for (std::size_t b = 0; b < ng_; ++b) gsum[b] += ai[b] * r[i];
    }
    return gsum;
  }

  void compute_residuals() {
    const auto y = group_sums(x_);
    const auto ay = qp_.a * y;
    std::vector<double> zdiff(m_);
    for (std::size_t i = 0; i < m_; ++i) zdiff[i] = zu_[i] - zl_[i];
    const auto atz = at_times(zdiff);
    rd_.resize(n_);
    double sum = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      rd_[j] = qp_.h[j] * x_[j] + qp_.g[j] - lambda_ + atz[qp_.group[j]] - vl_[j] + vu_[j];
      sum += x_[j];
    }
    re_ = sum - qp_.balance;
    riu_.resize(m_);
    ril_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      riu_[i] = ay[i] + wu_[i] - qp_.upper[i];
      ril_[i] = -ay[i] + wl_[i] + qp_.lower[i];
    }
  }

  double primal_norm() const {
    double p = std::abs(re_);
    for (std::size_t i = 0; i < m_; ++i) p = std::max({p, std::abs(riu_[i]), std::abs(ril_[i])});
    return p;
  }
  double dual_norm() const {
    double d = 0.0;
    for (double v : rd_) d = std::max(d, std::abs(v));
    return d;
  }
  double mu_value() const {
    const std::size_t cnt = 2 * m_ + 2 * n_;
    if (cnt == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < m_; ++i) s += wu_[i] * zu_[i] + wl_[i] * zl_[i];
    for (std::size_t j = 0; j < n_; ++j) s += (x_[j] - qp_.lo[j]) * vl_[j] + (qp_.hi[j] - x_[j]) * vu_[j];
    return s / static_cast<double>(cnt);
  }
  double max_dual() const {
    double d = std::abs(lambda_);
    for (std::size_t i = 0; i < m_; ++i) d = std::max({d, zu_[i], zl_[i]});
    for (std::size_t j = 0; j < n_; ++j) d = std::max({d, vl_[j], vu_[j]});
    return d;
  }

  struct Direction {
    std::vector<double> dx, dwu, dwl, dzu, dzl, dvl, dvu;
    double dlambda = 0.0;
  };

  // Factorization for the current iterate, reused by predictor and corrector.
  struct Factor {
    std::vector<double> dinv;  // 1 / D_j
    std::vector<double> einv;  // per group
    std::optional<CholeskyFactorization> chol;
    std::vector<double> q;     // K^{-1} 1
    double one_q = 0.0;
  };

  bool factorize(Factor& f) const {
    f.dinv.resize(n_);
    std::vector<double> e(ng_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      const double tl = x_[j] - qp_.lo[j];
      const double tu = qp_.hi[j] - x_[j];
      const double d = qp_.h[j] + vl_[j] / tl + vu_[j] / tu;
      if (!(d > 0.0) || !std::isfinite(d)) return false;
      f.dinv[j] = 1.0 / d;
      e[qp_.group[j]] += f.dinv[j];
    }
    f.einv.resize(ng_);
    DenseMatrix k(ng_, ng_);
    for (std::size_t b = 0; b < ng_; ++b) {
      f.einv[b] = 1.0 / e[b];
      k(b, b) = f.einv[b];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double wgt = zu_[i] / wu_[i] + zl_[i] / wl_[i];
      auto ai = qp_.a.row(i);
      for (std::size_t b = 0; b < ng_; ++b) {
        const double ab = ai[b] * wgt;
        if (ab == 0.0) continue;
        auto kb = k.row(b);
        for (std::size_t c = 0; c <= b; ++c) kb[c] += ab * ai[c];
      }
    }
    for (std::size_t b = 0; b < ng_; ++b)
      for (std::size_t c = b + 1; c < ng_; ++c) k(b, c) = k(c, b);
    try {
      f.chol.emplace(std::move(k));
    } catch (const SingularMatrixError&) {
      return false;
    }
    f.q = f.chol->solve(std::vector<double>(ng_, 1.0));
    f.one_q = 0.0;
    for (double v : f.q) f.one_q += v;
    return f.one_q > 0.0 && std::isfinite(f.one_q);
  }

  Direction solve_direction(const Factor& f, const std::vector<double>& rwzu, const std::vector<double>& rwzl,
                            const std::vector<double>& rl, const std::vector<double>& ru) const {
    Direction d;
    std::vector<double> t(m_);
    for (std::size_t i = 0; i < m_; ++i)
      t[i] = (rwzu[i] + zu_[i] * riu_[i]) / wu_[i] - (rwzl[i] + zl_[i] * ril_[i]) / wl_[i];
    const auto att = at_times(t);
    std::vector<double> r1(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      const double tl = x_[j] - qp_.lo[j];
      const double tu = qp_.hi[j] - x_[j];
      r1[j] = -rd_[j] - att[qp_.group[j]] + rl[j] / tl - ru[j] / tu;
    }
    const double r2 = -re_;
    std::vector<double> rhs(ng_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) rhs[qp_.group[j]] += f.dinv[j] * r1[j];
    for (std::size_t b = 0; b < ng_; ++b) rhs[b] *= f.einv[b];
    const auto u = f.chol->solve(rhs);
    double one_u = 0.0;
    for (double v : u) one_u += v;
    d.dlambda = (r2 - one_u) / f.one_q;
    std::vector<double> dy(ng_);
    for (std::size_t b = 0; b < ng_; ++b) dy[b] = u[b] + d.dlambda * f.q[b];
    const auto ady = qp_.a * dy;
    std::vector<double> wdiff(m_);
    for (std::size_t i = 0; i < m_; ++i) wdiff[i] = (zu_[i] / wu_[i] + zl_[i] / wl_[i]) * ady[i];
    const auto gm_dy = at_times(wdiff);
    d.dx.resize(n_);
    d.dvl.resize(n_);
    d.dvu.resize(n_);
    for (std::size_t j = 0; j < n_; ++j) {
      d.dx[j] = f.dinv[j] * (r1[j] + d.dlambda - gm_dy[qp_.group[j]]);
      const double tl = x_[j] - qp_.lo[j];
      const double tu = qp_.hi[j] - x_[j];
      d.dvl[j] = (rl[j] - vl_[j] * d.dx[j]) / tl;
      d.dvu[j] = (ru[j] + vu_[j] * d.dx[j]) / tu;
    }
    d.dwu.resize(m_);
    d.dwl.resize(m_);
    d.dzu.resize(m_);
    d.dzl.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      d.dwu[i] = -riu_[i] - ady[i];
      d.dwl[i] = -ril_[i] + ady[i];
      d.dzu[i] = (rwzu[i] - zu_[i] * d.dwu[i]) / wu_[i];
      d.dzl[i] = (rwzl[i] - zl_[i] * d.dwl[i]) / wl_[i];
    }
    return d;
  }

  double max_step(const Direction& d, double frac) const {
    double a = 1.0;
    auto limit = [&](double val, double dv) {
      if (dv < 0.0) a = std::min(a, -frac * val / dv);
    };
    for (std::size_t j = 0; j < n_; ++j) {
      limit(x_[j] - qp_.lo[j], d.dx[j]);
      limit(qp_.hi[j] - x_[j], -d.dx[j]);
      limit(vl_[j], d.dvl[j]);
      limit(vu_[j], d.dvu[j]);
    }
    for (std::size_t i = 0; i < m_; ++i) {
      limit(wu_[i], d.dwu[i]);
      limit(wl_[i], d.dwl[i]);
      limit(zu_[i], d.dzu[i]);
      limit(zl_[i], d.dzl[i]);
    }
    return a;
  }

  bool step() {
    Factor f;
    if (!factorize(f)) return false;
    const double mu = mu_value();
    std::vector<double> rwzu(m_), rwzl(m_), rl(n_), ru(n_);
    for (std::size_t i = 0; i < m_; ++i) {
      rwzu[i] = -wu_[i] * zu_[i];
      rwzl[i] = -wl_[i] * zl_[i];
    }
    for (std::size_t j = 0; j < n_; ++j) {
      rl[j] = -(x_[j] - qp_.lo[j]) * vl_[j];
      ru[j] = -(qp_.hi[j] - x_[j]) * vu_[j];
    }
    const Direction aff = solve_direction(f, rwzu, rwzl, rl, ru);
    const double a_aff = max_step(aff, 1.0);

    double mu_aff = 0.0;
    for (std::size_t i = 0; i < m_; ++i)
      mu_aff += (wu_[i] + a_aff * aff.dwu[i]) * (zu_[i] + a_aff * aff.dzu[i]) +
                (wl_[i] + a_aff * aff.dwl[i]) * (zl_[i] + a_aff * aff.dzl[i]);
    for (std::size_t j = 0; j < n_; ++j)
      mu_aff += (x_[j] + a_aff * aff.dx[j] - qp_.lo[j]) * (vl_[j] + a_aff * aff.dvl[j]) +
                (qp_.hi[j] - x_[j] - a_aff * aff.dx[j]) * (vu_[j] + a_aff * aff.dvu[j]);
    mu_aff /= static_cast<double>(2 * m_ + 2 * n_);
    double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
    sigma = std::clamp(sigma, opt_.sigma_min, opt_.sigma_max);

    const double target = sigma * mu;
    for (std::size_t i = 0; i < m_; ++i) {
      rwzu[i] = target - wu_[i] * zu_[i] - aff.dwu[i] * aff.dzu[i];
      rwzl[i] = target - wl_[i] * zl_[i] - aff.dwl[i] * aff.dzl[i];
    }
    for (std::size_t j = 0; j < n_; ++j) {
      rl[j] = target - (x_[j] - qp_.lo[j]) * vl_[j] - aff.dx[j] * aff.dvl[j];
      ru[j] = target - (qp_.hi[j] - x_[j]) * vu_[j] + aff.dx[j] * aff.dvu[j];
    }
    const Direction d = solve_direction(f, rwzu, rwzl, rl, ru);
    const double a = max_step(d, opt_.step_fraction);
    if (!(a > 0.0)) return false;
    for (std::size_t j = 0; j < n_; ++j) {
      x_[j] += a * d.dx[j];
      vl_[j] += a * d.dvl[j];
      vu_[j] += a * d.dvu[j];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      wu_[i] += a * d.dwu[i];
      wl_[i] += a * d.dwl[i];
      zu_[i] += a * d.dzu[i];
      zl_[i] += a * d.dzl[i];
    }
    lambda_ += a * d.dlambda;
    return true;
  }

  const SeparableQp& qp_;
  QpOptions opt_;
  std::size_t n_ = 0, m_ = 0, ng_ = 0;
  double cost_scale_ = 1.0, rhs_scale_ = 1.0;
  std::vector<double> x_, wu_, wl_, zu_, zl_, vl_, vu_;
  double lambda_ = 0.0;
  std::vector<double> rd_, riu_, ril_;
  double re_ = 0.0;
};

inline QpResult solve_separable_qp(const SeparableQp& qp, const QpOptions& opt = {}) {
  return SeparableQpSolver(qp, opt).solve();
}

}  // namespace lshed
