#pragma once

// Steady-state power flow: AC Newton-Raphson in polar form and the linear DC
// approximation, with line-outage contingencies applied by removing branches.

#include <complex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "lshed/error.hpp"
#include "lshed/network.hpp"
#include "lshed/numerics.hpp"

namespace lshed {

struct Contingency {
  std::string id;
  std::vector<int> outaged_branches;  // ascending, unique
  friend bool operator==(const Contingency&, const Contingency&) = default;
};

inline Contingency make_contingency(std::string id, std::vector<int> branches) {
  std::sort(branches.begin(), branches.end());
  branches.erase(std::unique(branches.begin(), branches.end()), branches.end());
  return Contingency{std::move(id), std::move(branches)};
}

inline void validate_contingency(const NetworkCase& c, const Contingency& k) {
  if (k.outaged_branches.empty()) throw ValidationError("contingency '" + k.id + "' outages no branch");
  for (int id : k.outaged_branches) {
    const auto& br = c.branches[c.branch_index(id)];
    if (!br.in_service)
      throw ValidationError("contingency '" + k.id + "' outages branch " + std::to_string(id) + " which is already out of service");
  }
}

/// True iff every bus is reachable over in-service branches that survive the
/// outage set.
inline bool check_connectivity(const NetworkCase& c, std::span<const int> outages = {}) {
  const std::size_t n = c.num_buses();
  if (n == 0) return true;
  std::set<int> out(outages.begin(), outages.end());
  std::vector<char> seen(n, 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!q.empty()) {
    const std::size_t i = q.front();
    q.pop();
    for (int br_id : c.incident_branches(i)) {
      if (out.count(br_id)) continue;
      const auto& br = c.branches[c.branch_index(br_id)];
      const std::size_t j = c.bus_index(br.from_bus == c.buses[i].id ? br.to_bus : br.from_bus);
      if (!seen[j]) {
        seen[j] = 1;
        ++count;
        q.push(j);
      }
    }
  }
  return count == n;
}

inline bool check_connectivity(const NetworkCase& c, const Contingency& k) {
  return check_connectivity(c, std::span<const int>(k.outaged_branches));
}

struct BranchFlow {
  double p_from = 0.0, q_from = 0.0, p_to = 0.0, q_to = 0.0;  // p.u.
};

struct PowerFlowState {
  std::vector<double> v_mag;
  std::vector<double> v_ang;  // radians, slack = 0
  std::vector<double> p_inj;  // p.u., computed from the solution
  std::vector<double> q_inj;
  std::vector<BranchFlow> branch_flows;
  double total_generation = 0.0;  // p.u., sum of p_inj plus demand
  double max_mismatch = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct AcOptions {
  int max_iter = 20;
  double tolerance = 1e-8;
  bool enforce_q_limits = false;
  const PowerFlowState* warm_start = nullptr;
};

namespace detail {

struct SparseY {
  std::vector<std::vector<std::size_t>> nbr;  // nonzero columns per row, including diagonal
  Admittance y;
};

inline SparseY sparse_admittance(const NetworkCase& c, std::span<const int> outages) {
  SparseY s{{}, build_admittance(c, outages)};
  const std::size_t n = c.num_buses();
  s.nbr.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (i == j || s.y.g(i, j) != 0.0 || s.y.b(i, j) != 0.0) s.nbr[i].push_back(j);
  }
  return s;
}

inline void injections(const SparseY& s, const std::vector<double>& vm, const std::vector<double>& va,
                       std::vector<double>& p, std::vector<double>& q) {
  const std::size_t n = vm.size();
  p.assign(n, 0.0);
  q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (std::size_t j : s.nbr[i]) {
      const double th = va[i] - va[j];
      const double cs = std::cos(th), sn = std::sin(th);
      const double g = s.y.g(i, j), b = s.y.b(i, j);
      pi += vm[j] * (g * cs + b * sn);
      qi += vm[j] * (g * sn - b * cs);
    }
    p[i] = vm[i] * pi;
    q[i] = vm[i] * qi;
  }
}

}  // namespace detail

/// Recomputes the worst active/reactive mismatch of a state against the
/// case's scheduled injections, independent of the Newton bookkeeping.
inline double ac_mismatch(const NetworkCase& c, const PowerFlowState& st, std::span<const int> outages = {}) {
  auto s = detail::sparse_admittance(c, outages);
  std::vector<double> p, q;
  detail::injections(s, st.v_mag, st.v_ang, p, q);
  const auto gen = c.bus_generation_mw();
  std::vector<char> has_gen(c.num_buses(), 0);
  for (const auto& g : c.generators)
    if (g.in_service) has_gen[c.bus_index(g.bus)] = 1;
  double worst = 0.0;
  for (std::size_t i = 0; i < c.num_buses(); ++i) {
    if (i == c.slack_index()) continue;
    const double p_sched = (gen[i] - c.buses[i].p_demand) / c.base_mva;
    worst = std::max(worst, std::abs(p[i] - p_sched));
    const bool pv = c.buses[i].kind == BusKind::pv && has_gen[i];
    if (!pv) worst = std::max(worst, std::abs(q[i] + c.buses[i].q_demand / c.base_mva));
  }
  return worst;
}

inline PowerFlowState solve_ac(const NetworkCase& c, const Contingency* contingency = nullptr, const AcOptions& opt = {}) {
  std::span<const int> outages;
  if (contingency) {
    validate_contingency(c, *contingency);
    outages = contingency->outaged_branches;
  }
  if (!check_connectivity(c, outages))
    throw IslandingError("network islands under contingency '" + (contingency ? contingency->id : std::string("base")) + "'");

  const std::size_t n = c.num_buses();
  const auto s = detail::sparse_admittance(c, outages);
  const auto gen_mw = c.bus_generation_mw();

  std::vector<char> is_pv(n, 0);
  std::vector<double> v_set(n, 1.0);
  std::vector<double> q_max(n, 0.0), q_min(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v_set[i] = c.buses[i].v_setpoint;
  for (const auto& g : c.generators) {
    if (!g.in_service) continue;
    const std::size_t i = c.bus_index(g.bus);
    if (c.buses[i].kind != BusKind::pq) {
      v_set[i] = g.v_setpoint;
      if (c.buses[i].kind == BusKind::pv) is_pv[i] = 1;
    }
    q_max[i] += g.q_max;
    q_min[i] += g.q_min;
  }
  const std::size_t slack = c.slack_index();

  std::vector<double> p_sched(n), q_sched(n);
  for (std::size_t i = 0; i < n; ++i) {
    p_sched[i] = (gen_mw[i] - c.buses[i].p_demand) / c.base_mva;
    q_sched[i] = -c.buses[i].q_demand / c.base_mva;
  }

  PowerFlowState st;
  st.v_mag.assign(n, 1.0);
  st.v_ang.assign(n, 0.0);
  if (opt.warm_start && opt.warm_start->v_mag.size() == n) {
    st.v_mag = opt.warm_start->v_mag;
    st.v_ang = opt.warm_start->v_ang;
  }
  std::vector<char> fixed_q(n, 0);  // PV buses switched to PQ at a Q limit

  int total_iter = 0;
  for (int outer = 0; outer < 10; ++outer) {
    for (std::size_t i = 0; i < n; ++i)
      if (i == slack || (is_pv[i] && !fixed_q[i])) st.v_mag[i] = v_set[i];

    // Unknown ordering: angles of non-slack buses, then magnitudes of PQ buses.
    std::vector<long> ang_pos(n, -1), mag_pos(n, -1);
    std::size_t dim = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (i != slack) ang_pos[i] = static_cast<long>(dim++);
    for (std::size_t i = 0; i < n; ++i)
      if (i != slack && (!is_pv[i] || fixed_q[i])) mag_pos[i] = static_cast<long>(dim++);

    std::vector<double> p, q;
    st.converged = false;
    for (int it = 0;; ++it) {
      detail::injections(s, st.v_mag, st.v_ang, p, q);
      std::vector<double> f(dim, 0.0);
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (ang_pos[i] >= 0) {
          f[static_cast<std::size_t>(ang_pos[i])] = p[i] - p_sched[i];
          worst = std::max(worst, std::abs(p[i] - p_sched[i]));
        }
        if (mag_pos[i] >= 0) {
          f[static_cast<std::size_t>(mag_pos[i])] = q[i] - q_sched[i];
          worst = std::max(worst, std::abs(q[i] - q_sched[i]));
        }
      }
      st.max_mismatch = worst;
      if (!std::isfinite(worst)) break;
      if (worst <= opt.tolerance) {
        st.converged = true;
        break;
      }
      if (it >= opt.max_iter) break;
      ++total_iter;

      DenseMatrix jac(dim, dim);
      for (std::size_t i = 0; i < n; ++i) {
        const long rp = ang_pos[i], rq = mag_pos[i];
        if (rp < 0 && rq < 0) continue;
        for (std::size_t j : s.nbr[i]) {
          const double g = s.y.g(i, j), b = s.y.b(i, j);
          if (i == j) {
            const double vi = st.v_mag[i];
            // dP/dtheta_i, dP/dV_i, dQ/dtheta_i, dQ/dV_i
            const double dp_dth = -q[i] - b * vi * vi;
            const double dp_dv = p[i] / vi + g * vi;
            const double dq_dth = p[i] - g * vi * vi;
            const double dq_dv = q[i] / vi - b * vi;
            if (rp >= 0) {
              jac(static_cast<std::size_t>(rp), static_cast<std::size_t>(ang_pos[i])) += dp_dth;
              if (rq >= 0) jac(static_cast<std::size_t>(rp), static_cast<std::size_t>(rq)) += dp_dv;
            }
            if (rq >= 0) {
              jac(static_cast<std::size_t>(rq), static_cast<std::size_t>(ang_pos[i])) += dq_dth;
              jac(static_cast<std::size_t>(rq), static_cast<std::size_t>(rq)) += dq_dv;
            }
            continue;
          }
          const double th = st.v_ang[i] - st.v_ang[j];
          const double cs = std::cos(th), sn = std::sin(th);
          const double vi = st.v_mag[i], vj = st.v_mag[j];
          const double dp_dthj = vi * vj * (g * sn - b * cs);
          const double dp_dvj = vi * (g * cs + b * sn);
          const double dq_dthj = -vi * vj * (g * cs + b * sn);
          const double dq_dvj = vi * (g * sn - b * cs);
          const long cj = ang_pos[j], cv = mag_pos[j];
          if (rp >= 0) {
            if (cj >= 0) jac(static_cast<std::size_t>(rp), static_cast<std::size_t>(cj)) += dp_dthj;
            if (cv >= 0) jac(static_cast<std::size_t>(rp), static_cast<std::size_t>(cv)) += dp_dvj;
          }
          if (rq >= 0) {
            if (cj >= 0) jac(static_cast<std::size_t>(rq), static_cast<std::size_t>(cj)) += dq_dthj;
            if (cv >= 0) jac(static_cast<std::size_t>(rq), static_cast<std::size_t>(cv)) += dq_dvj;
          }
        }
      }
      std::vector<double> dx;
      try {
        dx = LuFactorization(std::move(jac)).solve(f);
      } catch (const SingularMatrixError&) {
        break;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (ang_pos[i] >= 0) st.v_ang[i] -= dx[static_cast<std::size_t>(ang_pos[i])];
        if (mag_pos[i] >= 0) st.v_mag[i] -= dx[static_cast<std::size_t>(mag_pos[i])];
      }
    }
    if (!st.converged || !opt.enforce_q_limits) break;

    bool switched = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_pv[i] || fixed_q[i]) continue;
      const double q_gen = (q[i] - q_sched[i]) * c.base_mva;
      if (q_gen > q_max[i] + 1e-9 || q_gen < q_min[i] - 1e-9) {
        const double lim = q_gen > q_max[i] ? q_max[i] : q_min[i];
        q_sched[i] = (lim - c.buses[i].q_demand) / c.base_mva;
        fixed_q[i] = 1;
        switched = true;
      }
    }
    if (!switched) break;
  }
  st.iterations = total_iter;

  detail::injections(s, st.v_mag, st.v_ang, st.p_inj, st.q_inj);
  double demand = 0.0;
  for (const auto& b : c.buses) demand += b.p_demand;
  st.total_generation = demand / c.base_mva;
  for (double v : st.p_inj) st.total_generation += v;

  std::set<int> out(outages.begin(), outages.end());
  st.branch_flows.assign(c.num_branches(), BranchFlow{});
  for (std::size_t l = 0; l < c.num_branches(); ++l) {
    const auto& br = c.branches[l];
    if (!br.in_service || out.count(br.id)) continue;
    const std::size_t f = c.bus_index(br.from_bus), t = c.bus_index(br.to_bus);
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> bc(0.0, br.b_shunt / 2.0);
    const auto vf = std::polar(st.v_mag[f], st.v_ang[f]);
    const auto vt = std::polar(st.v_mag[t], st.v_ang[t]);
    const auto i_ft = (ys + bc) * vf - ys * vt;
    const auto i_tf = (ys + bc) * vt - ys * vf;
    const auto s_ft = vf * std::conj(i_ft);
    const auto s_tf = vt * std::conj(i_tf);
    st.branch_flows[l] = {s_ft.real(), s_ft.imag(), s_tf.real(), s_tf.imag()};
  }
  return st;
}

struct DcFlowResult {
  std::vector<double> theta;  // radians
  std::vector<double> flows;  // p.u., from -> to
};

/// Solves B theta = p with the slack angle fixed at zero; the slack row is
/// dropped, so its injection is implied by the others.
inline DcFlowResult solve_dc(const NetworkCase& c, std::span<const double> p_inj, const Contingency* contingency = nullptr) {
  if (p_inj.size() != c.num_buses()) throw ValidationError("injection vector length differs from bus count");
  std::span<const int> outages;
  if (contingency) outages = contingency->outaged_branches;
  if (!check_connectivity(c, outages))
    throw IslandingError("network islands under contingency '" + (contingency ? contingency->id : std::string("base")) + "'");
  const auto dc = build_bbus(c, outages);
  const std::size_t n = c.num_buses();
  const std::size_t slack = c.slack_index();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (i != slack) keep.push_back(i);
  DenseMatrix reduced = dc.bbus.select_rows(keep).select_cols(keep);
  std::vector<double> rhs(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) rhs[k] = p_inj[keep[k]];
  DcFlowResult out;
  out.theta.assign(n, 0.0);
  if (!keep.empty()) {
    std::vector<double> th;
    try {
      th = LuFactorization(std::move(reduced)).solve(rhs);
    } catch (const SingularMatrixError&) {
      throw IslandingError("reduced B matrix is singular");
    }
    for (std::size_t k = 0; k < keep.size(); ++k) out.theta[keep[k]] = th[k];
  }
  out.flows = dc.k * out.theta;
  return out;
}

/// Injection shift factors S (L x N, p.u. flow per p.u. injection) of the
/// topology left after `outages`, referenced to the slack bus: the slack
/// column is zero and f = S p for any injection vector.
inline DenseMatrix injection_shift_factors(const NetworkCase& c, std::span<const int> outages = {}) {
  if (!check_connectivity(c, outages)) throw IslandingError("network islands; shift factors undefined");
  const auto dc = build_bbus(c, outages);
  const std::size_t n = c.num_buses();
  const std::size_t slack = c.slack_index();
  std::vector<std::size_t> keep;
  std::vector<long> pos(n, -1);
  for (std::size_t i = 0; i < n; ++i)
    if (i != slack) {
      pos[i] = static_cast<long>(keep.size());
      keep.push_back(i);
    }
  DenseMatrix binv;
  try {
    binv = LuFactorization(dc.bbus.select_rows(keep).select_cols(keep)).solve(DenseMatrix::identity(keep.size()));
  } catch (const SingularMatrixError&) {
    throw IslandingError("reduced B matrix is singular");
  }
  std::set<int> out(outages.begin(), outages.end());
  DenseMatrix s(c.num_branches(), n);
  for (std::size_t l = 0; l < c.num_branches(); ++l) {
    const auto& br = c.branches[l];
    if (!br.in_service || out.count(br.id)) continue;
    const double y = 1.0 / br.x;
    const long f = pos[c.bus_index(br.from_bus)];
    const long t = pos[c.bus_index(br.to_bus)];
    for (std::size_t k = 0; k < keep.size(); ++k) {
      double v = 0.0;
      if (f >= 0) v += binv(static_cast<std::size_t>(f), k);
      if (t >= 0) v -= binv(static_cast<std::size_t>(t), k);
      s(l, keep[k]) = y * v;
    }
  }
  return s;
}

/// Frequency proxy from the relative change in total generation between the
/// pre- and post-contingency states: f0 - k_sys * dP / P_pre.
inline double frequency_proxy(const PowerFlowState& pre, const PowerFlowState& post, double f0, double k_sys) {
  if (!pre.converged || !post.converged) throw ValidationError("frequency proxy needs converged states");
  if (pre.total_generation == 0.0) throw ValidationError("zero pre-contingency generation");
  return f0 - k_sys * (post.total_generation - pre.total_generation) / pre.total_generation;
}

/// Copy of the case with per-bus demand multipliers applied. Sheddable caps
/// follow the demand they belong to.
inline NetworkCase scaled_case(const NetworkCase& c, std::span<const double> multipliers) {
  if (multipliers.size() != c.num_buses()) throw ValidationError("multiplier vector length differs from bus count");
  NetworkCase out = c;
  for (std::size_t i = 0; i < c.num_buses(); ++i) {
    if (multipliers[i] < 0.0) throw ValidationError("negative load multiplier");
    out.buses[i].p_demand *= multipliers[i];
    out.buses[i].q_demand *= multipliers[i];
    out.costs[i].sheddable_cap *= multipliers[i];
  }
  return out;
}

}  // namespace lshed
