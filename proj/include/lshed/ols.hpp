#pragma once

// DC optimal load shedding.
//
// Each bus i may deploy flexibility p_i^s = s1_i + s2_i: s1 on the reserve
// band [reserve_down, reserve_up] at cost a1*s1^2, s2 on [0, sheddable_cap] at
// the shedding piece of the cost. Flexibility restores the nodal balance of
// the post-contingency topology subject to line limits.
//
// The problem is solved in its shift-factor form (angles eliminated) by the
// separable interior-point method; verify_kkt re-checks the solution against
// the angle form  B theta = p + s,  |K theta| <= f_max.

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "lshed/interior_point.hpp"
#include "lshed/network.hpp"
#include "lshed/power_flow.hpp"

namespace lshed {

using OlsStatus = QpStatus;

struct Segment {
  std::size_t bus = 0;  // bus index
  int piece = 1;        // 1 = reserve, 2 = shedding
  double lo = 0.0, hi = 0.0;  // p.u.
  double h = 0.0, g = 0.0;    // scaled cost: 0.5 h x^2 + g x, x in p.u., $/MWh units
};

struct OlsProblem {
  double base_mva = 100.0;
  std::size_t slack = 0;
  std::vector<int> bus_ids;
  std::vector<double> p_demand_mw;
  std::vector<double> p_nominal;  // p.u., p_g - p_d with the slack balancing the DC system
  std::vector<FlexibilityCost> costs;
  Contingency contingency;
  DcMatrices dc;        // post-contingency B and K
  DenseMatrix isf;      // post-contingency shift factors
  std::vector<std::size_t> limited_lines;
  std::vector<double> limits_pu;  // per branch, inf when unlimited
  std::vector<Segment> segments;

  std::size_t num_buses() const { return bus_ids.size(); }
};

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double max() const { return std::max({primal, dual, complementarity}); }
};

struct OlsSolution {
  std::vector<double> s1, s2, p_shed_total;  // MW per bus
  std::vector<double> alpha;                 // $/MWh per bus
  std::vector<double> mu_upper, mu_lower;    // per branch, $/MWh
  double objective = 0.0;                    // $/h
  OlsStatus status = OlsStatus::numerical;
  KktResiduals kkt_residuals;
  int iterations = 0;
};

/// Builds the post-contingency problem for one demand sample (MW per bus).
/// Sheddable caps scale with the sampled demand relative to the case.
inline OlsProblem build_problem(const NetworkCase& c, const Contingency& k, std::span<const double> p_demand_mw) {
  const std::size_t n = c.num_buses();
  if (p_demand_mw.size() != n) throw ValidationError("demand sample length differs from bus count");
  if (!k.outaged_branches.empty()) validate_contingency(c, k);
  if (!check_connectivity(c, std::span<const int>(k.outaged_branches)))
    throw IslandingError("network islands under contingency '" + k.id + "'");

  OlsProblem pb;
  pb.base_mva = c.base_mva;
  pb.slack = c.slack_index();
  pb.contingency = k;
  pb.p_demand_mw.assign(p_demand_mw.begin(), p_demand_mw.end());
  for (std::size_t i = 0; i < n; ++i) {
    pb.bus_ids.push_back(c.buses[i].id);
    if (!std::isfinite(p_demand_mw[i])) throw ValidationError("non-finite demand sample");
    if (p_demand_mw[i] < 0.0 && c.buses[i].p_demand >= 0.0)
      throw ValidationError("negative load in demand sample at bus " + std::to_string(c.buses[i].id));
    FlexibilityCost f = c.costs[i];
    const double nominal = c.buses[i].p_demand;
    f.sheddable_cap = nominal > 0.0 ? f.sheddable_cap * p_demand_mw[i] / nominal : 0.0;
    pb.costs.push_back(f);
  }

  const auto gen = c.bus_generation_mw();
  pb.p_nominal.assign(n, 0.0);
  double others = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pb.p_nominal[i] = (gen[i] - p_demand_mw[i]) / c.base_mva;
    if (i != pb.slack) others += pb.p_nominal[i];
  }
  pb.p_nominal[pb.slack] = -others;

  pb.dc = build_bbus(c, k.outaged_branches);
  pb.isf = injection_shift_factors(c, k.outaged_branches);
  std::set<int> out(k.outaged_branches.begin(), k.outaged_branches.end());
  pb.limits_pu.assign(c.num_branches(), std::numeric_limits<double>::infinity());
  for (std::size_t l = 0; l < c.num_branches(); ++l) {
    const auto& br = c.branches[l];
    if (!br.in_service || out.count(br.id) || !br.has_limit()) continue;
    pb.limits_pu[l] = br.flow_limit / c.base_mva;
    pb.limited_lines.push_back(l);
  }

  const double base = c.base_mva;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = pb.costs[i];
    if (f.reserve_up > f.reserve_down)
      pb.segments.push_back({i, 1, f.reserve_down / base, f.reserve_up / base, 2.0 * f.a1 * base, 0.0});
    if (f.sheddable_cap > 0.0)
      pb.segments.push_back({i, 2, 0.0, f.sheddable_cap / base, 2.0 * f.a2 * base, 2.0 * f.a2 * f.reserve_up + f.b2});
  }
  return pb;
}

inline OlsProblem build_problem(const NetworkCase& c, const Contingency& k) {
  std::vector<double> pd;
  for (const auto& b : c.buses) pd.push_back(b.p_demand);
  return build_problem(c, k, pd);
}

/// Marginal-cost-to-decision map: the unique minimizer of c(p) - alpha*p
/// over [reserve_down, reserve_up + sheddable_cap]. MW in, MW out.
inline double recover_shedding(double alpha, const FlexibilityCost& f) {
  if (alpha > f.kink_marginal())
    return std::clamp((alpha - f.b2) / (2.0 * f.a2), f.reserve_up, f.reserve_up + f.sheddable_cap);
  return std::clamp(alpha / (2.0 * f.a1), f.reserve_down, f.reserve_up);
}

/// Flexibility cost of bus i for a given (s1, s2) split, MW in, $/h out.
inline double split_cost(const FlexibilityCost& f, double s1, double s2) {
  const double r = f.reserve_up;
  const double shed = s2 > 0.0 ? f.a2 * (r + s2) * (r + s2) + f.b2 * (r + s2) + f.c2 - f.a1 * r * r : 0.0;
  return f.a1 * s1 * s1 + shed;
}

inline KktResiduals verify_kkt(const OlsProblem& pb, const OlsSolution& sol) {
  KktResiduals res;
  const std::size_t n = pb.num_buses();
  const double base = pb.base_mva;
  std::vector<double> inj(n);
  for (std::size_t i = 0; i < n; ++i) inj[i] = pb.p_nominal[i] + sol.p_shed_total[i] / base;

  // Primal: angles from the non-slack balance rows, then the full residual.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (i != pb.slack) keep.push_back(i);
  std::vector<double> rhs;
  for (std::size_t i : keep) rhs.push_back(inj[i]);
  std::vector<double> theta(n, 0.0);
  if (!keep.empty()) {
    auto th = LuFactorization(pb.dc.bbus.select_rows(keep).select_cols(keep)).solve(rhs);
    for (std::size_t k = 0; k < keep.size(); ++k) theta[keep[k]] = th[k];
  }
  const auto bth = pb.dc.bbus * theta;
  for (std::size_t i = 0; i < n; ++i) res.primal = std::max(res.primal, std::abs(bth[i] - inj[i]));
  const auto flows = pb.dc.k * theta;
  for (std::size_t l : pb.limited_lines)
    res.primal = std::max(res.primal, std::abs(flows[l]) - pb.limits_pu[l]);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = pb.costs[i];
    res.primal = std::max({res.primal, (f.reserve_down - sol.s1[i]) / base, (sol.s1[i] - f.reserve_up) / base,
                           -sol.s2[i] / base, (sol.s2[i] - f.sheddable_cap) / base});
  }

  // Angle stationarity B^T alpha + K^T (mu+ - mu-) = 0 off the slack column.
  std::vector<double> mu(pb.dc.k.rows(), 0.0);
  for (std::size_t l = 0; l < mu.size(); ++l) {
    mu[l] = sol.mu_upper[l] - sol.mu_lower[l];
    res.dual = std::max({res.dual, -sol.mu_upper[l], -sol.mu_lower[l]});
  }
  const auto bta = pb.dc.bbus.transpose() * sol.alpha;
  const auto ktm = pb.dc.k.transpose() * mu;
  for (std::size_t i : keep) res.dual = std::max(res.dual, std::abs(bta[i] + ktm[i]));

  // Segment stationarity through implied bound multipliers; a nonzero
  // multiplier must sit on the matching bound.
  for (const auto& seg : pb.segments) {
    const auto& f = pb.costs[seg.bus];
    const double x_mw = seg.piece == 1 ? sol.s1[seg.bus] : sol.s2[seg.bus];
    const double marginal = seg.piece == 1 ? 2.0 * f.a1 * x_mw : 2.0 * f.a2 * (f.reserve_up + x_mw) + f.b2;
    const double r = marginal - sol.alpha[seg.bus];
    const double x = x_mw / base;
    res.complementarity = std::max({res.complementarity, std::max(r, 0.0) * (x - seg.lo), std::max(-r, 0.0) * (seg.hi - x)});
  }
  for (std::size_t l : pb.limited_lines) {
    res.complementarity = std::max({res.complementarity, std::abs(sol.mu_upper[l] * (pb.limits_pu[l] - flows[l])),
                                    std::abs(sol.mu_lower[l] * (pb.limits_pu[l] + flows[l]))});
  }
  return res;
}

inline OlsSolution solve(const OlsProblem& pb, const QpOptions& opt = {}) {
  const std::size_t n = pb.num_buses();
  const double base = pb.base_mva;

  // Group segments by bus.
  std::vector<long> group_of_bus(n, -1);
  std::vector<std::size_t> flex_buses;
  SeparableQp qp;
  for (const auto& seg : pb.segments) {
    if (group_of_bus[seg.bus] < 0) {
      group_of_bus[seg.bus] = static_cast<long>(flex_buses.size());
      flex_buses.push_back(seg.bus);
    }
    qp.h.push_back(seg.h);
    qp.g.push_back(seg.g);
    qp.lo.push_back(seg.lo);
    qp.hi.push_back(seg.hi);
    qp.group.push_back(static_cast<std::size_t>(group_of_bus[seg.bus]));
  }
  qp.num_groups = flex_buses.size();
  double p_sum = 0.0;
  for (double v : pb.p_nominal) p_sum += v;
  qp.balance = -p_sum;
  const auto base_flow = pb.isf * pb.p_nominal;
  qp.a = DenseMatrix(pb.limited_lines.size(), qp.num_groups);
  for (std::size_t r = 0; r < pb.limited_lines.size(); ++r) {
    const std::size_t l = pb.limited_lines[r];
    for (std::size_t b = 0; b < flex_buses.size(); ++b) qp.a(r, b) = pb.isf(l, flex_buses[b]);
    qp.upper.push_back(pb.limits_pu[l] - base_flow[l]);
    qp.lower.push_back(-pb.limits_pu[l] - base_flow[l]);
  }

  OlsSolution sol;
  sol.s1.assign(n, 0.0);
  sol.s2.assign(n, 0.0);
  sol.p_shed_total.assign(n, 0.0);
  sol.alpha.assign(n, 0.0);
  sol.mu_upper.assign(pb.dc.k.rows(), 0.0);
  sol.mu_lower.assign(pb.dc.k.rows(), 0.0);

  QpResult r;
  if (qp.h.empty()) {
    r.status = std::abs(qp.balance) <= 1e-12 && std::all_of(pb.limited_lines.begin(), pb.limited_lines.end(), [&](std::size_t l) {
                 return std::abs(base_flow[l]) <= pb.limits_pu[l];
               })
                   ? QpStatus::optimal
                   : QpStatus::infeasible;
    r.z_up.assign(pb.limited_lines.size(), 0.0);
    r.z_low.assign(pb.limited_lines.size(), 0.0);
  } else {
    r = solve_separable_qp(qp, opt);
  }
  sol.status = r.status;
  sol.iterations = r.iterations;
  if (r.status != QpStatus::optimal && r.status != QpStatus::max_iter) return sol;

  for (std::size_t j = 0; j < pb.segments.size(); ++j) {
    const auto& seg = pb.segments[j];
    (seg.piece == 1 ? sol.s1 : sol.s2)[seg.bus] = r.x[j] * base;
  }
  // Normalize the split: shedding only once the reserve band is used up.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = pb.costs[i];
    if (sol.s2[i] > 0.0 && sol.s1[i] < f.reserve_up) {
      const double shift = std::min(sol.s2[i], f.reserve_up - sol.s1[i]);
      sol.s1[i] += shift;
      sol.s2[i] -= shift;
      if (sol.s2[i] < 0.0) sol.s2[i] = 0.0;
    }
    sol.p_shed_total[i] = sol.s1[i] + sol.s2[i];
  }

  for (std::size_t rr = 0; rr < pb.limited_lines.size(); ++rr) {
    const std::size_t l = pb.limited_lines[rr];
    sol.mu_upper[l] = r.z_up[rr];
    sol.mu_lower[l] = r.z_low[rr];
  }
  for (std::size_t i = 0; i < n; ++i) {
    double a = r.lambda;
    for (std::size_t l : pb.limited_lines) a -= pb.isf(l, i) * (sol.mu_upper[l] - sol.mu_lower[l]);
    sol.alpha[i] = a;
  }
  for (std::size_t i = 0; i < n; ++i) sol.objective += split_cost(pb.costs[i], sol.s1[i], sol.s2[i]);

  sol.kkt_residuals = verify_kkt(pb, sol);
  if (sol.status == QpStatus::optimal && sol.kkt_residuals.max() > 1e-6) sol.status = QpStatus::numerical;
  return sol;
}

inline bool is_kink(const OlsProblem& pb, const OlsSolution& sol, std::size_t i, double tol = 1e-6) {
  return std::abs(sol.alpha[i] - pb.costs[i].kink_marginal()) <= tol;
}

inline bool is_flexible(const OlsProblem& pb, std::size_t i) {
  const auto& f = pb.costs[i];
  return f.reserve_up > f.reserve_down || f.sheddable_cap > 0.0;
}

struct Decision {
  double reserve_used = 0.0;  // MW
  double load_shed = 0.0;     // MW
};

inline Decision split_decision(const OlsProblem& pb, const OlsSolution& sol, std::size_t i, double tol = 1e-6) {
  if (sol.status != OlsStatus::optimal) throw ValidationError("split_decision needs an optimal solution");
  const auto& f = pb.costs[i];
  double s1 = sol.s1[i], s2 = sol.s2[i];
  if (s2 > 0.0 && s1 < f.reserve_up) {
    const double shift = std::min(s2, f.reserve_up - s1);
    s1 += shift;
    s2 -= shift;
  }
  if (s2 > tol) return {f.reserve_up, s2};
  return {s1, 0.0};
}

/// Largest gap between the decision recovered from alpha and the solved one
/// over flexible, non-kink buses, in p.u.
inline double dual_recovery_gap(const OlsProblem& pb, const OlsSolution& sol) {
  double worst = 0.0;
  for (std::size_t i = 0; i < pb.num_buses(); ++i) {
    if (!is_flexible(pb, i) || is_kink(pb, sol, i)) continue;
    const double rec = recover_shedding(sol.alpha[i], pb.costs[i]);
    worst = std::max(worst, std::abs(rec - sol.p_shed_total[i]) / pb.base_mva);
  }
  return worst;
}

/// CSV rows: bus, s1, s2, total flexibility, alpha, split decision, flags
/// (fixed = no flexibility, kink = alpha at the reserve/shedding boundary).
/// Magnitudes below 1e-6 (MW or $/MWh) are interior-point residue at active
/// bounds and print as 0.
inline std::string solution_csv(const OlsProblem& pb, const OlsSolution& sol) {
  std::ostringstream o;
  o << "bus,s1_mw,s2_mw,p_shed_mw,alpha,reserve_used_mw,load_shed_mw,flags\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", std::abs(v) < 1e-6 ? 0.0 : v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < pb.num_buses(); ++i) {
    Decision d{sol.s1[i], sol.s2[i]};
    if (sol.status == OlsStatus::optimal) d = split_decision(pb, sol, i);
    std::string flags = !is_flexible(pb, i) ? "fixed" : (is_kink(pb, sol, i) ? "kink" : "");
    if (sol.status != OlsStatus::optimal) flags += flags.empty() ? to_string(sol.status) : std::string(";") + to_string(sol.status);
    o << pb.bus_ids[i] << ',' << num(sol.s1[i]) << ',' << num(sol.s2[i]) << ',' << num(sol.p_shed_total[i]) << ','
      << num(sol.alpha[i]) << ',' << num(d.reserve_used) << ',' << num(d.load_shed) << ',' << flags << '\n';
  }
  return o.str();
}

}  // namespace lshed
