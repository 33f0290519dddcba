#pragma once

// Reference computations used by the tests and the acceptance runner. They
// deliberately avoid the solver's own code paths.

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lshed/power_flow.hpp"

namespace oracle {

struct GridResult {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> p_mw;  // total flexibility per bus
  bool feasible = false;
};

/// Exhaustive search over per-bus flexibility on a 1e-3 p.u. lattice, with
/// the last flexible bus closing the balance, followed by successive local
/// refinements (step / 10, window of +-10 steps) that re-center on the
/// incumbent until it stops improving.
/// Flows come from DC solves of unit transfers, not from shift factors.
inline GridResult grid_search_ols(const lshed::NetworkCase& c, const lshed::Contingency& k,
                                  const std::vector<double>& p_demand_mw, double step_pu = 1e-3, int refinements = 6) {
  using namespace lshed;
  const std::size_t n = c.num_buses();
  const double base = c.base_mva;
  const std::size_t slack = c.slack_index();
  const Contingency* kp = k.outaged_branches.empty() ? nullptr : &k;

  std::vector<double> lo(n), hi(n);
  std::vector<FlexibilityCost> cost(n);
  std::vector<std::size_t> flex;
  for (std::size_t i = 0; i < n; ++i) {
    cost[i] = c.costs[i];
    const double nominal = c.buses[i].p_demand;
    cost[i].sheddable_cap = nominal > 0.0 ? cost[i].sheddable_cap * p_demand_mw[i] / nominal : 0.0;
    lo[i] = cost[i].reserve_down / base;
    hi[i] = cost[i].upper_limit() / base;
    if (hi[i] > lo[i]) flex.push_back(i);
  }
  const auto gen = c.bus_generation_mw();
  std::vector<double> p(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = (gen[i] - p_demand_mw[i]) / base;
    if (i != slack) sum += p[i];
  }
  p[slack] = -sum;
  double total = 0.0;
  for (double v : p) total += v;

  // Flow response to a unit injection at bus i withdrawn at the slack.
  std::vector<std::vector<double>> unit(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> e(n, 0.0);
    if (i != slack) {
      e[i] = 1.0;
      e[slack] = -1.0;
    }
    unit[i] = solve_dc(c, e, kp).flows;
  }
  const auto base_flow = solve_dc(c, p, kp).flows;
  std::set<int> out(k.outaged_branches.begin(), k.outaged_branches.end());
  std::vector<std::size_t> lines;
  for (std::size_t l = 0; l < c.num_branches(); ++l)
    if (c.branches[l].in_service && !out.count(c.branches[l].id) && c.branches[l].has_limit()) lines.push_back(l);

  GridResult best;
  if (flex.empty()) {
    best.p_mw.assign(n, 0.0);
    best.feasible = std::abs(total) < 1e-12;
    for (std::size_t l : lines) best.feasible = best.feasible && std::abs(base_flow[l]) * base <= c.branches[l].flow_limit;
    if (best.feasible) best.objective = 0.0;
    return best;
  }
  const std::size_t last = flex.back();
  const std::size_t free_dims = flex.size() - 1;

  auto evaluate = [&](const std::vector<double>& x) {
    // x indexed by bus, last flexible bus derived from the balance.
    std::vector<double> s = x;
    double acc = 0.0;
    for (std::size_t d = 0; d < free_dims; ++d) acc += s[flex[d]];
    s[last] = -total - acc;
    if (s[last] < lo[last] - 1e-12 || s[last] > hi[last] + 1e-12) return std::numeric_limits<double>::infinity();
    for (std::size_t l : lines) {
      double f = base_flow[l];
      for (std::size_t i : flex) f += unit[i][l] * s[i];
      if (std::abs(f) * base > c.branches[l].flow_limit * (1.0 + 1e-12)) return std::numeric_limits<double>::infinity();
    }
    double obj = 0.0;
    for (std::size_t i : flex) obj += cost[i].value(s[i] * base);
    return obj;
  };

  auto search = [&](const std::vector<double>& center, double h, bool full) {
    std::vector<double> start(free_dims), stop(free_dims);
    for (std::size_t d = 0; d < free_dims; ++d) {
      const std::size_t i = flex[d];
      if (full) {
        start[d] = lo[i];
        stop[d] = hi[i];
      } else {
        start[d] = std::max(lo[i], center[i] - 10.0 * h);
        stop[d] = std::min(hi[i], center[i] + 10.0 * h);
      }
    }
    std::vector<double> x(n, 0.0);
    std::vector<long> idx(free_dims, 0);
    std::vector<long> count(free_dims);
    for (std::size_t d = 0; d < free_dims; ++d)
      count[d] = static_cast<long>(std::floor((stop[d] - start[d]) / h + 1e-9)) + 1;
    for (;;) {
      for (std::size_t d = 0; d < free_dims; ++d) x[flex[d]] = start[d] + static_cast<double>(idx[d]) * h;
      const double obj = evaluate(x);
      if (obj < best.objective) {
        best.objective = obj;
        best.p_mw = x;
        best.feasible = true;
      }
      std::size_t d = 0;
      while (d < free_dims && ++idx[d] == count[d]) idx[d++] = 0;
      if (d == free_dims) break;
    }
  };

  search({}, step_pu, true);
  if (!best.feasible) return best;
  double h = step_pu;
  for (int r = 0; r < refinements; ++r) {
    h /= 10.0;
    // Re-center until the incumbent stops moving, so thin feasible slivers
    // along binding limits can be followed beyond one window.
    for (int walk = 0; walk < 200; ++walk) {
      const double before = best.objective;
      search(best.p_mw, h, false);
      if (!(best.objective < before)) break;
    }
  }
  // Materialize the derived bus and convert to MW.
  double acc = 0.0;
  for (std::size_t d = 0; d < free_dims; ++d) acc += best.p_mw[flex[d]];
  best.p_mw[last] = -total - acc;
  for (double& v : best.p_mw) v *= base;
  return best;
}

/// Random connected case with 3 or 4 buses, small flexibility ranges and
/// tight limits so that some instances congest. Costs satisfy continuity and
/// marginal ordering by construction.
inline std::string random_small_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 3 + static_cast<int>(rng() % 2);
  std::ostringstream o;
  o.precision(17);
  o << "mpc.baseMVA = 100;\nmpc.bus = [\n";
  std::vector<double> pd(n, 0.0);
  double load = 0.0;
  for (int i = 1; i <= n; ++i) {
    pd[i - 1] = i == 1 ? 0.0 : 10.0 + 30.0 * u(rng);
    load += pd[i - 1];
    o << i << " " << (i == 1 ? 3 : 1) << " " << pd[i - 1] << " 0 0 0 1 1 0 100 1 1.1 0.9;\n";
  }
  o << "];\nmpc.gen = [\n1 " << load << " 0 100 -100 1 100 1 " << 2 * load << " 0;\n];\n";
  // Spanning path plus one chord.
  std::vector<std::pair<int, int>> edges;
  for (int i = 2; i <= n; ++i) edges.push_back({1 + static_cast<int>(rng() % (i - 1)), i});
  int a = 1 + static_cast<int>(rng() % n), b = 1 + static_cast<int>(rng() % n);
  if (a != b) edges.push_back({std::min(a, b), std::max(a, b)});
  o << "mpc.branch = [\n";
  for (auto [f, t] : edges) {
    const double limit = u(rng) < 0.5 ? 0.0 : 8.0 + 30.0 * u(rng);
    o << f << " " << t << " 0 " << 0.05 + 0.2 * u(rng) << " 0 " << limit << " 0 0 0 0 1;\n";
  }
  o << "];\nmpc.flexcost = [\n";
  for (int i = 1; i <= n; ++i) {
    const double a1 = 0.01 + 0.05 * u(rng);
    const double a2 = a1 * (1.5 + 3.0 * u(rng));
    const double b2 = 2.0 * u(rng);
    const double rd = -10.0 * u(rng);
    const double ru = i == 1 ? 25.0 * u(rng) : 8.0 * u(rng);
    const double c2 = (a1 - a2) * ru * ru - b2 * ru;
    const double cap = pd[i - 1] * 0.9 * u(rng);
    o << i << " " << a1 << " " << a2 << " " << b2 << " " << c2 << " " << rd << " " << ru << " " << cap << ";\n";
  }
  o << "];\n";
  return o.str();
}

}  // namespace oracle
