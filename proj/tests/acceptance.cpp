// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
//
//   acceptance [--only N[,M...]] [--out DIR]
//
// Exit status is 0 only when no selected criterion fails.

#include <chrono>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lshed/identifiability.hpp"
#include "lshed/pipeline.hpp"
#include "oracles.hpp"

using namespace lshed;
namespace fs = std::filesystem;

namespace {

const std::string kData = LSHED_DATA_DIR;
std::string g_out;  // optional artifact directory

struct Outcome {
  enum Kind { pass, fail, skip } kind = fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

bool have_118() { return std::ifstream(kData + "/case118.m").good(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> demand(const NetworkCase& c) {
  std::vector<double> pd;
  for (const auto& b : c.buses) pd.push_back(b.p_demand);
  return pd;
}

std::vector<int> in_service_ids(const NetworkCase& c) {
  std::vector<int> ids;
  for (const auto& b : c.branches)
    if (b.in_service) ids.push_back(b.id);
  return ids;
}

/// Random non-islanding single or double outage.
Contingency random_outage(std::mt19937_64& rng, const NetworkCase& c) {
  const auto ids = in_service_ids(c);
  for (;;) {
    std::vector<int> out{ids[rng() % ids.size()]};
    if (rng() % 2) out.push_back(ids[rng() % ids.size()]);
    auto k = make_contingency(contingency_name(out), out);
    if (check_connectivity(c, k)) return k;
  }
}

std::vector<double> random_balanced(std::mt19937_64& rng, const NetworkCase& c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> p(c.num_buses());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (i != c.slack_index()) sum += p[i] = u(rng);
  p[c.slack_index()] = -sum;
  return p;
}

// 1. KKT residuals and dual recovery on randomized stressed instances.
Outcome solver_correctness() {
  std::vector<NetworkCase> cases{parse_case_file(kData + "/case6.m")};
  if (have_118()) cases.push_back(parse_case_file(kData + "/case118.m"));
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t target = 200;
  std::size_t optimal = 0, infeasible = 0, congested = 0, attempts = 0;
  double worst_kkt = 0.0, worst_rec = 0.0;
  while (optimal < target && attempts < 4 * target) {
    const auto& base = cases[attempts++ % cases.size()];
    auto c = base;
    const bool small = c.num_buses() < 10;
    for (auto& br : c.branches) br.flow_limit *= small ? 0.3 + 0.7 * u(rng) : 0.6 + 0.4 * u(rng);
    auto pd = demand(c);
    const double scale = 0.95 + 0.25 * u(rng);
    for (double& p : pd) p *= scale * (0.95 + 0.1 * u(rng));
    const auto k = random_outage(rng, c);
    const auto pb = build_problem(c, k, pd);
    const auto sol = solve(pb);
    if (sol.status != OlsStatus::optimal) {
      ++infeasible;
      continue;
    }
    ++optimal;
    congested += sol.objective > 1e-6;
    worst_kkt = std::max(worst_kkt, verify_kkt(pb, sol).max());
    worst_rec = std::max(worst_rec, dual_recovery_gap(pb, sol));
  }
  const bool ok = optimal == target && worst_kkt <= 1e-6 && worst_rec <= 1e-4 && congested > 0;
  return verdict(ok, std::to_string(optimal) + " optimal (" + std::to_string(congested) + " with shedding cost, " +
                         std::to_string(infeasible) + " infeasible draws skipped), max KKT residual " +
                         fmt("%.2e", worst_kkt) + ", max recovery gap " + fmt("%.2e", worst_rec) + " p.u.");
}

// 2. Interior point against exhaustive grid search.
Outcome small_instance_oracle() {
  std::mt19937_64 rng(202);
  std::size_t checked = 0, mismatched_status = 0;
  double worst = 0.0;
  while (checked < 20) {
    const auto c = parse_case(oracle::random_small_case(rng));
    const auto pd = demand(c);
    const Contingency none{"base", {}};
    const auto sol = solve(build_problem(c, none, pd));
    const auto grid = oracle::grid_search_ols(c, none, pd);
    if (!grid.feasible) {
      mismatched_status += sol.status == OlsStatus::optimal;
      continue;
    }
    if (sol.status != OlsStatus::optimal) {
      ++mismatched_status;
      ++checked;
      continue;
    }
    worst = std::max(worst, std::abs(sol.objective - grid.objective) / std::max(std::abs(grid.objective), 1e-6));
    ++checked;
  }
  return verdict(worst <= 1e-5 && mismatched_status == 0,
                 "20 instances, max relative objective gap " + fmt("%.2e", worst) + ", status disagreements " +
                     std::to_string(mismatched_status));
}

// 3. Generalized outage factors against re-solved DC flows.
Outcome lodf_oracle() {
  std::vector<NetworkCase> cases{parse_case_file(kData + "/case6.m")};
  if (have_118()) cases.push_back(parse_case_file(kData + "/case118.m"));
  std::vector<DenseMatrix> isf;
  for (const auto& c : cases) isf.push_back(isf_matrix(c));
  std::mt19937_64 rng(303);
  double worst_flow = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t ci = static_cast<std::size_t>(draw) % cases.size();
    const auto& c = cases[ci];
    const auto k = random_outage(rng, c);
    const auto p = random_balanced(rng, c);
    const auto sens = outage_sensitivity(c, k, &isf[ci]);
    const auto pre = solve_dc(c, p);
    const auto post = solve_dc(c, p, &k);
    std::vector<double> fk;
    for (int id : k.outaged_branches) fk.push_back(pre.flows[c.branch_index(id)]);
    const auto predicted = sens.d * fk;
    for (std::size_t l = 0; l < c.num_branches(); ++l)
      worst_flow = std::max(worst_flow, std::abs((post.flows[l] - pre.flows[l]) - predicted[l]));
  }
  double worst_single = 0.0;
  std::size_t singles = 0;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto& c = cases[ci];
    for (int id : in_service_ids(c)) {
      if (!check_connectivity(c, std::vector<int>{id})) continue;
      const auto s = outage_sensitivity(c, make_contingency("k", {id}), &isf[ci]);
      const auto classic = single_line_lodf(c, isf[ci], id);
      for (std::size_t l = 0; l < c.num_branches(); ++l) worst_single = std::max(worst_single, std::abs(s.d(l, 0) - classic[l]));
      ++singles;
    }
  }
  return verdict(worst_flow <= 1e-8 && worst_single <= 1e-10,
                 "100 draws, max flow error " + fmt("%.2e", worst_flow) + "; " + std::to_string(singles) +
                     " single lines, max factor difference " + fmt("%.2e", worst_single));
}

// 4. Local identifiability at bus 34 and a single-measurement bus.
Outcome identifiability() {
  if (!have_118()) return {Outcome::skip, "118-bus case not present"};
  const auto c = parse_case_file(kData + "/case118.m");
  const auto list = auto_contingencies(c, 3, 2, 0);
  const auto rep = check_set(c, c.bus_index(34), list, 1e-6);
  double worst_sigma = 0.0;
  std::size_t separated = 0;
  for (const auto& p : rep.pairs) {
    worst_sigma = std::max(worst_sigma, p.min_sigma);
    separated += p.identifiable;
  }

  // Bus 4 hangs off bus 3 by one branch: every pair of single outages looks alike.
  const auto radial = parse_case(R"(mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 100 1 1.1 0.9;
2 1 10 0 0 0 1 1 0 100 1 1.1 0.9;
3 1 10 0 0 0 1 1 0 100 1 1.1 0.9;
4 1 10 0 0 0 1 1 0 100 1 1.1 0.9;
];
mpc.gen = [1 30 0 10 -10 1 100 1 50 0;];
mpc.branch = [
1 2 0 0.1 0 0 0 0 0 0 1;
2 3 0 0.2 0 0 0 0 0 0 1;
1 3 0 0.3 0 0 0 0 0 0 1;
3 4 0 0.1 0 0 0 0 0 0 1;
];
)");
  const auto degenerate = check_set(radial, radial.bus_index(4),
                                    {make_contingency("L1", {1}), make_contingency("L2", {2}), make_contingency("L3", {3})});
  std::string names;
  for (const auto& k : list) names += (names.empty() ? "" : " ") + k.id;
  return verdict(rep.all_identifiable && !rep.pairs.empty() && !degenerate.all_identifiable,
                 "bus 34 over {" + names + "}: " + std::to_string(separated) + " of " + std::to_string(rep.pairs.size()) +
                     " pairs identifiable, largest min sigma " +
                     fmt("%.6f", worst_sigma) + "; single-measurement bus identifiable: " +
                     (degenerate.all_identifiable ? "yes" : "no"));
}

// 5. Contingency classifier at bus 34.
Outcome classification() {
  if (!have_118()) return {Outcome::skip, "118-bus case not present"};
  const auto cfg = load_config(kData + "/classifier118.cfg");
  validate_config(cfg);
  const auto c = parse_case_file(cfg.case_path);
  const auto ks = resolve_contingencies(c, cfg.contingency_spec);
  auto g = generation_options(cfg, c);
  g.buses = {c.bus_index(cfg.classifier_bus)};
  const auto ds = generate_dataset(c, ks, g);
  const auto r = train_classifier(ds.buses.at(0), train_options(cfg));
  return verdict(ks.size() == 5 && r.accuracy >= 0.99,
                 std::to_string(ks.size()) + " contingencies x " + std::to_string(cfg.samples_per_contingency) +
                     ", held-out accuracy " + fmt("%.4f", r.accuracy) + " on " + std::to_string(r.split.test.size()) +
                     " samples");
}

// 6. Per-bus regressors on the 118-bus case.
Outcome regression() {
  if (!have_118()) return {Outcome::skip, "118-bus case not present"};
  const auto cfg = load_config(kData + "/study118.cfg");
  validate_config(cfg);
  const auto c = parse_case_file(cfg.case_path);
  const auto ks = resolve_contingencies(c, cfg.contingency_spec);
  const auto ds = generate_dataset(c, ks, generation_options(cfg, c));
  const auto trained = train_all(c, ds.buses, train_options(cfg));
  std::vector<RegressionMetrics> rows;
  for (const auto& t : trained) rows.push_back(t.metrics);
  if (!g_out.empty()) {
    fs::create_directories(g_out);
    write_text_file((fs::path(g_out) / "regression_metrics.csv").string(), metrics_csv(rows));
    write_text_file((fs::path(g_out) / "regression_report.csv").string(), report_csv(rows));
  }
  const auto s = summarize(rows);
  const bool alpha_ok = s.mean_alpha_err_pct <= 2.0;
  const bool p_ok = s.mean_p_err <= 0.25;
  return verdict(alpha_ok && p_ok,
                 std::to_string(s.buses) + " buses; alpha error " + fmt("%.3f", s.mean_alpha_err_pct) + "% (limit 2%, " +
                     (alpha_ok ? "met" : "not met") + "); mean |p error| " + fmt("%.4f", s.mean_p_err) +
                     " MW (limit 0.25, " + (p_ok ? "met" : "not met") + "); max |p error| " + fmt("%.3f", s.max_p_err) +
                     " MW");
}

// 7. Backpropagation against central differences.
Outcome gradient() {
  std::mt19937_64 rng(707);
  std::normal_distribution<double> nd(0.0, 1.0);
  const Activation acts[] = {Activation::relu, Activation::tanh, Activation::linear};
  double worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; checked < 30 && trial < 500; ++trial) {
    std::vector<std::size_t> sizes{2 + rng() % 5};
    const std::size_t depth = 1 + rng() % 3;
    for (std::size_t l = 0; l < depth; ++l) sizes.push_back(2 + rng() % 6);
    sizes.push_back(1 + rng() % 3);
    const Activation act = acts[rng() % 3];
    Mlp net(sizes, act);
    net.initialize(rng());
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      for (std::size_t r = 0; r < sizes[l + 1]; ++r) net.b(l, r) = 0.1 * nd(rng);
    const std::size_t n = 3 + rng() % 6;
    std::vector<double> x(sizes.front() * n);
    for (double& v : x) v = nd(rng);
    if (act == Activation::relu && net.min_kink_margin(x, n) < 1e-3) continue;
    const bool softmax = sizes.back() >= 2 && rng() % 2;
    std::vector<double> t(softmax ? n : sizes.back() * n);
    for (double& v : t) v = softmax ? static_cast<double>(rng() % sizes.back()) : nd(rng);
    const double wd = rng() % 2 ? 1e-3 : 0.0;
    worst = std::max(worst, gradient_check(net, x, t, n, softmax ? LossKind::softmax_xent : LossKind::mse, wd));
    ++checked;
  }
  return verdict(checked == 30 && worst <= 1e-5,
                 std::to_string(checked) + " random networks, max relative error " + fmt("%.2e", worst));
}

/// Mismatch from a dense complex admittance matrix built here.
double independent_mismatch(const NetworkCase& c, const PowerFlowState& st, const std::vector<int>& outages) {
  using cd = std::complex<double>;
  const std::size_t n = c.num_buses();
  std::vector<std::vector<cd>> y(n, std::vector<cd>(n));
  for (const auto& br : c.branches) {
    if (!br.in_service || std::find(outages.begin(), outages.end(), br.id) != outages.end()) continue;
    const std::size_t f = c.bus_index(br.from_bus), t = c.bus_index(br.to_bus);
    const cd ys = 1.0 / cd(br.r, br.x), half(0.0, br.b_shunt / 2.0);
    y[f][f] += ys + half;
    y[t][t] += ys + half;
    y[f][t] -= ys;
    y[t][f] -= ys;
  }
  for (std::size_t i = 0; i < n; ++i) y[i][i] += cd(c.buses[i].g_shunt, c.buses[i].b_shunt) / c.base_mva;
  std::vector<cd> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::polar(st.v_mag[i], st.v_ang[i]);
  std::vector<double> pg(n, 0.0);
  std::vector<char> has_gen(n, 0);
  for (const auto& g : c.generators)
    if (g.in_service) {
      pg[c.bus_index(g.bus)] += g.p_out;
      has_gen[c.bus_index(g.bus)] = 1;
    }
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == c.slack_index()) continue;
    cd current = 0.0;
    for (std::size_t j = 0; j < n; ++j) current += y[i][j] * v[j];
    const cd s = v[i] * std::conj(current);
    worst = std::max(worst, std::abs(s.real() - (pg[i] - c.buses[i].p_demand) / c.base_mva));
    if (!(c.buses[i].kind == BusKind::pv && has_gen[i]))
      worst = std::max(worst, std::abs(s.imag() + c.buses[i].q_demand / c.base_mva));
  }
  return worst;
}

// 8. AC mismatch and DC nodal balance.
Outcome power_flow() {
  std::vector<NetworkCase> cases{parse_case_file(kData + "/case6.m")};
  if (have_118()) cases.push_back(parse_case_file(kData + "/case118.m"));
  std::mt19937_64 rng(808);
  std::size_t states = 0, not_converged = 0;
  double worst_ac = 0.0, worst_dc = 0.0;
  for (const auto& c : cases) {
    std::vector<std::vector<int>> outages{{}};
    for (int id : in_service_ids(c))
      if (outages.size() < 40 && check_connectivity(c, std::vector<int>{id})) outages.push_back({id});
    for (int d = 0; d < 10; ++d) outages.push_back(random_outage(rng, c).outaged_branches);
    for (const auto& o : outages) {
      const auto k = make_contingency("k", o);
      const auto st = solve_ac(c, o.empty() ? nullptr : &k);
      if (st.converged) {
        ++states;
        worst_ac = std::max(worst_ac, independent_mismatch(c, st, o));
      } else {
        ++not_converged;
      }
      const auto p = random_balanced(rng, c);
      const auto dc = solve_dc(c, p, o.empty() ? nullptr : &k);
      std::vector<double> net(c.num_buses(), 0.0);
      for (std::size_t l = 0; l < c.num_branches(); ++l) {
        net[c.bus_index(c.branches[l].from_bus)] += dc.flows[l];
        net[c.bus_index(c.branches[l].to_bus)] -= dc.flows[l];
      }
      for (std::size_t i = 0; i < net.size(); ++i) worst_dc = std::max(worst_dc, std::abs(net[i] - p[i]));
    }
  }
  return verdict(states > 0 && worst_ac <= 1e-8 && worst_dc <= 1e-10,
                 std::to_string(states) + " converged AC states (" + std::to_string(not_converged) +
                     " not converged), max mismatch " + fmt("%.2e", worst_ac) + " p.u.; max DC imbalance " +
                     fmt("%.2e", worst_dc) + " p.u.");
}

struct PipelineResult {
  std::string hash, metrics, models;
};

PipelineResult run_pipeline(const StudyConfig& cfg, unsigned workers) {
  const auto c = parse_case_file(cfg.case_path);
  const auto ks = resolve_contingencies(c, cfg.contingency_spec);
  auto g = generation_options(cfg, c);
  g.workers = workers;
  const auto ds = generate_dataset(c, ks, g);
  const auto trained = train_all(c, ds.buses, train_options(cfg), workers);
  PipelineResult r;
  r.hash = hex64(dataset_hash(ds.buses));
  std::vector<RegressionMetrics> rows;
  for (const auto& t : trained) {
    rows.push_back(t.metrics);
    r.models += serialize_model(t.model);
  }
  r.metrics = metrics_csv(rows);
  return r;
}

// 9. Same seed, different worker counts.
Outcome determinism() {
  std::vector<StudyConfig> studies{load_config(kData + "/study6.cfg")};
  if (have_118()) {
    auto cfg = parse_config("case = case118.m\ncontingencies = auto(2, 1, 0)\nsamples_per_contingency = 60\n"
                            "buses = 34, 91, 117\nhidden = 16, 8\nepochs = 40\nseed = 9\n",
                            kData);
    studies.push_back(cfg);
  }
  std::string detail;
  bool ok = true;
  for (const auto& cfg : studies) {
    validate_config(cfg);
    const auto a = run_pipeline(cfg, 1);
    const auto b = run_pipeline(cfg, 4);
    const bool same = a.hash == b.hash && a.metrics == b.metrics && a.models == b.models;
    ok = ok && same;
    detail += (detail.empty() ? "" : "; ") + fs::path(cfg.case_path).stem().string() + " hash " + a.hash +
              (same ? " identical" : " DIFFERS (" + b.hash + ")") + " with 1 and 4 workers";
  }
  return verdict(ok, detail + ", metrics and models identical: " + (ok ? "yes" : "no"));
}

struct Criterion {
  int number;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--only" && a + 1 < argc) {
      for (const auto& tok : detail::split_list(argv[++a])) only.insert(std::stoi(tok));
    } else if (arg == "--out" && a + 1 < argc) {
      g_out = argv[++a];
    } else {
      std::cerr << "usage: acceptance [--only N[,M...]] [--out DIR]\n";
      return 2;
    }
  }
  const std::vector<Criterion> criteria{
      {1, "solver correctness", 120, solver_correctness},
      {2, "small-instance oracle", 60, small_instance_oracle},
      {3, "outage factor oracle", 60, lodf_oracle},
      {4, "identifiability", 60, identifiability},
      {5, "classification", 600, classification},
      {6, "regression", 1800, regression},
      {7, "gradient check", 30, gradient},
      {8, "power-flow residuals", 30, power_flow},
      {9, "determinism", 0, determinism},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    if (!only.empty() && !only.count(cr.number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {Outcome::fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.kind != Outcome::skip && cr.budget_s > 0 && secs > cr.budget_s) {
      o.kind = Outcome::fail;
      o.detail += "; over the " + fmt("%.0f", cr.budget_s) + " s budget";
    }
    const char* tag = o.kind == Outcome::pass ? "PASS" : o.kind == Outcome::fail ? "FAIL" : "SKIP";
    std::printf("criterion %d %s %s: %s [%.1f s]\n", cr.number, tag, cr.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.kind == Outcome::fail;
  }
  return failed ? 1 : 0;
}
