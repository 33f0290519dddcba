#pragma once

// Offline sample generation: perturbed demand -> pre/post AC power flow
// (features) -> DC load-shedding optimum (labels), one dataset per bus.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lshed/features.hpp"
#include "lshed/ols.hpp"
#include "lshed/parallel.hpp"

namespace lshed {

/// Labels (alpha in $/MWh, flexibility in MW) below this magnitude are stored as 0.
inline constexpr double kLabelResolution = 1e-6;

struct LabeledSample {
  std::vector<double> x;
  double p_shed = 0.0;  // MW, optimal flexibility at the bus
  double label = 0.0;   // alpha, $/MWh
  std::string contingency;
  std::uint64_t seed = 0;
};

struct BusDataset {
  int bus = 0;
  std::vector<std::string> names;
  std::vector<LabeledSample> samples;
};

struct GenerationOptions {
  std::size_t samples_per_contingency = 300;
  double perturb_lo = 0.95, perturb_hi = 1.05;
  std::uint64_t master_seed = 1;
  double f0 = 60.0, k_sys = 1.0;
  bool solve_ols = true;
  bool enforce_q_limits = false;
  double max_failure_rate = 0.1;
  std::vector<std::size_t> buses;  // bus indices, empty = all load buses
  unsigned workers = 0;            // 0 = worker_count()
};

struct ContingencyLog {
  std::string id;
  std::size_t attempted = 0, ac_failed = 0, ols_failed = 0;
};

struct Dataset {
  std::vector<BusDataset> buses;
  std::vector<ContingencyLog> log;
};

/// Per-bus demand multipliers of sample k under contingency j.
inline std::vector<double> sample_multipliers(const NetworkCase& c, const GenerationOptions& opt, std::size_t j,
                                              std::size_t k, std::uint64_t* seed_out = nullptr) {
  const std::uint64_t seed = derive_seed(opt.master_seed, j, k);
  if (seed_out) *seed_out = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(opt.perturb_lo, opt.perturb_hi);
  std::vector<double> m(c.num_buses());
  for (double& v : m) v = opt.perturb_lo == opt.perturb_hi ? opt.perturb_lo : u(rng);
  return m;
}

inline Dataset generate_dataset(const NetworkCase& c, const std::vector<Contingency>& contingencies,
                                const GenerationOptions& opt) {
  if (opt.perturb_lo > opt.perturb_hi) throw ValidationError("perturbation range is inverted");
  for (const auto& k : contingencies) {
    validate_contingency(c, k);
    if (!check_connectivity(c, k)) throw IslandingError("contingency '" + k.id + "' islands the network");
  }
  std::vector<std::size_t> buses = opt.buses.empty() ? c.load_buses() : opt.buses;

  struct Slot {
    bool ok = false;
    bool ac_failed = false;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> x;  // per selected bus
    std::vector<double> alpha, p_shed;
  };
  const std::size_t per = opt.samples_per_contingency;
  std::vector<Slot> slots(contingencies.size() * per);

  parallel_for(slots.size(), [&](std::size_t s) {
    const std::size_t j = s / per, k = s % per;
    Slot& slot = slots[s];
    const auto mult = sample_multipliers(c, opt, j, k, &slot.seed);
    const NetworkCase sc = scaled_case(c, mult);
    AcOptions ac;
    ac.enforce_q_limits = opt.enforce_q_limits;
    const auto pre = solve_ac(sc, nullptr, ac);
    if (!pre.converged) {
      slot.ac_failed = true;
      return;
    }
    ac.warm_start = &pre;
    const auto post = solve_ac(sc, &contingencies[j], ac);
    if (!post.converged) {
      slot.ac_failed = true;
      return;
    }
    const double omega_post = frequency_proxy(pre, post, opt.f0, opt.k_sys);
    std::vector<double> alpha(c.num_buses(), 0.0), shed(c.num_buses(), 0.0);
    if (opt.solve_ols) {
      std::vector<double> pd;
      for (const auto& b : sc.buses) pd.push_back(b.p_demand);
      const auto pb = build_problem(c, contingencies[j], pd);
      const auto sol = solve(pb);
      if (sol.status != OlsStatus::optimal) return;
      alpha = sol.alpha;
      shed = sol.p_shed_total;
      // Interior-point residue at active bounds is not signal.
      for (double& v : alpha) v = std::abs(v) < kLabelResolution ? 0.0 : v;
      for (double& v : shed) v = std::abs(v) < kLabelResolution ? 0.0 : v;
    }
    for (std::size_t b : buses) {
      slot.x.push_back(build_features(sc, b, pre, post, opt.f0, omega_post, contingencies[j].outaged_branches));
      slot.alpha.push_back(alpha[b]);
      slot.p_shed.push_back(shed[b]);
    }
    slot.ok = true;
  }, opt.workers ? opt.workers : worker_count());

  Dataset ds;
  for (std::size_t b : buses) ds.buses.push_back({c.buses[b].id, feature_names(c, b), {}});
  for (std::size_t j = 0; j < contingencies.size(); ++j) {
    ContingencyLog lg{contingencies[j].id, per, 0, 0};
    for (std::size_t k = 0; k < per; ++k) {
      Slot& slot = slots[j * per + k];
      if (!slot.ok) {
        (slot.ac_failed ? lg.ac_failed : lg.ols_failed)++;
        continue;
      }
      for (std::size_t b = 0; b < buses.size(); ++b)
        ds.buses[b].samples.push_back(
            {std::move(slot.x[b]), slot.p_shed[b], slot.alpha[b], contingencies[j].id, slot.seed});
    }
    if (per > 0 && static_cast<double>(lg.ac_failed + lg.ols_failed) > opt.max_failure_rate * static_cast<double>(per)) {
      std::ostringstream msg;
      msg << "contingency '" << lg.id << "': " << lg.ac_failed << " power-flow and " << lg.ols_failed
          << " optimization failures out of " << per << " samples";
      throw NumericalError(msg.str());
    }
    ds.log.push_back(lg);
  }
  return ds;
}

namespace detail {
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// CSV: feature columns, then p_shed_mw, label, contingency_id, seed.
inline std::string dataset_csv(const BusDataset& d) {
  std::ostringstream o;
  for (const auto& n : d.names) o << n << ',';
  o << "p_shed_mw,label,contingency_id,seed\n";
  for (const auto& s : d.samples) {
    for (double v : s.x) o << detail::fmt17(v) << ',';
    o << detail::fmt17(s.p_shed) << ',' << detail::fmt17(s.label) << ',' << s.contingency << ',' << s.seed << '\n';
  }
  return o.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_csv_number(const std::string& tok, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "bad number '" + tok + "'");
  }
}

inline BusDataset parse_dataset_csv(const std::string& text, int bus_id) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty dataset file");
  auto header = split_csv_line(line);
  if (header.size() < 5 || header[header.size() - 4] != "p_shed_mw" || header[header.size() - 3] != "label" ||
      header[header.size() - 2] != "contingency_id" || header.back() != "seed")
    throw ParseError(1, "dataset header must end with p_shed_mw,label,contingency_id,seed");
  BusDataset d;
  d.bus = bus_id;
  d.names.assign(header.begin(), header.end() - 4);
  const std::size_t nf = d.names.size();
  int ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    auto tok = split_csv_line(line);
    if (tok.size() != nf + 4) throw ParseError(ln, "expected " + std::to_string(nf + 4) + " columns");
    LabeledSample s;
    for (std::size_t i = 0; i < nf; ++i) s.x.push_back(parse_csv_number(tok[i], ln));
    s.p_shed = parse_csv_number(tok[nf], ln);
    s.label = parse_csv_number(tok[nf + 1], ln);
    s.contingency = tok[nf + 2];
    try {
      s.seed = std::stoull(tok[nf + 3]);
    } catch (const std::exception&) {
      throw ParseError(ln, "bad seed '" + tok[nf + 3] + "'");
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

/// 64-bit FNV-1a, used to fingerprint output files.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace lshed
