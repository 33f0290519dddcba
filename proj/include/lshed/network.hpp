#pragma once

// Grid case model and its ingestion from MATPOWER-style case text.
//
// Supported text subset (see docs/case_format.md for column tables):
//   mpc.baseMVA = <value>;
//   mpc.bus = [ ... ];  mpc.branch = [ ... ];  mpc.gen = [ ... ];
//   mpc.gencost = [ ... ];   (optional, polynomial model 2 only)
//   mpc.flexcost = [ ... ];  (optional)
// Rows are whitespace separated numbers terminated by ';' or a newline.
// '%' starts a comment. Other assignments and cell arrays are skipped.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lshed/error.hpp"
#include "lshed/numerics.hpp"

namespace lshed {

enum class BusKind { slack, pv, pq };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double p_demand = 0.0;  // MW
  double q_demand = 0.0;  // MVAr
  double g_shunt = 0.0;   // MW at 1 p.u.
  double b_shunt = 0.0;   // MVAr at 1 p.u.
  double v_setpoint = 1.0;
  double v_angle_deg = 0.0;  // case-file initial angle, informational
  double v_min = 0.9;
  double v_max = 1.1;
  double angle_min = -std::numbers::pi;
  double angle_max = std::numbers::pi;
  friend bool operator==(const Bus&, const Bus&) = default;
};

struct Branch {
  int id = 0;  // 1-based row order in the case file
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_shunt = 0.0;  // total line charging, p.u.
  double flow_limit = std::numeric_limits<double>::infinity();  // MVA, inf = unlimited
  bool in_service = true;
  bool has_limit() const noexcept { return std::isfinite(flow_limit); }
  friend bool operator==(const Branch&, const Branch&) = default;
};

struct Generator {
  int bus = 0;
  double p_out = 0.0;  // MW
  double q_out = 0.0;  // MVAr
  double q_max = 0.0;
  double q_min = 0.0;
  double v_setpoint = 1.0;
  double p_max = 0.0;
  double p_min = 0.0;
  bool in_service = true;
  // Polynomial production cost c2*P^2 + c1*P + c0 ($/h, P in MW), if given.
  std::optional<std::array<double, 3>> cost;
  friend bool operator==(const Generator&, const Generator&) = default;
};

/// Piecewise-quadratic flexibility cost of one bus: a1*p^2 on the reserve band
/// [reserve_down, reserve_up], a2*p^2 + b2*p + c2 above it up to
/// reserve_up + sheddable_cap. Units are MW and $/h.
struct FlexibilityCost {
  int bus = 0;
  double a1 = 0.0;
  double a2 = 0.0;
  double b2 = 0.0;
  double c2 = 0.0;
  double reserve_down = 0.0;
  double reserve_up = 0.0;
  double sheddable_cap = 0.0;
  double q_reserve_down = 0.0;
  double q_reserve_up = 0.0;

  double value(double p) const {
    if (p <= reserve_up) return a1 * p * p;
    return a2 * p * p + b2 * p + c2;
  }
  /// Marginal cost of the shedding piece at its start.
  double kink_marginal() const { return 2.0 * a2 * reserve_up + b2; }
  double upper_limit() const { return reserve_up + sheddable_cap; }
  friend bool operator==(const FlexibilityCost&, const FlexibilityCost&) = default;
};

/// Choices used to fill in FlexibilityCost for buses without a flexcost row.
struct FlexDefaults {
  double shed_fraction = 0.9;
  double a2_over_a1 = 4.0;
  double b2 = 0.0;
  double fallback_a1 = 0.01;  // $/MW^2h, used when the case has no gencost
};

inline void validate_cost(const FlexibilityCost& c, double p_demand) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("flexibility cost of bus " + std::to_string(c.bus) + ": " + what);
  };
  if (!(c.a1 > 0.0) || !(c.a2 > 0.0)) fail("a1 and a2 must be positive");
  if (c.reserve_down > 0.0) fail("reserve_down must be <= 0");
  if (c.reserve_up < 0.0) fail("reserve_up must be >= 0");
  if (c.sheddable_cap < 0.0) fail("sheddable_cap must be >= 0");
  if (c.sheddable_cap > std::max(p_demand, 0.0) * (1.0 + 1e-12) + 1e-9) fail("sheddable_cap exceeds the bus demand");
  const double r = c.reserve_up;
  const double left = c.a1 * r * r;
  const double right = c.a2 * r * r + c.b2 * r + c.c2;
  if (std::abs(left - right) > 1e-9 * std::max(1.0, std::abs(left))) fail("cost is discontinuous at reserve_up");
  if (2.0 * c.a1 * r > c.kink_marginal() + 1e-12 * std::max(1.0, std::abs(c.kink_marginal())))
    fail("reserve marginal cost exceeds shedding marginal cost at reserve_up");
}

class NetworkCase {
 public:
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<FlexibilityCost> costs;  // one per bus, same order as buses

  std::size_t num_buses() const noexcept { return buses.size(); }
  std::size_t num_branches() const noexcept { return branches.size(); }

  std::size_t bus_index(int id) const {
    auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end()) throw ValidationError("unknown bus " + std::to_string(id));
    return it->second;
  }
  bool has_bus(int id) const { return bus_lookup_.count(id) != 0; }

  std::size_t branch_index(int id) const {
    if (id < 1 || static_cast<std::size_t>(id) > branches.size())
      throw ValidationError("unknown branch " + std::to_string(id));
    return static_cast<std::size_t>(id - 1);
  }

  std::size_t slack_index() const { return slack_; }

  /// In-service branch ids incident to bus index `i`, ascending.
  const std::vector<int>& incident_branches(std::size_t i) const { return adjacency_.at(i); }

  std::vector<int> neighbors(std::size_t i) const {
    std::vector<int> out;
    for (int br : adjacency_.at(i)) {
      const auto& b = branches[branch_index(br)];
      out.push_back(b.from_bus == buses[i].id ? b.to_bus : b.from_bus);
    }
    return out;
  }

  /// Buses with positive active demand, the load centers.
  std::vector<std::size_t> load_buses() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].p_demand > 0.0) out.push_back(i);
    return out;
  }

  /// Generators able to change active output (p_max > 0).
  std::size_t num_active_generators() const {
    return static_cast<std::size_t>(std::count_if(generators.begin(), generators.end(),
                                                  [](const Generator& g) { return g.in_service && g.p_max > 0.0; }));
  }

  /// Net scheduled generation per bus in MW (in-service units only).
  std::vector<double> bus_generation_mw() const {
    std::vector<double> out(buses.size(), 0.0);
    for (const auto& g : generators)
      if (g.in_service) out[bus_index(g.bus)] += g.p_out;
    return out;
  }

  /// Rebuilds lookups and adjacency after the public vectors are edited, and
  /// checks referential integrity.
  void finalize() {
    bus_lookup_.clear();
    std::size_t slack_count = 0;
    for (std::size_t i = 0; i < buses.size(); ++i) {
      const auto& b = buses[i];
      if (!bus_lookup_.emplace(b.id, i).second) throw ValidationError("duplicate bus id " + std::to_string(b.id));
      if (b.v_min > b.v_max) throw ValidationError("bus " + std::to_string(b.id) + ": v_min > v_max");
      if (!std::isfinite(b.p_demand) || !std::isfinite(b.q_demand))
        throw ValidationError("bus " + std::to_string(b.id) + ": non-finite demand");
      if (b.kind == BusKind::slack) {
        slack_ = i;
        ++slack_count;
      }
    }
    if (slack_count == 0) throw ValidationError("case has no slack bus");
    if (slack_count > 1) throw ValidationError("case has more than one slack bus");
    adjacency_.assign(buses.size(), {});
    for (std::size_t k = 0; k < branches.size(); ++k) {
      auto& br = branches[k];
      br.id = static_cast<int>(k + 1);
      if (!has_bus(br.from_bus))
        throw ValidationError("branch " + std::to_string(br.id) + " references unknown bus " + std::to_string(br.from_bus));
      if (!has_bus(br.to_bus))
        throw ValidationError("branch " + std::to_string(br.id) + " references unknown bus " + std::to_string(br.to_bus));
      if (br.from_bus == br.to_bus) throw ValidationError("branch " + std::to_string(br.id) + " is a self loop");
      if (br.x == 0.0) throw ValidationError("branch " + std::to_string(br.id) + " has zero reactance");
      if (!(br.flow_limit > 0.0)) throw ValidationError("branch " + std::to_string(br.id) + " has non-positive flow limit");
      if (!br.in_service) continue;
      adjacency_[bus_index(br.from_bus)].push_back(br.id);
      adjacency_[bus_index(br.to_bus)].push_back(br.id);
    }
    for (const auto& g : generators) {
      if (!has_bus(g.bus)) throw ValidationError("generator references unknown bus " + std::to_string(g.bus));
      if (g.p_min > g.p_out + 1e-9 || g.p_out > g.p_max + 1e-9)
        throw ValidationError("generator at bus " + std::to_string(g.bus) + " violates p_min <= p_out <= p_max");
    }
    if (costs.size() != buses.size()) throw ValidationError("one flexibility cost per bus is required");
    for (std::size_t i = 0; i < buses.size(); ++i) {
      if (costs[i].bus != buses[i].id) throw ValidationError("flexibility costs out of bus order");
      validate_cost(costs[i], buses[i].p_demand);
    }
  }

  friend bool operator==(const NetworkCase& a, const NetworkCase& b) {
    return a.base_mva == b.base_mva && a.buses == b.buses && a.branches == b.branches &&
           a.generators == b.generators && a.costs == b.costs;
  }

 private:
  std::unordered_map<int, std::size_t> bus_lookup_;
  std::vector<std::vector<int>> adjacency_;
  std::size_t slack_ = 0;
};

/// Default flexibility for one bus. Reserve bands come from the headroom of
/// the attached generators; a1 from their quadratic cost (parallel
/// combination when several units share a bus); the shedding piece uses
/// a2 = ratio * a1, the configured b2, and c2 solved from continuity.
inline FlexibilityCost default_cost(const NetworkCase& c, std::size_t bus_idx, double system_a1,
                                    const FlexDefaults& d) {
  const Bus& bus = c.buses[bus_idx];
  FlexibilityCost f;
  f.bus = bus.id;
  double inv_a_sum = 0.0;
  bool any_cost = false;
  for (const auto& g : c.generators) {
    if (!g.in_service || g.bus != bus.id) continue;
    f.reserve_up += g.p_max - g.p_out;
    f.reserve_down += g.p_min - g.p_out;
    f.q_reserve_up += g.q_max - g.q_out;
    f.q_reserve_down += g.q_min - g.q_out;
    if (g.p_max > g.p_min && g.cost && (*g.cost)[0] > 0.0) {
      inv_a_sum += 1.0 / (*g.cost)[0];
      any_cost = true;
    }
  }
  f.reserve_up = std::max(f.reserve_up, 0.0);
  f.reserve_down = std::min(f.reserve_down, 0.0);
  f.a1 = any_cost ? 1.0 / inv_a_sum : system_a1;
  f.a2 = d.a2_over_a1 * f.a1;
  f.b2 = d.b2;
  const double r = f.reserve_up;
  f.c2 = f.a1 * r * r - f.a2 * r * r - f.b2 * r;
  f.sheddable_cap = bus.p_demand > 0.0 ? d.shed_fraction * bus.p_demand : 0.0;
  return f;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline double parse_number(std::string_view tok, int line) {
  if (tok == "Inf" || tok == "inf") return std::numeric_limits<double>::infinity();
  if (tok == "-Inf" || tok == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, "malformed number '" + std::string(tok) + "'");
  return v;
}

struct RawTable {
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;
};

inline void need_cols(const RawTable& t, std::size_t k, std::size_t n, const char* section) {
  if (t.rows[k].size() < n)
    throw ParseError(t.lines[k], std::string(section) + " row needs at least " + std::to_string(n) + " columns");
}

}  // namespace detail

inline NetworkCase parse_case(std::string_view text, const FlexDefaults& defaults = {}) {
  using detail::RawTable;
  std::map<std::string, RawTable> tables;
  std::optional<double> base_mva;

  std::string current;  // name of the open matrix, empty when none
  bool skipping_cell = false;
  int line_no = 0;
  std::size_t pos = 0;
  auto handle_row_text = [&](std::string_view body, int ln) {
    // Rows may be split by ';' inside one line.
    std::size_t start = 0;
    while (start <= body.size()) {
      std::size_t semi = body.find(';', start);
      std::string_view piece = body.substr(start, semi == std::string_view::npos ? std::string_view::npos : semi - start);
      piece = detail::trim(piece);
      if (!piece.empty()) {
        std::vector<double> row;
        std::size_t i = 0;
        while (i < piece.size()) {
          while (i < piece.size() && (std::isspace(static_cast<unsigned char>(piece[i])) || piece[i] == ',')) ++i;
          std::size_t j = i;
          while (j < piece.size() && !std::isspace(static_cast<unsigned char>(piece[j])) && piece[j] != ',') ++j;
          if (j > i) row.push_back(detail::parse_number(piece.substr(i, j - i), ln));
          i = j;
        }
        auto& t = tables[current];
        t.rows.push_back(std::move(row));
        t.lines.push_back(ln);
      }
      if (semi == std::string_view::npos) break;
      start = semi + 1;
    }
  };

  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (auto pct = raw.find('%'); pct != std::string_view::npos) raw = raw.substr(0, pct);
    std::string_view line = detail::trim(raw);
    if (line.empty()) continue;

    if (skipping_cell) {
      if (line.find('}') != std::string_view::npos) skipping_cell = false;
      continue;
    }
    if (!current.empty()) {
      auto close = line.find(']');
      handle_row_text(line.substr(0, close), line_no);
      if (close != std::string_view::npos) current.clear();
      continue;
    }
    if (line.rfind("function", 0) == 0) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected an assignment, got '" + std::string(line) + "'");
    std::string_view lhs = detail::trim(line.substr(0, eq));
    std::string_view rhs = detail::trim(line.substr(eq + 1));
    if (lhs.rfind("mpc.", 0) == 0) lhs.remove_prefix(4);
    std::string name(lhs);
    if (!rhs.empty() && rhs.front() == '{') {
      if (rhs.find('}') == std::string_view::npos) skipping_cell = true;
      continue;
    }
    if (!rhs.empty() && rhs.front() == '[') {
      rhs.remove_prefix(1);
      current = name;
      tables[current];  // materialize even if empty
      auto close = rhs.find(']');
      handle_row_text(rhs.substr(0, close), line_no);
      if (close != std::string_view::npos) current.clear();
      continue;
    }
    if (name == "baseMVA") {
      std::string_view v = rhs;
      if (!v.empty() && v.back() == ';') v.remove_suffix(1);
      base_mva = detail::parse_number(detail::trim(v), line_no);
      continue;
    }
    // Other scalar or string assignments (version, etc.) are ignored.
  }
  if (!current.empty()) throw ParseError(line_no, "unterminated matrix '" + current + "'");
  if (!base_mva) throw ParseError(line_no, "missing baseMVA");
  if (!(*base_mva > 0.0)) throw ParseError(line_no, "baseMVA must be positive");
  for (const char* required : {"bus", "branch", "gen"})
    if (!tables.count(required)) throw ParseError(line_no, std::string("missing section '") + required + "'");

  NetworkCase c;
  c.base_mva = *base_mva;

  const auto& bt = tables["bus"];
  for (std::size_t k = 0; k < bt.rows.size(); ++k) {
    detail::need_cols(bt, k, 13, "bus");
    const auto& r = bt.rows[k];
    Bus b;
    b.id = static_cast<int>(r[0]);
    if (b.id <= 0 || r[0] != b.id) throw ParseError(bt.lines[k], "bus id must be a positive integer");
    switch (static_cast<int>(r[1])) {
      case 1: b.kind = BusKind::pq; break;
      case 2: b.kind = BusKind::pv; break;
      case 3: b.kind = BusKind::slack; break;
      default: throw ParseError(bt.lines[k], "unsupported bus type " + std::to_string(r[1]));
    }
    b.p_demand = r[2];
    b.q_demand = r[3];
    b.g_shunt = r[4];
    b.b_shunt = r[5];
    b.v_setpoint = r[7];
    b.v_angle_deg = r[8];
    b.v_max = r[11];
    b.v_min = r[12];
    c.buses.push_back(b);
  }
  {
    std::set<int> seen;
    for (std::size_t k = 0; k < c.buses.size(); ++k)
      if (!seen.insert(c.buses[k].id).second)
        throw ParseError(bt.lines[k], "duplicate bus id " + std::to_string(c.buses[k].id));
  }

  const auto& brt = tables["branch"];
  for (std::size_t k = 0; k < brt.rows.size(); ++k) {
    detail::need_cols(brt, k, 11, "branch");
    const auto& r = brt.rows[k];
    Branch br;
    br.id = static_cast<int>(k + 1);
    br.from_bus = static_cast<int>(r[0]);
    br.to_bus = static_cast<int>(r[1]);
    br.r = r[2];
    br.x = r[3];
    br.b_shunt = r[4];
    br.flow_limit = r[5] == 0.0 ? std::numeric_limits<double>::infinity() : r[5];
    br.in_service = r[10] != 0.0;
    if (br.x == 0.0) throw ParseError(brt.lines[k], "branch " + std::to_string(br.id) + " has zero reactance");
    c.branches.push_back(br);
  }

  const auto& gt = tables["gen"];
  for (std::size_t k = 0; k < gt.rows.size(); ++k) {
    detail::need_cols(gt, k, 10, "gen");
    const auto& r = gt.rows[k];
    Generator g;
    g.bus = static_cast<int>(r[0]);
    g.p_out = r[1];
    g.q_out = r[2];
    g.q_max = r[3];
    g.q_min = r[4];
    g.v_setpoint = r[5];
    g.in_service = r[7] > 0.0;
    g.p_max = r[8];
    g.p_min = r[9];
    c.generators.push_back(g);
  }

  if (tables.count("gencost")) {
    const auto& ct = tables["gencost"];
    if (ct.rows.size() != c.generators.size() && ct.rows.size() != 2 * c.generators.size())
      throw ParseError(ct.lines.empty() ? line_no : ct.lines[0], "gencost must have one row per generator");
    for (std::size_t k = 0; k < c.generators.size(); ++k) {
      detail::need_cols(ct, k, 4, "gencost");
      const auto& r = ct.rows[k];
      if (r[0] != 2.0) throw ParseError(ct.lines[k], "only polynomial gencost (model 2) is supported");
      const auto n = static_cast<std::size_t>(r[3]);
      if (n > 3 || r.size() < 4 + n) throw ParseError(ct.lines[k], "gencost polynomial must have at most 3 terms");
      std::array<double, 3> coef{0.0, 0.0, 0.0};
      for (std::size_t t = 0; t < n; ++t) coef[3 - n + t] = r[4 + t];
      c.generators[k].cost = coef;
    }
  }

  for (const auto& br : c.branches) {
    bool from_ok = false, to_ok = false;
    for (const auto& b : c.buses) {
      from_ok |= b.id == br.from_bus;
      to_ok |= b.id == br.to_bus;
    }
    if (!from_ok || !to_ok) {
      const int missing = from_ok ? br.to_bus : br.from_bus;
      throw ParseError(brt.lines[static_cast<std::size_t>(br.id - 1)],
                       "branch " + std::to_string(br.id) + " references unknown bus " + std::to_string(missing));
    }
  }
  if (std::none_of(c.buses.begin(), c.buses.end(), [](const Bus& b) { return b.kind == BusKind::slack; }))
    throw ParseError(bt.lines.empty() ? line_no : bt.lines.back(), "case has no slack bus");

  // Flexibility costs: explicit rows first, defaults for the rest.
  double a_sum = 0.0;
  int a_count = 0;
  for (const auto& g : c.generators)
    if (g.in_service && g.p_max > g.p_min && g.cost && (*g.cost)[0] > 0.0) {
      a_sum += (*g.cost)[0];
      ++a_count;
    }
  const double system_a1 = a_count ? a_sum / a_count : defaults.fallback_a1;

  std::map<int, FlexibilityCost> explicit_costs;
  if (tables.count("flexcost")) {
    const auto& ft = tables["flexcost"];
    for (std::size_t k = 0; k < ft.rows.size(); ++k) {
      detail::need_cols(ft, k, 8, "flexcost");
      const auto& r = ft.rows[k];
      FlexibilityCost f;
      f.bus = static_cast<int>(r[0]);
      f.a1 = r[1];
      f.a2 = r[2];
      f.b2 = r[3];
      f.c2 = r[4];
      f.reserve_down = r[5];
      f.reserve_up = r[6];
      f.sheddable_cap = r[7];
      if (r.size() >= 10) {
        f.q_reserve_down = r[8];
        f.q_reserve_up = r[9];
      }
      if (!explicit_costs.emplace(f.bus, f).second)
        throw ParseError(ft.lines[k], "duplicate flexcost row for bus " + std::to_string(f.bus));
    }
  }
  // Lookups are needed by default_cost, so finalize topology first with
  // placeholder costs and then fill them in.
  c.costs.clear();
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    FlexibilityCost placeholder;
    placeholder.bus = c.buses[i].id;
    placeholder.a1 = placeholder.a2 = 1.0;
    c.costs.push_back(placeholder);
  }
  c.finalize();
  for (std::size_t i = 0; i < c.buses.size(); ++i) {
    auto it = explicit_costs.find(c.buses[i].id);
    if (it != explicit_costs.end()) {
      c.costs[i] = it->second;
      explicit_costs.erase(it);
    } else {
      c.costs[i] = default_cost(c, i, system_a1, defaults);
    }
  }
  if (!explicit_costs.empty())
    throw ValidationError("flexcost row references unknown bus " + std::to_string(explicit_costs.begin()->first));
  c.finalize();
  return c;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline NetworkCase parse_case_file(const std::string& path, const FlexDefaults& defaults = {}) {
  return parse_case(read_text_file(path), defaults);
}

namespace detail {
inline std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Writes the case back in the same text subset, with every flexibility cost
/// spelled out so re-parsing reproduces the model exactly.
inline std::string serialize_case(const NetworkCase& c) {
  using detail::fmt_num;
  std::ostringstream o;
  o << "function mpc = lshed_case\n";
  o << "mpc.version = '2';\n";
  o << "mpc.baseMVA = " << fmt_num(c.base_mva) << ";\n\n";
  o << "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\n";
  o << "mpc.bus = [\n";
  for (const auto& b : c.buses) {
    const int type = b.kind == BusKind::slack ? 3 : (b.kind == BusKind::pv ? 2 : 1);
    o << "\t" << b.id << "\t" << type << "\t" << fmt_num(b.p_demand) << "\t" << fmt_num(b.q_demand) << "\t"
      << fmt_num(b.g_shunt) << "\t" << fmt_num(b.b_shunt) << "\t1\t" << fmt_num(b.v_setpoint) << "\t"
      << fmt_num(b.v_angle_deg) << "\t0\t1\t" << fmt_num(b.v_max) << "\t" << fmt_num(b.v_min) << ";\n";
  }
  o << "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\n";
  o << "mpc.branch = [\n";
  for (const auto& br : c.branches) {
    o << "\t" << br.from_bus << "\t" << br.to_bus << "\t" << fmt_num(br.r) << "\t" << fmt_num(br.x) << "\t"
      << fmt_num(br.b_shunt) << "\t" << (br.has_limit() ? fmt_num(br.flow_limit) : std::string("0"))
      << "\t0\t0\t0\t0\t" << (br.in_service ? 1 : 0) << "\t-360\t360;\n";
  }
  o << "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\n";
  o << "mpc.gen = [\n";
  for (const auto& g : c.generators) {
    o << "\t" << g.bus << "\t" << fmt_num(g.p_out) << "\t" << fmt_num(g.q_out) << "\t" << fmt_num(g.q_max) << "\t"
      << fmt_num(g.q_min) << "\t" << fmt_num(g.v_setpoint) << "\t" << fmt_num(c.base_mva) << "\t"
      << (g.in_service ? 1 : 0) << "\t" << fmt_num(g.p_max) << "\t" << fmt_num(g.p_min) << ";\n";
  }
  o << "];\n";
  const bool all_costed = !c.generators.empty() &&
                          std::all_of(c.generators.begin(), c.generators.end(), [](const Generator& g) { return g.cost.has_value(); });
  if (all_costed) {
    o << "\n%% model startup shutdown n c2 c1 c0\nmpc.gencost = [\n";
    for (const auto& g : c.generators)
      o << "\t2\t0\t0\t3\t" << fmt_num((*g.cost)[0]) << "\t" << fmt_num((*g.cost)[1]) << "\t" << fmt_num((*g.cost)[2])
        << ";\n";
    o << "];\n";
  }
  o << "\n%% bus a1 a2 b2 c2 r_down r_up shed_cap q_down q_up\nmpc.flexcost = [\n";
  for (const auto& f : c.costs) {
    o << "\t" << f.bus << "\t" << fmt_num(f.a1) << "\t" << fmt_num(f.a2) << "\t" << fmt_num(f.b2) << "\t" << fmt_num(f.c2)
      << "\t" << fmt_num(f.reserve_down) << "\t" << fmt_num(f.reserve_up) << "\t" << fmt_num(f.sheddable_cap) << "\t"
      << fmt_num(f.q_reserve_down) << "\t" << fmt_num(f.q_reserve_up) << ";\n";
  }
  o << "];\n";
  return o.str();
}

/// Bus admittance matrix Y = G + jB (p.u.) from the pi branch model and bus
/// shunts. Tap ratios and phase shifts are not modeled.
struct Admittance {
  DenseMatrix g;
  DenseMatrix b;
};

inline Admittance build_admittance(const NetworkCase& c, std::span<const int> outages = {}) {
  const std::size_t n = c.num_buses();
  Admittance y{DenseMatrix(n, n), DenseMatrix(n, n)};
  std::set<int> out(outages.begin(), outages.end());
  for (const auto& br : c.branches) {
    if (!br.in_service || out.count(br.id)) continue;
    const std::size_t f = c.bus_index(br.from_bus);
    const std::size_t t = c.bus_index(br.to_bus);
    const double den = br.r * br.r + br.x * br.x;
    const double gs = br.r / den;
    const double bs = -br.x / den;
    const double bc = br.b_shunt / 2.0;
    y.g(f, f) += gs;
    y.g(t, t) += gs;
    y.g(f, t) -= gs;
    y.g(t, f) -= gs;
    y.b(f, f) += bs + bc;
    y.b(t, t) += bs + bc;
    y.b(f, t) -= bs;
    y.b(t, f) -= bs;
  }
  for (std::size_t i = 0; i < n; ++i) {
    y.g(i, i) += c.buses[i].g_shunt / c.base_mva;
    y.b(i, i) += c.buses[i].b_shunt / c.base_mva;
  }
  return y;
}

/// DC susceptance matrix (B-bus, p.u.) and the angle-to-flow map K, with
/// outaged branches removed. Rows of K for removed branches are zero.
struct DcMatrices {
  DenseMatrix bbus;  // N x N
  DenseMatrix k;     // L x N
};

inline DcMatrices build_bbus(const NetworkCase& c, std::span<const int> outages = {}) {
  const std::size_t n = c.num_buses();
  DcMatrices m{DenseMatrix(n, n), DenseMatrix(c.num_branches(), n)};
  std::set<int> out;
  for (int id : outages) {
    c.branch_index(id);
    out.insert(id);
  }
  for (std::size_t l = 0; l < c.num_branches(); ++l) {
    const auto& br = c.branches[l];
    if (!br.in_service || out.count(br.id)) continue;
    const std::size_t f = c.bus_index(br.from_bus);
    const std::size_t t = c.bus_index(br.to_bus);
    const double y = 1.0 / br.x;
    m.bbus(f, f) += y;
    m.bbus(t, t) += y;
    m.bbus(f, t) -= y;
    m.bbus(t, f) -= y;
    m.k(l, f) = y;
    m.k(l, t) = -y;
  }
  return m;
}

}  // namespace lshed
