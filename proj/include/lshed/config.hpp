#pragma once

// Study configuration: a flat `key = value` file, `#` starts a comment,
// lists are comma separated. Relative paths resolve against the file's
// directory.
//
//   case = case118.m
//   contingencies = auto(3, 2, 1)      # or: 8, 51, 38+141
//   samples_per_contingency = 300
//   perturb_range = 0.95, 1.05
//   seed = 7

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lshed/training.hpp"

namespace lshed {

struct StudyConfig {
  std::string case_path;
  std::string contingency_spec = "auto(3, 2, 1)";
  std::size_t samples_per_contingency = 300;
  double perturb_lo = 0.95, perturb_hi = 1.05;
  double f0 = 60.0, k_sys = 1.0;
  bool enforce_q_limits = false;
  TrainOptions train;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out_dir = "out";
  std::string buses = "all";
  int classifier_bus = 0;  // 0 = none
  double tol = 1e-6;
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.emplace_back(detail::trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!detail::trim(cur).empty() || !out.empty()) out.emplace_back(detail::trim(cur));
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ValidationError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': integer out of range");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + v + "'");
}

}  // namespace detail

inline StudyConfig parse_config(std::string_view text, const std::string& base_dir = ".") {
  StudyConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(ln, "expected 'key = value'");
    const std::string key(detail::trim(std::string_view(line).substr(0, eq)));
    const std::string val(detail::trim(std::string_view(line).substr(eq + 1)));
    if (!seen.insert(key).second) throw ParseError(ln, "duplicate key '" + key + "'");
    using namespace detail;
    auto count = [&] { return static_cast<std::size_t>(to_unsigned(key, val)); };
    if (key == "case") {
      const std::filesystem::path p(val);
      cfg.case_path = p.is_absolute() ? val : (std::filesystem::path(base_dir) / p).string();
    } else if (key == "contingencies") {
      cfg.contingency_spec = val;
    } else if (key == "samples_per_contingency") {
      cfg.samples_per_contingency = count();
    } else if (key == "perturb_range") {
      auto v = split_list(val);
      if (v.size() != 2) throw ValidationError("config key 'perturb_range': expected two values");
      cfg.perturb_lo = to_double(key, v[0]);
      cfg.perturb_hi = to_double(key, v[1]);
    } else if (key == "f0") {
      cfg.f0 = to_double(key, val);
    } else if (key == "k_sys") {
      cfg.k_sys = to_double(key, val);
    } else if (key == "enforce_q_limits") {
      cfg.enforce_q_limits = to_bool(key, val);
    } else if (key == "hidden") {
      cfg.train.hidden.clear();
      for (const auto& h : split_list(val)) cfg.train.hidden.push_back(static_cast<std::size_t>(to_unsigned(key, h)));
    } else if (key == "activation") {
      cfg.train.activation = parse_activation(val);
    } else if (key == "epochs") {
      cfg.train.max_epochs = count();
    } else if (key == "batch") {
      cfg.train.batch = count();
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = to_double(key, val);
    } else if (key == "weight_decay") {
      cfg.train.weight_decay = to_double(key, val);
    } else if (key == "lr_decay") {
      cfg.train.lr_decay = to_double(key, val);
    } else if (key == "lr_patience") {
      cfg.train.lr_patience = count();
    } else if (key == "min_learning_rate") {
      cfg.train.min_learning_rate = to_double(key, val);
    } else if (key == "patience") {
      cfg.train.patience = count();
    } else if (key == "train_fraction") {
      cfg.train.train_fraction = to_double(key, val);
    } else if (key == "val_fraction") {
      cfg.train.val_fraction = to_double(key, val);
    } else if (key == "seed") {
      cfg.seed = to_unsigned(key, val);
      cfg.has_seed = true;
    } else if (key == "out") {
      const std::filesystem::path p(val);
      cfg.out_dir = p.is_absolute() ? val : (std::filesystem::path(base_dir) / p).string();
    } else if (key == "buses") {
      cfg.buses = val;
    } else if (key == "classifier_bus") {
      cfg.classifier_bus = static_cast<int>(to_unsigned(key, val));
    } else if (key == "tol") {
      cfg.tol = to_double(key, val);
    } else {
      throw ParseError(ln, "unknown config key '" + key + "'");
    }
  }
  return cfg;
}

/// Range and presence checks that do not need the case.
inline void validate_config(const StudyConfig& cfg) {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (!cfg.has_seed) fail("'seed' is required");
  if (cfg.case_path.empty()) fail("'case' is required");
  if (cfg.perturb_lo > cfg.perturb_hi) fail("perturb_range is inverted");
  if (cfg.perturb_lo < 0.0) fail("perturb_range must be non-negative");
  if (cfg.samples_per_contingency == 0) fail("samples_per_contingency must be positive");
  if (cfg.train.batch == 0) fail("batch must be positive");
  if (!(cfg.train.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (cfg.train.weight_decay < 0.0) fail("weight_decay must be non-negative");
  if (!(cfg.train.lr_decay > 0.0 && cfg.train.lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (cfg.train.min_learning_rate < 0.0) fail("min_learning_rate must be non-negative");
  if (!(cfg.train.train_fraction > 0.0 && cfg.train.train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (!(cfg.train.val_fraction >= 0.0 && cfg.train.val_fraction < 1.0)) fail("val_fraction must lie in [0, 1)");
  for (std::size_t h : cfg.train.hidden)
    if (h == 0) fail("hidden layer sizes must be positive");
  if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) fail("tol must lie in (0, 1)");
}

inline StudyConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path), std::filesystem::path(path).parent_path().string());
}

/// Branch ids ranked by |base-case DC flow|, largest first, ties by id.
inline std::vector<int> rank_by_base_flow(const NetworkCase& c) {
  std::vector<double> p(c.num_buses());
  const auto gen = c.bus_generation_mw();
  double others = 0.0;
  for (std::size_t i = 0; i < c.num_buses(); ++i) {
    p[i] = (gen[i] - c.buses[i].p_demand) / c.base_mva;
    if (i != c.slack_index()) others += p[i];
  }
  p[c.slack_index()] = -others;
  const auto flows = solve_dc(c, p).flows;
  std::vector<int> ids;
  for (const auto& b : c.branches)
    if (b.in_service) ids.push_back(b.id);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    return std::abs(flows[c.branch_index(a)]) > std::abs(flows[c.branch_index(b)]);
  });
  return ids;
}

inline std::string contingency_name(const std::vector<int>& ids) {
  std::string s;
  for (int id : ids) s += (s.empty() ? "L" : "+L") + std::to_string(id);
  return s;
}

/// Heaviest-flow selection: `singles` single-line outages from the top of the
/// ranking, then `doubles` pairs and `triples` triples drawn greedily from the
/// following lines. Lines or combinations that island the network are
/// skipped.
inline std::vector<Contingency> auto_contingencies(const NetworkCase& c, std::size_t singles, std::size_t doubles,
                                                   std::size_t triples) {
  std::vector<int> pool;
  for (int id : rank_by_base_flow(c))
    if (check_connectivity(c, std::vector<int>{id})) pool.push_back(id);
  std::vector<Contingency> out;
  std::size_t next = 0;
  for (; next < pool.size() && out.size() < singles; ++next)
    out.push_back(make_contingency(contingency_name({pool[next]}), {pool[next]}));
  std::vector<int> rest(pool.begin() + static_cast<std::ptrdiff_t>(next), pool.end());
  auto draw = [&](std::size_t m) {
    std::vector<int> combo;
    for (auto it = rest.begin(); it != rest.end() && combo.size() < m;) {
      combo.push_back(*it);
      if (check_connectivity(c, combo)) {
        it = rest.erase(it);
      } else {
        combo.pop_back();
        ++it;
      }
    }
    if (combo.size() < m) throw ValidationError("not enough lines for a non-islanding " + std::to_string(m) + "-line outage");
    out.push_back(make_contingency(contingency_name(combo), combo));
  };
  if (out.size() < singles) throw ValidationError("not enough non-islanding lines for the requested single outages");
  for (std::size_t k = 0; k < doubles; ++k) draw(2);
  for (std::size_t k = 0; k < triples; ++k) draw(3);
  return out;
}

/// `auto(S, D, T)` or a comma list of outages, each a `+`-joined branch list.
inline std::vector<Contingency> resolve_contingencies(const NetworkCase& c, const std::string& spec) {
  const std::string s(detail::trim(spec));
  if (s.rfind("auto", 0) == 0) {
    const auto open = s.find('('), close = s.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
      throw ValidationError("contingencies: expected auto(singles, doubles, triples)");
    auto v = detail::split_list(std::string_view(s).substr(open + 1, close - open - 1));
    if (v.size() != 3) throw ValidationError("contingencies: auto() takes three counts");
    return auto_contingencies(c, detail::to_unsigned("contingencies", v[0]),
                              detail::to_unsigned("contingencies", v[1]), detail::to_unsigned("contingencies", v[2]));
  }
  std::vector<Contingency> out;
  std::set<std::string> names;
  for (const auto& item : detail::split_list(s)) {
    std::vector<int> ids;
    for (const auto& tok : detail::split_list(item, '+')) {
      std::string t = tok;
      if (!t.empty() && (t[0] == 'L' || t[0] == 'l')) t.erase(0, 1);
      ids.push_back(static_cast<int>(detail::to_unsigned("contingencies", t)));
    }
    auto k = make_contingency(contingency_name(ids), ids);
    validate_contingency(c, k);
    if (!names.insert(k.id).second) throw ValidationError("contingencies: duplicate entry " + k.id);
    out.push_back(std::move(k));
  }
  if (out.empty()) throw ValidationError("contingencies: empty list");
  return out;
}

/// `all` (every load bus) or a comma list of bus ids; returns bus indices.
inline std::vector<std::size_t> resolve_buses(const NetworkCase& c, const std::string& spec) {
  const std::string s(detail::trim(spec));
  if (s.empty() || s == "all") return c.load_buses();
  std::vector<std::size_t> out;
  for (const auto& tok : detail::split_list(s)) {
    const auto idx = c.bus_index(static_cast<int>(detail::to_unsigned("buses", tok)));
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
  return out;
}

}  // namespace lshed
