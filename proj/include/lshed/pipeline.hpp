#pragma once

// Study-level helpers shared by the command-line tool and the acceptance
// runner: parallel per-bus training, dataset fingerprints and metric tables.

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "lshed/config.hpp"

namespace lshed {

inline GenerationOptions generation_options(const StudyConfig& cfg, const NetworkCase& c) {
  GenerationOptions g;
  g.samples_per_contingency = cfg.samples_per_contingency;
  g.perturb_lo = cfg.perturb_lo;
  g.perturb_hi = cfg.perturb_hi;
  g.master_seed = cfg.seed;
  g.f0 = cfg.f0;
  g.k_sys = cfg.k_sys;
  g.enforce_q_limits = cfg.enforce_q_limits;
  g.buses = resolve_buses(c, cfg.buses);
  return g;
}

inline TrainOptions train_options(const StudyConfig& cfg) {
  TrainOptions t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

/// FNV-1a over the per-bus CSV texts in bus order.
inline std::uint64_t dataset_hash(const std::vector<BusDataset>& buses) {
  std::uint64_t h = fnv1a("");
  for (const auto& b : buses) h = fnv1a(dataset_csv(b), h);
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Independent regressors for each dataset; results are stored by index so
/// they do not depend on the worker count.
inline std::vector<TrainedBus> train_all(const NetworkCase& c, const std::vector<BusDataset>& data,
                                         const TrainOptions& opt, unsigned workers = worker_count()) {
  std::vector<TrainedBus> out(data.size());
  parallel_for(
      data.size(),
      [&](std::size_t k) {
        const std::size_t i = c.bus_index(data[k].bus);
        out[k] = train_bus_model(data[k], c.costs[i], c.buses[i].p_demand, opt);
      },
      workers);
  return out;
}

inline std::string metrics_csv(const std::vector<RegressionMetrics>& rows) {
  std::string s = metrics_csv_header();
  for (const auto& r : rows) s += metrics_csv_row(r);
  return s;
}

inline std::vector<RegressionMetrics> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line + "\n" != metrics_csv_header())
    throw ParseError(1, "not a metrics file (unexpected header)");
  std::vector<RegressionMetrics> out;
  int ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    auto t = split_csv_line(line);
    if (t.size() != 12) throw ParseError(ln, "expected 12 columns");
    RegressionMetrics r;
    r.bus = static_cast<int>(parse_csv_number(t[0], ln));
    r.n_train = static_cast<std::size_t>(parse_csv_number(t[1], ln));
    r.n_test = static_cast<std::size_t>(parse_csv_number(t[2], ln));
    double* fields[] = {&r.mse, &r.alpha_err_pct, &r.mape_pct, &r.p_err_mean, &r.p_err_min,
                        &r.p_err_q1, &r.p_err_median, &r.p_err_q3, &r.p_err_max};
    for (std::size_t k = 0; k < 9; ++k) *fields[k] = parse_csv_number(t[3 + k], ln);
    out.push_back(r);
  }
  return out;
}

struct StudySummary {
  std::size_t buses = 0;
  double mean_alpha_err_pct = 0.0;
  double mean_p_err = 0.0;       // MW, average of per-bus means
  double mean_p_median = 0.0;    // MW, average of per-bus medians
  double max_p_err = 0.0;        // MW
};

inline StudySummary summarize(const std::vector<RegressionMetrics>& rows) {
  StudySummary s;
  s.buses = rows.size();
  for (const auto& r : rows) {
    s.mean_alpha_err_pct += r.alpha_err_pct;
    s.mean_p_err += r.p_err_mean;
    s.mean_p_median += r.p_err_median;
    s.max_p_err = std::max(s.max_p_err, r.p_err_max);
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    s.mean_alpha_err_pct /= n;
    s.mean_p_err /= n;
    s.mean_p_median /= n;
  }
  return s;
}

/// Per-bus box-plot statistics of |p error| followed by an `average` row.
inline std::string report_csv(const std::vector<RegressionMetrics>& rows) {
  using detail::num17;
  std::ostringstream o;
  o << "bus,p_err_min_mw,p_err_q1_mw,p_err_median_mw,p_err_q3_mw,p_err_max_mw,p_err_mean_mw,alpha_err_pct\n";
  for (const auto& r : rows)
    o << r.bus << ',' << num17(r.p_err_min) << ',' << num17(r.p_err_q1) << ',' << num17(r.p_err_median) << ','
      << num17(r.p_err_q3) << ',' << num17(r.p_err_max) << ',' << num17(r.p_err_mean) << ','
      << num17(r.alpha_err_pct) << '\n';
  const auto s = summarize(rows);
  double q1 = 0, q3 = 0, mn = 0;
  for (const auto& r : rows) {
    q1 += r.p_err_q1;
    q3 += r.p_err_q3;
    mn += r.p_err_min;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  o << "average," << num17(mn / n) << ',' << num17(q1 / n) << ',' << num17(s.mean_p_median) << ',' << num17(q3 / n)
    << ',' << num17(s.max_p_err) << ',' << num17(s.mean_p_err) << ',' << num17(s.mean_alpha_err_pct) << '\n';
  return o.str();
}

inline std::string report_table(const std::vector<RegressionMetrics>& rows) {
  std::ostringstream o;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%6s %9s %9s %9s %9s %9s %9s %9s\n", "bus", "min", "q1", "median", "q3", "max",
                "mean", "alpha%");
  o << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%6d %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f %9.3f\n", r.bus, r.p_err_min, r.p_err_q1,
                  r.p_err_median, r.p_err_q3, r.p_err_max, r.p_err_mean, r.alpha_err_pct);
    o << buf;
  }
  const auto s = summarize(rows);
  std::snprintf(buf, sizeof buf, "buses %zu, mean |p error| %.4f MW, mean median %.4f MW, max %.4f MW, alpha error %.3f%%\n",
                s.buses, s.mean_p_err, s.mean_p_median, s.max_p_err, s.mean_alpha_err_pct);
  o << buf;
  return o.str();
}

}  // namespace lshed
