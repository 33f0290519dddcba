// lshed: command-line front end for load-shedding studies.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include "lshed/identifiability.hpp"
#include "lshed/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lshed;

namespace {

struct Common {
  std::string config, case_path, out, buses, contingencies;
  std::uint64_t seed = 0;
  double tol = 0.0;
};

/// Appends timestamped lines to <dir>/logs/<name>.log. Logs are the only
/// place wall-clock information is written.
class RunLog {
 public:
  RunLog(const std::string& dir, const std::string& name) {
    fs::create_directories(fs::path(dir) / "logs");
    out_.open(fs::path(dir) / "logs" / (name + ".log"), std::ios::app);
    start_ = std::chrono::steady_clock::now();
  }
  void line(const std::string& s) {
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
    out_ << stamp << ' ' << s << '\n';
    out_.flush();
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::ofstream out_;
  std::chrono::steady_clock::time_point start_;
};

StudyConfig resolve_config(const Common& o, CLI::App* sub) {
  auto given = [&](const char* name) {
    const auto* opt = sub->get_option_no_throw(name);
    return opt && opt->count() > 0;
  };
  StudyConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config);
  if (given("--case")) cfg.case_path = o.case_path;
  if (given("--out")) cfg.out_dir = o.out;
  if (given("--seed")) {
    cfg.seed = o.seed;
    cfg.has_seed = true;
  }
  if (given("--buses")) cfg.buses = o.buses;
  if (given("--tol")) cfg.tol = o.tol;
  if (given("--contingencies")) cfg.contingency_spec = o.contingencies;
  return cfg;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_text_file(path, text);
}

std::string fmt(double v) { return detail::num17(v); }

// ---------------------------------------------------------------- commands

int cmd_parse(const std::string& case_path, const std::string& out) {
  const auto c = parse_case_file(case_path);
  std::size_t limited = 0, flexible = 0;
  for (const auto& b : c.branches) limited += b.has_limit();
  for (std::size_t i = 0; i < c.num_buses(); ++i)
    flexible += c.costs[i].upper_limit() > c.costs[i].reserve_down;
  std::ostringstream o;
  o << "status,valid\n"
    << "buses," << c.num_buses() << "\nbranches," << c.num_branches() << "\ngenerators," << c.generators.size()
    << "\nactive_generators," << c.num_active_generators() << "\nslack_bus," << c.buses[c.slack_index()].id
    << "\nload_buses," << c.load_buses().size() << "\nlimited_branches," << limited << "\nflexible_buses," << flexible
    << "\nbase_mva," << fmt(c.base_mva) << "\nconnected," << (check_connectivity(c) ? "yes" : "no") << '\n';
  emit(out, o.str());
  return 0;
}

int cmd_pf(const std::string& case_path, const std::string& contingency, bool q_limits, const std::string& out) {
  const auto c = parse_case_file(case_path);
  AcOptions opt;
  opt.enforce_q_limits = q_limits;
  std::optional<Contingency> k;
  if (!contingency.empty()) k = resolve_contingencies(c, contingency).at(0);
  PowerFlowState st;
  if (k) {
    const auto pre = solve_ac(c, nullptr, opt);
    opt.warm_start = pre.converged ? &pre : nullptr;
    st = solve_ac(c, &*k, opt);
  } else {
    st = solve_ac(c, nullptr, opt);
  }
  std::ostringstream o;
  o << "# converged=" << (st.converged ? 1 : 0) << " iterations=" << st.iterations
    << " max_mismatch_pu=" << fmt(st.max_mismatch) << " contingency=" << (k ? k->id : "none") << '\n';
  o << "bus,v_pu,angle_deg,p_inj_mw,q_inj_mvar\n";
  for (std::size_t i = 0; i < c.num_buses(); ++i)
    o << c.buses[i].id << ',' << fmt(st.v_mag[i]) << ',' << fmt(st.v_ang[i] * 180.0 / std::numbers::pi) << ','
      << fmt(st.p_inj[i] * c.base_mva) << ',' << fmt(st.q_inj[i] * c.base_mva) << '\n';
  o << "\nbranch,from,to,p_from_mw,q_from_mvar,p_to_mw,q_to_mvar\n";
  for (std::size_t l = 0; l < c.num_branches(); ++l) {
    const auto& f = st.branch_flows[l];
    o << c.branches[l].id << ',' << c.branches[l].from_bus << ',' << c.branches[l].to_bus << ','
      << fmt(f.p_from * c.base_mva) << ',' << fmt(f.q_from * c.base_mva) << ',' << fmt(f.p_to * c.base_mva) << ','
      << fmt(f.q_to * c.base_mva) << '\n';
  }
  emit(out, o.str());
  if (!st.converged) {
    std::cerr << "error [numerical]: power flow did not converge\n";
    return static_cast<int>(ErrorKind::numerical);
  }
  return 0;
}

int cmd_ols(const std::string& case_path, const std::string& contingency, const std::string& multipliers,
            double scale, const std::string& out) {
  const auto c = parse_case_file(case_path);
  const Contingency k = contingency.empty() ? make_contingency("base", {}) : resolve_contingencies(c, contingency).at(0);
  std::vector<double> pd;
  std::vector<double> m(c.num_buses(), scale);
  if (!multipliers.empty()) {
    m.clear();
    for (const auto& t : detail::split_list(multipliers)) m.push_back(detail::to_double("multipliers", t));
    if (m.size() != c.num_buses())
      throw ValidationError("expected " + std::to_string(c.num_buses()) + " multipliers, got " + std::to_string(m.size()));
  }
  for (std::size_t i = 0; i < c.num_buses(); ++i) pd.push_back(c.buses[i].p_demand * m[i]);
  const auto pb = build_problem(c, k, pd);
  const auto sol = solve(pb);
  std::ostringstream o;
  o << "# status=" << to_string(sol.status) << " objective=" << fmt(sol.objective)
    << " kkt=" << fmt(sol.kkt_residuals.max()) << " contingency=" << k.id << '\n';
  o << solution_csv(pb, sol);
  emit(out, o.str());
  if (sol.status != OlsStatus::optimal) {
    std::cerr << "error [numerical]: optimization status " << to_string(sol.status) << '\n';
    return static_cast<int>(ErrorKind::numerical);
  }
  return 0;
}

int cmd_gen_data(const StudyConfig& cfg) {
  validate_config(cfg);
  const auto c = parse_case_file(cfg.case_path);
  const auto ks = resolve_contingencies(c, cfg.contingency_spec);
  RunLog log(cfg.out_dir, "gen-data");
  const GenerationOptions g = generation_options(cfg, c);
  log.line("generating " + std::to_string(ks.size()) + " x " + std::to_string(g.samples_per_contingency) +
           " samples with " + std::to_string(worker_count()) + " workers");
  const auto ds = generate_dataset(c, ks, g);
  const fs::path dir = fs::path(cfg.out_dir) / "dataset";
  fs::create_directories(dir);
  for (const auto& b : ds.buses) write_text_file((dir / ("bus_" + std::to_string(b.bus) + ".csv")).string(), dataset_csv(b));
  std::ostringstream gl, kc;
  gl << "contingency,attempted,ac_failed,ols_failed,kept\n";
  kc << "contingency,branches\n";
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const auto& l = ds.log[j];
    gl << l.id << ',' << l.attempted << ',' << l.ac_failed << ',' << l.ols_failed << ','
       << l.attempted - l.ac_failed - l.ols_failed << '\n';
    kc << ks[j].id << ',';
    for (std::size_t b = 0; b < ks[j].outaged_branches.size(); ++b) kc << (b ? "+" : "") << ks[j].outaged_branches[b];
    kc << '\n';
  }
  write_text_file((fs::path(cfg.out_dir) / "generation_log.csv").string(), gl.str());
  write_text_file((fs::path(cfg.out_dir) / "contingencies.csv").string(), kc.str());
  const std::string hash = hex64(dataset_hash(ds.buses));
  write_text_file((fs::path(cfg.out_dir) / "dataset_hash.txt").string(), hash + "\n");
  log.line("dataset " + hash + " written in " + std::to_string(log.elapsed()) + " s");
  std::cout << "dataset_hash " << hash << "\nbuses " << ds.buses.size() << "\nsamples_per_bus "
            << (ds.buses.empty() ? 0 : ds.buses[0].samples.size()) << '\n';
  return 0;
}

std::vector<BusDataset> load_datasets(const NetworkCase& c, const fs::path& dir, const std::vector<std::size_t>& buses) {
  std::vector<BusDataset> out;
  for (std::size_t i : buses) {
    const auto path = dir / ("bus_" + std::to_string(c.buses[i].id) + ".csv");
    if (!fs::exists(path)) throw IoError("missing dataset file " + path.string());
    out.push_back(parse_dataset_csv(read_text_file(path.string()), c.buses[i].id));
  }
  return out;
}

int cmd_train(const StudyConfig& cfg) {
  validate_config(cfg);
  const auto c = parse_case_file(cfg.case_path);
  const fs::path out(cfg.out_dir);
  auto buses = resolve_buses(c, cfg.buses);
  const auto data = load_datasets(c, out / "dataset", buses);
  const TrainOptions opt = train_options(cfg);
  RunLog log(cfg.out_dir, "train");
  log.line("training " + std::to_string(data.size()) + " buses with " + std::to_string(worker_count()) + " workers");
  std::vector<TrainedBus> trained(data.size());
  std::vector<double> seconds(data.size());
  parallel_for(data.size(), [&](std::size_t k) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t i = c.bus_index(data[k].bus);
    trained[k] = train_bus_model(data[k], c.costs[i], c.buses[i].p_demand, opt);
    seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  fs::create_directories(out / "models");
  fs::create_directories(out / "heldout");
  std::vector<RegressionMetrics> rows;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& t = trained[k];
    const std::string id = std::to_string(data[k].bus);
    write_text_file((out / "models" / ("bus_" + id + ".model")).string(), serialize_model(t.model));
    BusDataset held{data[k].bus, data[k].names, {}};
    for (std::size_t r : t.split.test) held.samples.push_back(data[k].samples[r]);
    write_text_file((out / "heldout" / ("bus_" + id + ".csv")).string(), dataset_csv(held));
    rows.push_back(t.metrics);
    log.line("bus " + id + " trained in " + std::to_string(seconds[k]) + " s, epochs " + meta_value(t.model, "epochs"));
  }
  write_text_file((out / "metrics.csv").string(), metrics_csv(rows));

  if (cfg.classifier_bus) {
    const std::size_t i = c.bus_index(cfg.classifier_bus);
    auto cls_data = load_datasets(c, out / "dataset", {i});
    const auto r = train_classifier(cls_data[0], opt);
    write_text_file((out / "models" / ("classifier_bus_" + std::to_string(cfg.classifier_bus) + ".model")).string(),
                    serialize_model(r.model));
    write_text_file((out / "classifier.csv").string(),
                    "bus,classes,n_test,accuracy\n" + std::to_string(cfg.classifier_bus) + ',' +
                        std::to_string(r.model.classes.size()) + ',' + std::to_string(r.split.test.size()) + ',' +
                        fmt(r.accuracy) + '\n');
    std::cout << "classifier_accuracy " << fmt(r.accuracy) << '\n';
  }
  log.line("done in " + std::to_string(log.elapsed()) + " s");
  const auto s = summarize(rows);
  std::cout << "buses " << s.buses << "\nmean_alpha_err_pct " << fmt(s.mean_alpha_err_pct) << "\nmean_p_err_mw "
            << fmt(s.mean_p_err) << '\n';
  return 0;
}

int cmd_predict(const std::string& models, const std::string& input, const std::string& out) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(input);
  }
  if (files.empty()) throw IoError("no measurement files in " + input);
  const std::regex name(R"(bus_(\d+)\.csv)");
  std::vector<std::pair<int, fs::path>> jobs;
  for (const auto& f : files) {
    std::smatch m;
    const std::string fn = f.filename().string();
    if (!std::regex_match(fn, m, name)) throw ValidationError("measurement file name must be bus_<id>.csv: " + fn);
    jobs.emplace_back(std::stoi(m[1]), f);
  }
  std::sort(jobs.begin(), jobs.end());
  std::ostringstream pred;
  pred << "bus,row,alpha_hat,p_shed_hat_mw\n";
  std::vector<RegressionMetrics> rows;
  for (const auto& [bus, path] : jobs) {
    const fs::path mp = fs::path(models) / ("bus_" + std::to_string(bus) + ".model");
    if (!fs::exists(mp)) throw IoError("missing model " + mp.string());
    const auto model = parse_model(read_text_file(mp.string()));
    const auto data = parse_dataset_csv(read_text_file(path.string()), bus);
    for (std::size_t r = 0; r < data.samples.size(); ++r) {
      const double a = predict(model, data.samples[r].x);
      pred << bus << ',' << r << ',' << fmt(a) << ',' << fmt(recover_from_features(model, a, data.samples[r].x)) << '\n';
    }
    std::vector<std::size_t> all(data.samples.size());
    std::iota(all.begin(), all.end(), 0);
    auto m = evaluate_regression(model, data.samples, all);
    m.n_train = static_cast<std::size_t>(std::stoull(meta_value(model, "n_train", "0")));
    rows.push_back(m);
  }
  if (out.empty() || out == "-") {
    std::cout << pred.str();
    return 0;
  }
  fs::create_directories(out);
  write_text_file((fs::path(out) / "predictions.csv").string(), pred.str());
  write_text_file((fs::path(out) / "metrics.csv").string(), metrics_csv(rows));
  return 0;
}

int cmd_identify(const StudyConfig& cfg, const std::string& out) {
  if (cfg.case_path.empty()) throw ValidationError("identify needs --case or a config with 'case'");
  const auto c = parse_case_file(cfg.case_path);
  const auto ks = resolve_contingencies(c, cfg.contingency_spec);
  std::string text = identifiability_csv_header();
  bool all = true;
  for (std::size_t i : resolve_buses(c, cfg.buses)) {
    const auto rep = check_set(c, i, ks, cfg.tol);
    all = all && rep.all_identifiable;
    text += identifiability_csv_rows(rep);
  }
  emit(out, text);
  std::cerr << (all ? "all pairs identifiable\n" : "some pairs are not identifiable\n");
  return 0;
}

int cmd_report(const std::string& metrics, const std::string& out, bool table) {
  fs::path p(metrics);
  if (fs::is_directory(p)) p /= "metrics.csv";
  const auto rows = parse_metrics_csv(read_text_file(p.string()));
  if (table) std::cout << report_table(rows);
  if (!out.empty()) emit(out, report_csv(rows));
  else if (!table) std::cout << report_csv(rows);
  return 0;
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::islanding: return "islanding";
    case ErrorKind::io: return "io";
  }
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Load-shedding studies: power flow, optimal shedding, identifiability and per-bus learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lshed 1.0");
  Common o;
  std::string contingency, multipliers, models, input;
  double scale = 1.0;
  bool q_limits = false, table = false;

  auto add_config = [&](CLI::App* s) {
    s->add_option("--config", o.config, "study configuration file")->check(CLI::ExistingFile);
    s->add_option("--case", o.case_path, "case file (overrides config)");
    s->add_option("--out", o.out, "output directory (overrides config)");
    s->add_option("--seed", o.seed, "master seed (overrides config)");
    s->add_option("--buses", o.buses, "comma list of bus ids or 'all'");
  };

  auto* parse = app.add_subcommand("parse", "validate a case file");
  parse->add_option("--case", o.case_path, "case file")->required()->check(CLI::ExistingFile);
  parse->add_option("--out", o.out, "report path (default stdout)");

  auto* pf = app.add_subcommand("pf", "AC power flow report");
  pf->add_option("--case", o.case_path, "case file")->required()->check(CLI::ExistingFile);
  pf->add_option("--contingency", contingency, "outaged branches, e.g. 38+141");
  pf->add_flag("--q-limits", q_limits, "enforce generator reactive limits");
  pf->add_option("--out", o.out, "report path (default stdout)");

  auto* ols = app.add_subcommand("ols", "optimal load shedding for one contingency");
  ols->add_option("--case", o.case_path, "case file")->required()->check(CLI::ExistingFile);
  ols->add_option("--contingency", contingency, "outaged branches, e.g. 38+141 (default: none)");
  ols->add_option("--multipliers", multipliers, "per-bus demand multipliers, comma separated");
  ols->add_option("--scale", scale, "uniform demand multiplier");
  ols->add_option("--out", o.out, "CSV path (default stdout)");

  auto* gen = app.add_subcommand("gen-data", "generate per-bus datasets");
  add_config(gen);
  gen->add_option("--contingencies", o.contingencies, "contingency list or auto(S, D, T)");

  auto* train = app.add_subcommand("train", "train per-bus models on a generated dataset");
  add_config(train);

  auto* pred = app.add_subcommand("predict", "predict alpha and flexibility from measurements");
  pred->add_option("--models", models, "model directory")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--input", input, "measurement CSV (bus_<id>.csv) or a directory of them")->required()->check(CLI::ExistingPath);
  pred->add_option("--out", o.out, "output directory (default: predictions to stdout)");

  auto* ident = app.add_subcommand("identify", "local identifiability of a contingency list");
  add_config(ident);
  ident->add_option("--contingencies", o.contingencies, "contingency list or auto(S, D, T)");
  ident->add_option("--tol", o.tol, "singular value tolerance");

  auto* report = app.add_subcommand("report", "error statistics from a metrics file");
  report->add_option("--metrics", input, "metrics.csv or the directory holding it")->required()->check(CLI::ExistingPath);
  report->add_option("--out", o.out, "summary CSV path");
  report->add_flag("--table", table, "print a plain-text table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*parse) return cmd_parse(o.case_path, o.out);
    if (*pf) return cmd_pf(o.case_path, contingency, q_limits, o.out);
    if (*ols) return cmd_ols(o.case_path, contingency, multipliers, scale, o.out);
    if (*gen) return cmd_gen_data(resolve_config(o, gen));
    if (*train) return cmd_train(resolve_config(o, train));
    if (*pred) return cmd_predict(models, input, o.out);
    if (*ident) {
      auto cfg = resolve_config(o, ident);
      return cmd_identify(cfg, ident->count("--out") ? (fs::path(cfg.out_dir) / "identifiability.csv").string() : "");
    }
    if (*report) return cmd_report(input, o.out, table);
  } catch (const Error& e) {
    std::cerr << "error [" << kind_name(e.kind()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
