#pragma once

// Per-bus models: input normalization, training with Adam + weight decay +
// early stopping, prediction, text serialization and held-out metrics.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lshed/dataset.hpp"
#include "lshed/mlp.hpp"

namespace lshed {

inline constexpr const char* kModelMagic = "lshed-model 1";

struct Normalizer {
  std::vector<double> mean, std;
  std::vector<char> flagged;  // constant feature, std forced to 1

  static Normalizer fit(const std::vector<const std::vector<double>*>& rows) {
    Normalizer n;
    if (rows.empty()) return n;
    const std::size_t d = rows.front()->size();
    n.mean.assign(d, 0.0);
    n.std.assign(d, 0.0);
    n.flagged.assign(d, 0);
    for (const auto* r : rows)
      for (std::size_t k = 0; k < d; ++k) n.mean[k] += (*r)[k];
    for (double& m : n.mean) m /= static_cast<double>(rows.size());
    for (const auto* r : rows)
      for (std::size_t k = 0; k < d; ++k) n.std[k] += ((*r)[k] - n.mean[k]) * ((*r)[k] - n.mean[k]);
    for (std::size_t k = 0; k < d; ++k) {
      n.std[k] = std::sqrt(n.std[k] / static_cast<double>(rows.size()));
      if (n.std[k] <= 1e-9 * std::max(1.0, std::abs(n.mean[k]))) {
        n.std[k] = 1.0;
        n.flagged[k] = 1;
      }
    }
    return n;
  }

  void apply(std::span<const double> x, double* out) const {
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / std[k];
  }
};

struct BusModel {
  int bus = 0;
  int layout_version = kFeatureLayoutVersion;
  std::string kind = "regression";  // or "classifier"
  Mlp net;
  Normalizer input;
  double target_mean = 0.0, target_std = 1.0;
  std::vector<std::string> classes;
  FlexibilityCost cost;
  double pd_nominal = 0.0;  // MW, scales the sheddable cap with measured demand
  std::vector<std::pair<std::string, std::string>> meta;
};

inline std::vector<double> model_output(const BusModel& m, std::span<const double> x, int layout_version) {
  if (layout_version != m.layout_version) throw ValidationError("feature layout version differs from model");
  if (x.size() != m.net.input_size())
    throw ValidationError("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                          std::to_string(m.net.input_size()));
  std::vector<double> z(x.size());
  m.input.apply(x, z.data());
  return m.net.forward(z);
}

/// Marginal cost estimate alpha-hat in $/MWh.
inline double predict(const BusModel& m, std::span<const double> x, int layout_version = kFeatureLayoutVersion) {
  if (m.kind != "regression") throw ValidationError("model is not a regressor");
  return model_output(m, x, layout_version)[0] * m.target_std + m.target_mean;
}

inline std::string predict_class(const BusModel& m, std::span<const double> x,
                                 int layout_version = kFeatureLayoutVersion) {
  if (m.kind != "classifier") throw ValidationError("model is not a classifier");
  const auto y = model_output(m, x, layout_version);
  return m.classes[static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin())];
}

/// Flexibility in MW implied by alpha, with the sheddable cap following the
/// measured demand x[0].
inline double recover_from_features(const BusModel& m, double alpha, std::span<const double> x) {
  FlexibilityCost f = m.cost;
  if (m.pd_nominal > 0.0) f.sheddable_cap *= x[0] / m.pd_nominal;
  return recover_shedding(alpha, f);
}

// ---------------------------------------------------------------- training

struct TrainOptions {
  std::vector<std::size_t> hidden{40, 30, 20};
  Activation activation = Activation::relu;
  std::size_t max_epochs = 400;
  std::size_t batch = 32;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double train_fraction = 0.7;
  double val_fraction = 0.1;  // of the training split
  std::size_t patience = 30;      // epochs without improvement before stopping
  double lr_decay = 0.5;          // learning-rate factor on a plateau
  std::size_t lr_patience = 10;   // epochs without improvement before decaying
  double min_learning_rate = 1e-6;
  std::uint64_t seed = 1;
};

struct Split {
  std::vector<std::size_t> fit, val, test;
};

/// Shuffled train/test split of n rows, the validation slice taken from the
/// end of the training part. Depends only on n and the seed.
inline Split make_split(std::size_t n, const TrainOptions& opt) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(opt.seed, 0x5350'4c49'54ULL));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(opt.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::ceil(opt.val_fraction * static_cast<double>(n_train)));
  Split s;
  s.fit.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train - n_val));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train - n_val), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct FitReport {
  std::size_t epochs = 0, best_epoch = 0;
  double train_loss = 0.0, val_loss = 0.0;
};

namespace detail {

inline std::string hyper_dump(const TrainOptions& o) {
  std::ostringstream s;
  s << "lr=" << o.learning_rate << " batch=" << o.batch << " weight_decay=" << o.weight_decay
    << " max_epochs=" << o.max_epochs << " activation=" << to_string(o.activation);
  return s.str();
}

/// Mini-batch Adam with early stopping on the validation loss and learning
/// rate decay on plateaus; keeps the best parameters seen.
inline FitReport fit(Mlp& net, const std::vector<double>& x_fit, const std::vector<double>& t_fit,
                     const std::vector<double>& x_val, const std::vector<double>& t_val, LossKind kind,
                     const TrainOptions& opt, std::uint64_t seed) {
  const std::size_t d = net.input_size();
  const std::size_t tw = kind == LossKind::mse ? net.output_size() : 1;
  const std::size_t n = x_fit.size() / d, nv = x_val.size() / d;
  std::mt19937_64 rng(seed);
  Adam adam;
  adam.lr = opt.learning_rate;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> xb, tb, grad;
  FitReport rep;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = net.params();
  std::size_t last_change = 0;
  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += opt.batch) {
      const std::size_t end = std::min(n, start + opt.batch);
      xb.clear();
      tb.clear();
      for (std::size_t k = start; k < end; ++k) {
        xb.insert(xb.end(), x_fit.begin() + static_cast<std::ptrdiff_t>(order[k] * d),
                  x_fit.begin() + static_cast<std::ptrdiff_t>((order[k] + 1) * d));
        tb.insert(tb.end(), t_fit.begin() + static_cast<std::ptrdiff_t>(order[k] * tw),
                  t_fit.begin() + static_cast<std::ptrdiff_t>((order[k] + 1) * tw));
      }
      const double l = net.loss(xb, tb, end - start, kind, opt.weight_decay, &grad);
      if (!std::isfinite(l)) throw NumericalError("training diverged (loss " + std::to_string(l) + "); " + hyper_dump(opt));
      adam.step(net.params(), grad);
    }
    const double monitor = nv ? net.loss(x_val, t_val, nv, kind, 0.0, nullptr) : net.loss(x_fit, t_fit, n, kind, 0.0, nullptr);
    if (!std::isfinite(monitor)) throw NumericalError("training diverged (validation loss not finite); " + hyper_dump(opt));
    rep.epochs = epoch;
    if (monitor < best) {
      best = monitor;
      best_params = net.params();
      rep.best_epoch = epoch;
      last_change = epoch;
    } else if (epoch - rep.best_epoch >= opt.patience) {
      break;
    } else if (epoch - last_change >= opt.lr_patience && opt.lr_decay < 1.0) {
      if (adam.lr * opt.lr_decay < opt.min_learning_rate) break;
      adam.lr *= opt.lr_decay;
      last_change = epoch;
    }
  }
  net.params() = best_params;
  rep.val_loss = best;
  rep.train_loss = net.loss(x_fit, t_fit, n, kind, 0.0, nullptr);
  return rep;
}

inline std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

struct RegressionMetrics {
  int bus = 0;
  std::size_t n_train = 0, n_test = 0;
  double mse = 0.0;            // ($/MWh)^2
  double alpha_err_pct = 0.0;  // 100 * sum|err| / sum|alpha|
  double mape_pct = 0.0;       // mean |err|/|alpha| over rows with |alpha| > 1e-6
  double p_err_mean = 0.0, p_err_min = 0.0, p_err_q1 = 0.0, p_err_median = 0.0, p_err_q3 = 0.0, p_err_max = 0.0;  // MW
};

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Held-out metrics of a regressor over the given rows.
inline RegressionMetrics evaluate_regression(const BusModel& m, const std::vector<LabeledSample>& samples,
                                             const std::vector<std::size_t>& rows) {
  RegressionMetrics r;
  r.bus = m.bus;
  r.n_test = rows.size();
  double sum_abs_err = 0.0, sum_abs_alpha = 0.0, mape = 0.0;
  std::size_t mape_n = 0;
  std::vector<double> perr;
  for (std::size_t i : rows) {
    const auto& s = samples[i];
    const double a = predict(m, s.x);
    const double e = a - s.label;
    r.mse += e * e;
    sum_abs_err += std::abs(e);
    sum_abs_alpha += std::abs(s.label);
    if (std::abs(s.label) > 1e-6) {
      mape += std::abs(e) / std::abs(s.label);
      ++mape_n;
    }
    perr.push_back(std::abs(recover_from_features(m, a, s.x) - s.p_shed));
  }
  if (!rows.empty()) {
    r.mse /= static_cast<double>(rows.size());
    r.p_err_mean = std::accumulate(perr.begin(), perr.end(), 0.0) / static_cast<double>(perr.size());
    r.p_err_min = *std::min_element(perr.begin(), perr.end());
    r.p_err_max = *std::max_element(perr.begin(), perr.end());
    r.p_err_q1 = quantile(perr, 0.25);
    r.p_err_median = quantile(perr, 0.5);
    r.p_err_q3 = quantile(perr, 0.75);
  }
  r.alpha_err_pct = sum_abs_alpha > 0.0 ? 100.0 * sum_abs_err / sum_abs_alpha : (sum_abs_err > 0.0 ? INFINITY : 0.0);
  r.mape_pct = mape_n ? 100.0 * mape / static_cast<double>(mape_n) : 0.0;
  return r;
}

inline std::string metrics_csv_header() {
  return "bus,n_train,n_test,mse,alpha_err_pct,mape_pct,p_err_mean_mw,p_err_min_mw,p_err_q1_mw,p_err_median_mw,"
         "p_err_q3_mw,p_err_max_mw\n";
}

inline std::string metrics_csv_row(const RegressionMetrics& r) {
  using detail::num17;
  std::ostringstream o;
  o << r.bus << ',' << r.n_train << ',' << r.n_test << ',' << num17(r.mse) << ',' << num17(r.alpha_err_pct) << ','
    << num17(r.mape_pct) << ',' << num17(r.p_err_mean) << ',' << num17(r.p_err_min) << ',' << num17(r.p_err_q1) << ','
    << num17(r.p_err_median) << ',' << num17(r.p_err_q3) << ',' << num17(r.p_err_max) << '\n';
  return o.str();
}

struct TrainedBus {
  BusModel model;
  RegressionMetrics metrics;
  Split split;
};

namespace detail {

inline void gather(const std::vector<LabeledSample>& s, const std::vector<std::size_t>& rows, const Normalizer& norm,
                   std::vector<double>& x) {
  const std::size_t d = norm.mean.size();
  x.assign(rows.size() * d, 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) norm.apply(s[rows[k]].x, &x[k * d]);
}

inline Normalizer fit_normalizer(const std::vector<LabeledSample>& s, const std::vector<std::size_t>& rows) {
  std::vector<const std::vector<double>*> ptrs;
  for (std::size_t i : rows) ptrs.push_back(&s[i].x);
  return Normalizer::fit(ptrs);
}

inline void check_samples(const BusDataset& data) {
  if (data.samples.size() < 50)
    throw ValidationError("bus " + std::to_string(data.bus) + ": need at least 50 samples, have " +
                          std::to_string(data.samples.size()));
  for (const auto& s : data.samples)
    if (s.x.size() != data.names.size()) throw ValidationError("sample length differs from feature header");
}

inline void add_common_meta(BusModel& m, const TrainOptions& opt, const FitReport& rep) {
  m.meta = {{"optimizer", "adam"},
            {"seed", std::to_string(opt.seed)},
            {"learning_rate", num17(opt.learning_rate)},
            {"batch", std::to_string(opt.batch)},
            {"weight_decay", num17(opt.weight_decay)},
            {"patience", std::to_string(opt.patience)},
            {"lr_decay", num17(opt.lr_decay)},
            {"lr_patience", std::to_string(opt.lr_patience)},
            {"epochs", std::to_string(rep.epochs)},
            {"best_epoch", std::to_string(rep.best_epoch)},
            {"train_loss", num17(rep.train_loss)},
            {"val_loss", num17(rep.val_loss)}};
}

}  // namespace detail

/// Regressor of alpha on local features. The model keeps the bus cost and
/// nominal demand so that it can recover MW decisions on its own.
inline TrainedBus train_bus_model(const BusDataset& data, const FlexibilityCost& cost, double pd_nominal,
                                  const TrainOptions& opt) {
  detail::check_samples(data);
  TrainedBus out;
  out.split = make_split(data.samples.size(), opt);
  std::vector<std::size_t> train_rows = out.split.fit;
  train_rows.insert(train_rows.end(), out.split.val.begin(), out.split.val.end());

  BusModel& m = out.model;
  m.bus = data.bus;
  m.cost = cost;
  m.pd_nominal = pd_nominal;
  m.input = detail::fit_normalizer(data.samples, train_rows);
  double mean = 0.0, var = 0.0;
  for (std::size_t i : train_rows) mean += data.samples[i].label;
  mean /= static_cast<double>(train_rows.size());
  for (std::size_t i : train_rows) var += (data.samples[i].label - mean) * (data.samples[i].label - mean);
  const double sd = std::sqrt(var / static_cast<double>(train_rows.size()));
  m.target_mean = mean;
  m.target_std = sd > 1e-9 * std::max(1.0, std::abs(mean)) ? sd : 1.0;

  std::vector<std::size_t> sizes{data.names.size()};
  sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
  sizes.push_back(1);
  m.net = Mlp(sizes, opt.activation);
  m.net.initialize(derive_seed(opt.seed, static_cast<std::uint64_t>(data.bus), 1), true);

  std::vector<double> xf, xv, tf, tv;
  detail::gather(data.samples, out.split.fit, m.input, xf);
  detail::gather(data.samples, out.split.val, m.input, xv);
  for (std::size_t i : out.split.fit) tf.push_back((data.samples[i].label - m.target_mean) / m.target_std);
  for (std::size_t i : out.split.val) tv.push_back((data.samples[i].label - m.target_mean) / m.target_std);
  const auto rep = detail::fit(m.net, xf, tf, xv, tv, LossKind::mse, opt,
                               derive_seed(opt.seed, static_cast<std::uint64_t>(data.bus), 2));
  detail::add_common_meta(m, opt, rep);

  m.meta.emplace_back("n_train", std::to_string(train_rows.size()));
  out.metrics = evaluate_regression(m, data.samples, out.split.test);
  out.metrics.n_train = train_rows.size();
  return out;
}

struct TrainedClassifier {
  BusModel model;
  double accuracy = 0.0;
  Split split;
};

inline double classification_accuracy(const BusModel& m, const std::vector<LabeledSample>& samples,
                                      const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : rows) hits += predict_class(m, samples[i].x) == samples[i].contingency;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

/// Softmax classifier of the contingency id from local features.
inline TrainedClassifier train_classifier(const BusDataset& data, const TrainOptions& opt) {
  detail::check_samples(data);
  TrainedClassifier out;
  out.split = make_split(data.samples.size(), opt);
  std::vector<std::size_t> train_rows = out.split.fit;
  train_rows.insert(train_rows.end(), out.split.val.begin(), out.split.val.end());

  BusModel& m = out.model;
  m.bus = data.bus;
  m.kind = "classifier";
  std::map<std::string, std::size_t> cls;
  for (const auto& s : data.samples)
    if (!cls.count(s.contingency)) {
      cls.emplace(s.contingency, m.classes.size());
      m.classes.push_back(s.contingency);
    }
  m.input = detail::fit_normalizer(data.samples, train_rows);
  std::vector<std::size_t> sizes{data.names.size()};
  sizes.insert(sizes.end(), opt.hidden.begin(), opt.hidden.end());
  sizes.push_back(m.classes.size());
  m.net = Mlp(sizes, opt.activation);
  m.net.initialize(derive_seed(opt.seed, static_cast<std::uint64_t>(data.bus), 3));

  std::vector<double> xf, xv, tf, tv;
  detail::gather(data.samples, out.split.fit, m.input, xf);
  detail::gather(data.samples, out.split.val, m.input, xv);
  for (std::size_t i : out.split.fit) tf.push_back(static_cast<double>(cls.at(data.samples[i].contingency)));
  for (std::size_t i : out.split.val) tv.push_back(static_cast<double>(cls.at(data.samples[i].contingency)));
  const auto rep = detail::fit(m.net, xf, tf, xv, tv, LossKind::softmax_xent, opt,
                               derive_seed(opt.seed, static_cast<std::uint64_t>(data.bus), 4));
  detail::add_common_meta(m, opt, rep);
  out.accuracy = classification_accuracy(m, data.samples, out.split.test);
  return out;
}

inline std::string meta_value(const BusModel& m, const std::string& key, const std::string& fallback = "") {
  for (const auto& [k, v] : m.meta)
    if (k == key) return v;
  return fallback;
}

// ----------------------------------------------------------- serialization

inline std::string serialize_model(const BusModel& m) {
  using detail::num17;
  std::ostringstream o;
  auto vec = [&](const char* key, const std::vector<double>& v) {
    o << key;
    for (double x : v) o << ' ' << num17(x);
    o << '\n';
  };
  o << kModelMagic << '\n';
  o << "layout " << m.layout_version << '\n';
  o << "kind " << m.kind << '\n';
  o << "bus " << m.bus << '\n';
  o << "activation " << to_string(m.net.activation()) << '\n';
  o << "layers";
  for (std::size_t s : m.net.sizes()) o << ' ' << s;
  o << '\n';
  vec("input_mean", m.input.mean);
  vec("input_std", m.input.std);
  o << "input_flagged";
  for (char f : m.input.flagged) o << ' ' << int(f);
  o << '\n';
  o << "target " << num17(m.target_mean) << ' ' << num17(m.target_std) << '\n';
  const auto& c = m.cost;
  o << "cost " << num17(c.a1) << ' ' << num17(c.a2) << ' ' << num17(c.b2) << ' ' << num17(c.c2) << ' '
    << num17(c.reserve_down) << ' ' << num17(c.reserve_up) << ' ' << num17(c.sheddable_cap) << '\n';
  o << "pd_nominal " << num17(m.pd_nominal) << '\n';
  o << "classes " << m.classes.size();
  for (const auto& s : m.classes) o << ' ' << s;
  o << '\n';
  for (const auto& [k, v] : m.meta) o << "meta " << k << ' ' << v << '\n';
  const auto& sz = m.net.sizes();
  for (std::size_t l = 0; l + 1 < sz.size(); ++l) {
    o << "weights " << l << ' ' << sz[l + 1] << ' ' << sz[l] << '\n';
    for (std::size_t r = 0; r < sz[l + 1]; ++r) {
      for (std::size_t col = 0; col < sz[l]; ++col) o << (col ? " " : "") << num17(m.net.w(l, r, col));
      o << '\n';
    }
    o << "bias " << l;
    for (std::size_t r = 0; r < sz[l + 1]; ++r) o << ' ' << num17(m.net.b(l, r));
    o << '\n';
  }
  o << "end\n";
  return o.str();
}

inline BusModel parse_model(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  auto next = [&](const std::string& key) -> std::istringstream {
    do {
      if (!std::getline(in, line)) throw ParseError(ln, "model file ends before '" + key + "'");
      ++ln;
    } while (line.empty());
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) throw ParseError(ln, "expected '" + key + "', found '" + k + "'");
    return ls;
  };
  auto nums = [&](std::istringstream& ls, std::size_t n) {
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) v.push_back(parse_csv_number(tok, ln));
    if (v.size() != n) throw ParseError(ln, "expected " + std::to_string(n) + " values, found " + std::to_string(v.size()));
    return v;
  };
  if (!std::getline(in, line) || line != kModelMagic) throw ParseError(1, "not a model file (bad magic line)");
  ln = 1;
  BusModel m;
  next("layout") >> m.layout_version;
  next("kind") >> m.kind;
  if (m.kind != "regression" && m.kind != "classifier") throw ParseError(ln, "unknown model kind '" + m.kind + "'");
  next("bus") >> m.bus;
  std::string act;
  next("activation") >> act;
  std::vector<std::size_t> sizes;
  {
    auto ls = next("layers");
    std::size_t s;
    while (ls >> s) sizes.push_back(s);
  }
  m.net = Mlp(sizes, parse_activation(act));
  const std::size_t d = sizes.front();
  {
    auto ls = next("input_mean");
    m.input.mean = nums(ls, d);
  }
  {
    auto ls = next("input_std");
    m.input.std = nums(ls, d);
  }
  {
    auto ls = next("input_flagged");
    for (double f : nums(ls, d)) m.input.flagged.push_back(f != 0.0);
  }
  for (double s : m.input.std)
    if (!(s > 0.0)) throw ParseError(ln, "normalizer std must be positive");
  {
    auto ls = next("target");
    auto t = nums(ls, 2);
    m.target_mean = t[0];
    m.target_std = t[1];
  }
  {
    auto ls = next("cost");
    auto c = nums(ls, 7);
    m.cost = {m.bus, c[0], c[1], c[2], c[3], c[4], c[5], c[6], 0.0, 0.0};
  }
  {
    auto ls = next("pd_nominal");
    m.pd_nominal = nums(ls, 1)[0];
  }
  {
    auto ls = next("classes");
    std::size_t n = 0;
    ls >> n;
    std::string s;
    while (ls >> s) m.classes.push_back(s);
    if (m.classes.size() != n) throw ParseError(ln, "class count mismatch");
    if (m.kind == "classifier" && n != sizes.back()) throw ParseError(ln, "class count differs from output size");
  }
  for (;;) {
    if (!std::getline(in, line)) throw ParseError(ln, "model file ends before weights");
    ++ln;
    if (line.rfind("meta ", 0) != 0) break;
    const auto sp = line.find(' ', 5);
    m.meta.emplace_back(line.substr(5, sp - 5), sp == std::string::npos ? "" : line.substr(sp + 1));
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    std::istringstream ls(line);
    std::string key;
    std::size_t li = 0, rows = 0, cols = 0;
    ls >> key >> li >> rows >> cols;
    if (key != "weights" || li != l || rows != sizes[l + 1] || cols != sizes[l])
      throw ParseError(ln, "bad weights header for layer " + std::to_string(l));
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw ParseError(ln, "truncated weight matrix");
      ++ln;
      std::istringstream rs(line);
      auto v = nums(rs, cols);
      for (std::size_t c = 0; c < cols; ++c) m.net.w(l, r, c) = v[c];
    }
    auto bs = next("bias");
    std::size_t bl = 0;
    bs >> bl;
    if (bl != l) throw ParseError(ln, "bias layer index mismatch");
    auto v = nums(bs, rows);
    for (std::size_t r = 0; r < rows; ++r) m.net.b(l, r) = v[r];
    if (l + 2 < sizes.size()) {
      if (!std::getline(in, line)) throw ParseError(ln, "model file ends before next layer");
      ++ln;
    }
  }
  next("end");
  return m;
}

}  // namespace lshed
