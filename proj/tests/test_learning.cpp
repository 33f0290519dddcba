#include <gtest/gtest.h>

#include <random>

#include "lshed/training.hpp"

using namespace lshed;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

BusDataset synthetic(std::size_t n, std::size_t d, std::uint64_t seed, auto label) {
  std::mt19937_64 rng(seed);
  BusDataset ds;
  ds.bus = 7;
  for (std::size_t k = 0; k < d; ++k) ds.names.push_back("x" + std::to_string(k));
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSample s;
    s.x = random_vector(rng, d);
    s.label = label(s.x);
    s.contingency = "c";
    s.seed = i;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

NetworkCase case6() { return parse_case_file(LSHED_DATA_DIR "/case6.m"); }

}  // namespace

TEST(GradientCheck, LinearSingleLayerIsExact) {
  std::mt19937_64 rng(1);
  Mlp net({4, 2}, Activation::linear);
  net.initialize(5);
  auto x = random_vector(rng, 4 * 6);
  auto t = random_vector(rng, 2 * 6);
  // Quadratic loss: central differences carry no truncation error, so a wide
  // step keeps roundoff out of the comparison.
  EXPECT_LE(gradient_check(net, x, t, 6, LossKind::mse, 0.0, 1e-2), 1e-10);
}

TEST(GradientCheck, TanhDeepNet) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Mlp net({5, 6, 4, 3, 1}, Activation::tanh);
    net.initialize(100 + static_cast<std::uint64_t>(trial));
    auto x = random_vector(rng, 5 * 8);
    auto t = random_vector(rng, 8);
    EXPECT_LE(gradient_check(net, x, t, 8, LossKind::mse, 1e-3), 1e-5);
  }
}

TEST(GradientCheck, ReluAwayFromKinksAndSoftmax) {
  std::mt19937_64 rng(3);
  int checked = 0;
  for (int trial = 0; trial < 50 && checked < 5; ++trial) {
    Mlp net({5, 7, 6, 3}, Activation::relu);
    net.initialize(200 + static_cast<std::uint64_t>(trial));
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t r = 0; r < net.sizes()[l + 1]; ++r) net.b(l, r) = 0.1 * static_cast<double>(r % 3);
    auto x = random_vector(rng, 5 * 4);
    if (net.min_kink_margin(x, 4) < 1e-3) continue;
    std::vector<double> cls{0, 2, 1, 2};
    EXPECT_LE(gradient_check(net, x, cls, 4, LossKind::softmax_xent, 1e-4), 1e-5);
    auto t = random_vector(rng, 3 * 4);
    EXPECT_LE(gradient_check(net, x, t, 4, LossKind::mse, 1e-4), 1e-5);
    ++checked;
  }
  EXPECT_EQ(checked, 5);
}

TEST(Predict, ZeroWeightsGiveBias) {
  BusModel m;
  m.net = Mlp({3, 4, 1}, Activation::relu);
  m.net.b(1, 0) = 2.5;
  m.input = Normalizer{{0, 0, 0}, {1, 1, 1}, {0, 0, 0}};
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(predict(m, random_vector(rng, 3, -10, 10)), 2.5);
  EXPECT_THROW(predict(m, std::vector<double>{1, 2}), ValidationError);
  EXPECT_THROW(predict(m, std::vector<double>{1, 2, 3}, kFeatureLayoutVersion + 1), ValidationError);
}

TEST(Normalizer, ConstantFeaturesAreFlagged) {
  std::vector<double> a{1, 5}, b{3, 5};
  auto n = Normalizer::fit({&a, &b});
  EXPECT_EQ(n.mean[0], 2.0);
  EXPECT_EQ(n.std[0], 1.0);
  EXPECT_FALSE(n.flagged[0]);
  EXPECT_EQ(n.std[1], 1.0);
  EXPECT_TRUE(n.flagged[1]);
}

TEST(Train, ConstantLabelIsLearned) {
  auto ds = synthetic(200, 3, 5, [](const std::vector<double>&) { return 42.0; });
  TrainOptions opt;
  opt.hidden = {8, 8};
  opt.max_epochs = 50;
  auto r = train_bus_model(ds, FlexibilityCost{7, 0.01, 0.04, 0, 0, 0, 10, 50, 0, 0}, 100.0, opt);
  EXPECT_LE(r.metrics.mse, 1e-6);
  EXPECT_EQ(r.metrics.n_test, 60u);
  EXPECT_EQ(r.metrics.n_train, 140u);
}

TEST(Train, LinearTargetMape) {
  auto ds = synthetic(2000, 4, 6, [](const std::vector<double>& x) {
    return 20.0 + 3.0 * x[0] - 2.0 * x[1] + 1.5 * x[2] + 0.5 * x[3];
  });
  TrainOptions opt;
  opt.max_epochs = 300;
  auto r = train_bus_model(ds, FlexibilityCost{7, 0.01, 0.04, 0, 0, 0, 10, 50, 0, 0}, 100.0, opt);
  EXPECT_LE(r.metrics.mape_pct, 0.5);
}

TEST(Train, TooFewSamplesRejected) {
  auto ds = synthetic(20, 2, 7, [](const std::vector<double>&) { return 1.0; });
  EXPECT_THROW(train_bus_model(ds, FlexibilityCost{}, 1.0, TrainOptions{}), ValidationError);
}

TEST(Train, DeterministicAndSplitIndependentOfBus) {
  auto ds = synthetic(120, 3, 8, [](const std::vector<double>& x) { return x[0] * x[1]; });
  TrainOptions opt;
  opt.hidden = {6};
  opt.max_epochs = 20;
  auto a = train_bus_model(ds, FlexibilityCost{}, 1.0, opt);
  auto b = train_bus_model(ds, FlexibilityCost{}, 1.0, opt);
  EXPECT_EQ(a.model.net.params(), b.model.net.params());
  EXPECT_EQ(metrics_csv_row(a.metrics), metrics_csv_row(b.metrics));
  ds.bus = 9;
  auto c = train_bus_model(ds, FlexibilityCost{}, 1.0, opt);
  EXPECT_EQ(a.split.test, c.split.test);
}

TEST(ModelFile, RoundTripIsExact) {
  auto ds = synthetic(100, 3, 9, [](const std::vector<double>& x) { return std::sin(3 * x[0]) + x[2]; });
  TrainOptions opt;
  opt.hidden = {5, 4};
  opt.max_epochs = 10;
  auto r = train_bus_model(ds, FlexibilityCost{7, 0.01, 0.04, 1, -0.5, -3, 10, 50, 0, 0}, 80.0, opt);
  const std::string text = serialize_model(r.model);
  auto back = parse_model(text);
  EXPECT_EQ(serialize_model(back), text);
  EXPECT_EQ(back.input.mean, r.model.input.mean);
  EXPECT_EQ(back.cost, r.model.cost);
  for (const auto& s : ds.samples) EXPECT_EQ(predict(back, s.x), predict(r.model, s.x));
  EXPECT_EQ(metrics_csv_row(evaluate_regression(back, ds.samples, r.split.test)),
            metrics_csv_row(evaluate_regression(r.model, ds.samples, r.split.test)));
  EXPECT_THROW(parse_model("not a model\n"), ParseError);
  EXPECT_THROW(parse_model(text.substr(0, text.size() / 2)), ParseError);
}

TEST(Classifier, SingleClassIsPerfect) {
  auto ds = synthetic(100, 3, 10, [](const std::vector<double>&) { return 0.0; });
  TrainOptions opt;
  opt.hidden = {4};
  opt.max_epochs = 5;
  auto r = train_classifier(ds, opt);
  EXPECT_EQ(r.accuracy, 1.0);
  auto back = parse_model(serialize_model(r.model));
  EXPECT_EQ(back.classes, r.model.classes);
}

TEST(Classifier, SeparableClasses) {
  auto ds = synthetic(400, 2, 11, [](const std::vector<double>&) { return 0.0; });
  for (auto& s : ds.samples) s.contingency = s.x[0] + s.x[1] > 0 ? "a" : "b";
  TrainOptions opt;
  opt.hidden = {8};
  opt.max_epochs = 200;
  EXPECT_GE(train_classifier(ds, opt).accuracy, 0.97);
}

TEST(Features, LayoutAndOutagedZero) {
  auto c = case6();
  const std::size_t bus = c.bus_index(4);
  const std::size_t deg = c.incident_branches(bus).size();
  auto names = feature_names(c, bus);
  ASSERT_EQ(names.size(), feature_length(deg));
  auto k = make_contingency("k", {c.incident_branches(bus)[1]});
  auto pre = solve_ac(c);
  AcOptions ac;
  ac.warm_start = &pre;
  auto post = solve_ac(c, &k, ac);
  auto x = build_features(c, bus, pre, post, 60.0, frequency_proxy(pre, post, 60.0, 1.0), k.outaged_branches);
  ASSERT_EQ(x.size(), names.size());
  EXPECT_EQ(x[0], c.buses[bus].p_demand);
  const auto post_p = static_cast<std::size_t>(std::find(names.begin(), names.end(),
                                                         "post_p" + std::to_string(k.outaged_branches[0])) - names.begin());
  const auto post_q = static_cast<std::size_t>(std::find(names.begin(), names.end(),
                                                         "post_q" + std::to_string(k.outaged_branches[0])) - names.begin());
  EXPECT_EQ(x[post_p], 0.0);
  EXPECT_EQ(x[post_q], 0.0);
  EXPECT_NE(x[post_p - deg - 2], 0.0);  // same branch, pre block
}

TEST(Dataset, DeterministicAcrossWorkersAndRoundTrips) {
  auto c = case6();
  std::vector<Contingency> ks{make_contingency("a", {5}), make_contingency("b", {2, 7})};
  GenerationOptions opt;
  opt.samples_per_contingency = 12;
  opt.master_seed = 99;
  opt.workers = 1;
  auto d1 = generate_dataset(c, ks, opt);
  opt.workers = 4;
  auto d4 = generate_dataset(c, ks, opt);
  ASSERT_EQ(d1.buses.size(), c.load_buses().size());
  for (std::size_t b = 0; b < d1.buses.size(); ++b) {
    EXPECT_EQ(d1.buses[b].samples.size(), 24u);
    const auto text = dataset_csv(d1.buses[b]);
    EXPECT_EQ(text, dataset_csv(d4.buses[b]));
    EXPECT_EQ(dataset_csv(parse_dataset_csv(text, d1.buses[b].bus)), text);
  }
  opt.master_seed = 100;
  EXPECT_NE(dataset_csv(generate_dataset(c, ks, opt).buses[0]), dataset_csv(d1.buses[0]));
}

TEST(Dataset, DegenerateRangeGivesIdenticalRows) {
  auto c = case6();
  GenerationOptions opt;
  opt.samples_per_contingency = 4;
  opt.perturb_lo = opt.perturb_hi = 1.0;
  auto d = generate_dataset(c, {make_contingency("a", {5})}, opt);
  for (const auto& bus : d.buses)
    for (const auto& s : bus.samples) {
      EXPECT_EQ(s.x, bus.samples[0].x);
      EXPECT_EQ(s.label, bus.samples[0].label);
    }
}

TEST(Dataset, RejectsBadInput) {
  auto c = case6();
  GenerationOptions opt;
  opt.samples_per_contingency = 2;
  opt.perturb_lo = 1.1;
  opt.perturb_hi = 0.9;
  EXPECT_THROW(generate_dataset(c, {make_contingency("a", {5})}, opt), ValidationError);
  EXPECT_THROW(parse_dataset_csv("a,b\n1,2\n", 1), ParseError);
  EXPECT_THROW(parse_dataset_csv("x,p_shed_mw,label,contingency_id,seed\n1,2,zz,a,3\n", 1), ParseError);
}

TEST(Dataset, IdenticalContingenciesAreIndistinguishable) {
  auto c = case6();
  GenerationOptions opt;
  opt.samples_per_contingency = 150;
  opt.solve_ols = false;
  opt.buses = {c.bus_index(5)};
  auto d = generate_dataset(c, {make_contingency("a", {5}), make_contingency("b", {5})}, opt);
  TrainOptions t;
  t.hidden = {8};
  t.max_epochs = 30;
  const double acc = train_classifier(d.buses[0], t).accuracy;
  EXPECT_GT(acc, 0.3);
  EXPECT_LT(acc, 0.7);
}
