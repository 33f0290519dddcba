#include <gtest/gtest.h>

#include <random>

#include "lshed/identifiability.hpp"
#include "test_cases.hpp"

using namespace lshed;

namespace {

std::vector<double> random_balanced(std::mt19937_64& rng, const NetworkCase& c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> p(c.num_buses());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (i != c.slack_index()) sum += p[i] = u(rng);
  p[c.slack_index()] = -sum;
  return p;
}

double max_flow_change_error(const NetworkCase& c, const Contingency& k, const std::vector<double>& p) {
  auto sens = outage_sensitivity(c, k);
  auto pre = solve_dc(c, p);
  auto post = solve_dc(c, p, &k);
  std::vector<double> fk;
  for (int id : k.outaged_branches) fk.push_back(pre.flows[c.branch_index(id)]);
  auto predicted = sens.d * fk;
  double err = 0.0;
  for (std::size_t l = 0; l < c.num_branches(); ++l)
    err = std::max(err, std::abs((post.flows[l] - pre.flows[l]) - predicted[l]));
  return err;
}

}  // namespace

TEST(Isf, TwoBusAndSlackColumn) {
  auto c = parse_case(testcases::two_bus());
  auto s = isf_matrix(c);
  EXPECT_NEAR(s(0, 1), -1.0, 1e-12);
  EXPECT_EQ(s(0, 0), 0.0);
}

TEST(OutageSensitivity, OutagedRowCancelsFlow) {
  auto c = parse_case_file(LSHED_DATA_DIR "/case6.m");
  auto k = make_contingency("k", {5});
  auto s = outage_sensitivity(c, k);
  ASSERT_EQ(s.d.rows(), c.num_branches());
  ASSERT_EQ(s.d.cols(), 1u);
  EXPECT_EQ(s.d(4, 0), -1.0);
}

TEST(OutageSensitivity, RingReroutesEverything) {
  auto c = parse_case(testcases::three_bus_ring());
  auto s = outage_sensitivity(c, make_contingency("k", {1}));
  // Branch (1,2) out: its flow goes 1 -> 3 -> 2, i.e. +f on branch 3 and +f on 2 -> 3 reversed.
  EXPECT_NEAR(s.d(2, 0), 1.0, 1e-12);
  EXPECT_NEAR(s.d(1, 0), -1.0, 1e-12);
  EXPECT_EQ(s.d(0, 0), -1.0);
}

TEST(OutageSensitivity, MatchesResolveOracle) {
  auto c = parse_case_file(LSHED_DATA_DIR "/case6.m");
  std::mt19937_64 rng(17);
  int draws = 0;
  while (draws < 100) {
    std::vector<int> ids{1 + static_cast<int>(rng() % 11)};
    if (rng() % 2) ids.push_back(1 + static_cast<int>(rng() % 11));
    auto k = make_contingency("k", ids);
    if (!check_connectivity(c, k)) continue;
    EXPECT_LE(max_flow_change_error(c, k, random_balanced(rng, c)), 1e-8);
    ++draws;
  }
}

TEST(OutageSensitivity, SingleLineMatchesClassicFormula) {
  auto c = parse_case_file(LSHED_DATA_DIR "/case6.m");
  auto isf = isf_matrix(c);
  for (int id = 1; id <= 11; ++id) {
    auto s = outage_sensitivity(c, make_contingency("k", {id}));
    auto classic = single_line_lodf(c, isf, id);
    for (std::size_t l = 0; l < c.num_branches(); ++l) EXPECT_NEAR(s.d(l, 0), classic[l], 1e-10);
  }
}

TEST(OutageSensitivity, IslandingThrows) {
  auto c = parse_case(testcases::two_bus());
  EXPECT_THROW(outage_sensitivity(c, make_contingency("k", {1})), IslandingError);
}

TEST(LocalSubmatrix, RowsFollowIncidence) {
  auto c = parse_case_file(LSHED_DATA_DIR "/case6.m");
  auto s = outage_sensitivity(c, make_contingency("k", {5}));
  const std::size_t bus = c.bus_index(4);  // branches 2, 5, 10
  auto local = local_submatrix(s, c, bus);
  ASSERT_EQ(local.rows(), 3u);
  EXPECT_EQ(local(0, 0), s.d(1, 0));
  EXPECT_EQ(local(1, 0), -1.0);
  EXPECT_EQ(local(2, 0), s.d(9, 0));
}

TEST(PrincipalAngles, Basics) {
  DenseMatrix a{{1}, {2}, {3}};
  auto same = principal_angles(a, a);
  ASSERT_EQ(same.sigma.size(), 1u);
  EXPECT_NEAR(same.sigma[0], 1.0, 1e-12);
  EXPECT_NEAR(same.beta[0], 0.0, 1e-6);
  EXPECT_FALSE(same.identifiable);

  auto ortho = principal_angles(DenseMatrix{{1}, {0}, {0}}, DenseMatrix{{0}, {1}, {0}});
  EXPECT_NEAR(ortho.sigma[0], 0.0, 1e-15);
  EXPECT_NEAR(ortho.beta[0], std::numbers::pi / 2, 1e-12);
  EXPECT_TRUE(ortho.identifiable);

  // Planes sharing the x axis.
  auto shared = principal_angles(DenseMatrix{{1, 0}, {0, 1}, {0, 0}}, DenseMatrix{{1, 0}, {0, 1}, {0, 1}});
  ASSERT_EQ(shared.beta.size(), 2u);
  EXPECT_NEAR(shared.beta[0], 0.0, 1e-6);
  EXPECT_NEAR(shared.beta[1], std::numbers::pi / 4, 1e-12);
  EXPECT_TRUE(shared.identifiable);

  auto empty = principal_angles(DenseMatrix(3, 1), a);
  EXPECT_TRUE(empty.sigma.empty());
  EXPECT_FALSE(empty.identifiable);
  EXPECT_FALSE(empty.warning.empty());
}

TEST(PrincipalAngles, SymmetricAndBasisInvariant) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    DenseMatrix a(5, 2), b(5, 2), m(2, 2);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        a(i, j) = u(rng);
        b(i, j) = u(rng);
      }
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) m(i, j) = u(rng) + (i == j ? 2.0 : 0.0);
    auto ab = principal_angles(a, b);
    auto ba = principal_angles(b, a);
    auto am = principal_angles(a * m, b);
    ASSERT_EQ(ab.sigma.size(), 2u);
    for (std::size_t l = 0; l < 2; ++l) {
      EXPECT_NEAR(ab.sigma[l], ba.sigma[l], 1e-12);
      EXPECT_NEAR(ab.sigma[l], am.sigma[l], 1e-10);
      EXPECT_GE(ab.beta[l], 0.0);
      EXPECT_LE(ab.beta[l], std::numbers::pi / 2);
    }
    EXPECT_LE(ab.beta[0], ab.beta[1]);
    EXPECT_LE(ab.max_overshoot, 1e-10);
  }
}

TEST(CheckPair, IdenticalIsNotIdentifiable) {
  auto c = parse_case_file(LSHED_DATA_DIR "/case6.m");
  auto k = make_contingency("a", {5});
  EXPECT_FALSE(check_pair(c, c.bus_index(4), k, k).identifiable);
}

TEST(CheckPair, SingleMeasurementBusCannotTellSinglesApart) {
  // Bus 4 hangs off bus 3 by one branch in a 4-bus case.
  auto c = parse_case(R"(mpc.baseMVA = 100;
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
  const std::size_t bus = c.bus_index(4);
  ASSERT_EQ(c.incident_branches(bus).size(), 1u);
  for (int a = 1; a <= 3; ++a)
    for (int b = a + 1; b <= 3; ++b) {
      auto sep = check_pair(c, bus, make_contingency("a", {a}), make_contingency("b", {b}));
      EXPECT_FALSE(sep.identifiable);
    }
}

TEST(CheckSet, SingletonAndDuplicate) {
  auto c = parse_case_file(LSHED_DATA_DIR "/case6.m");
  const std::size_t bus = c.bus_index(5);
  auto one = check_set(c, bus, {make_contingency("a", {5})});
  EXPECT_TRUE(one.all_identifiable);
  EXPECT_TRUE(one.pairs.empty());
  auto dup = check_set(c, bus, {make_contingency("a", {5}), make_contingency("b", {5, 7}), make_contingency("c", {5})});
  EXPECT_FALSE(dup.all_identifiable);
  ASSERT_EQ(dup.pairs.size(), 3u);
  EXPECT_FALSE(dup.pairs[1].identifiable);  // (a, c)
  auto csv = identifiability_csv_header() + identifiability_csv_rows(dup);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}
