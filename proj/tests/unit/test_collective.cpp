#include <gtest/gtest.h>

#include "oracles.hpp"
#include "perfpred/collective.hpp"

using namespace perfpred::collective;

namespace {

// P0 uniform on {0..9} with label 0; {10..19} carry no mass.
TabularPopulation twenty_points() {
  std::vector<std::array<long long, 2>> w(20, {0, 0});
  for (std::size_t x = 0; x < 10; ++x) w[x] = {1, 0};
  return TabularPopulation::from_weights(w);
}

std::vector<std::size_t> shift_by_ten() {
  std::vector<std::size_t> g(20);
  for (std::size_t x = 0; x < 20; ++x) g[x] = x < 10 ? x + 10 : x;
  return g;
}

}  // namespace

TEST(Mixture, SignalPointsGetCollectiveMass) {
  const auto p0 = twenty_points();
  const SignalPlan plan{shift_by_ten(), 1, Rational(1, 5)};
  const auto mixed = mixture(p0, plan);
  for (std::size_t x = 10; x < 20; ++x) {
    EXPECT_EQ(mixed.mass(x, 1), Rational(1, 50));
    EXPECT_EQ(mixed.mass(x, 0), 0);
  }
  for (std::size_t x = 0; x < 10; ++x) EXPECT_EQ(mixed.mass(x, 0), Rational(2, 25));
  EXPECT_EQ(mixed.total(), 1);
  EXPECT_EQ(signal_density(p0, plan), 0);
}

TEST(Mixture, FullParticipationIsPureSignal) {
  const auto p0 = twenty_points();
  const SignalPlan plan{shift_by_ten(), 1, Rational(1)};
  const auto mixed = mixture(p0, plan);
  for (std::size_t x = 0; x < 10; ++x) EXPECT_EQ(mixed.marginal(x), 0);
}

TEST(Mixture, SmallCollectiveApproachesBase) {
  const auto p0 = twenty_points();
  Rational prev = 2;
  for (long long den : {10LL, 1000LL, 1000000LL}) {
    const auto tv = total_variation(p0, mixture(p0, {shift_by_ten(), 1, Rational(1, den)}));
    EXPECT_EQ(tv, Rational(1, den));
    EXPECT_LT(tv, prev);
    prev = tv;
  }
}

TEST(Mixture, InvalidPlansAreRejected) {
  const auto p0 = twenty_points();
  auto g = shift_by_ten();
  g[3] = 20;
  EXPECT_THROW(mixture(p0, {g, 1, Rational(1, 2)}), std::invalid_argument);
  EXPECT_THROW(mixture(p0, {shift_by_ten(), 1, Rational(0)}), std::invalid_argument);
  EXPECT_THROW(mixture(p0, {shift_by_ten(), 2, Rational(1, 2)}), std::invalid_argument);
  EXPECT_THROW(mixture(p0, {std::vector<std::size_t>(5, 0), 1, Rational(1, 2)}), std::invalid_argument);
}

TEST(Population, MassChecks) {
  EXPECT_THROW(TabularPopulation({{Rational(1, 2), Rational(1, 3)}}), std::invalid_argument);
  EXPECT_THROW(TabularPopulation::from_weights({{0, 0}}), std::invalid_argument);
  EXPECT_THROW(TabularPopulation::from_weights({{-1, 2}}), std::invalid_argument);
  const auto p = TabularPopulation::from_doubles({{0.1, 0.2}, {0.3, 0.4}});
  EXPECT_EQ(p.total(), 1);
  EXPECT_THROW(TabularPopulation::from_doubles({{0.1, 0.2}}), std::invalid_argument);
}

TEST(BayesFirm, PureSignalPointGoesToTarget) {
  const auto p0 = twenty_points();
  const SignalPlan plan{shift_by_ten(), 1, Rational(1, 5)};
  const auto f = bayes_firm(mixture(p0, plan), 1);
  for (std::size_t x = 0; x < 10; ++x) {
    EXPECT_EQ(f(plan.signal[x]), 1);
    EXPECT_EQ(f(x), 0);
  }
  EXPECT_TRUE(f.zero_mass_points.empty());
}

TEST(BayesFirm, TieGoesAgainstCollective) {
  const TabularPopulation mixed({{Rational(1, 4), Rational(1, 4)}, {Rational(1, 2), Rational(0)}});
  EXPECT_EQ(bayes_firm(mixed, 1)(0), 0);
  EXPECT_EQ(bayes_firm(mixed, 0)(0), 1);
}

TEST(BayesFirm, ZeroMassPointsAreFlagged) {
  const TabularPopulation mixed({{Rational(0), Rational(0)}, {Rational(0), Rational(1)}});
  const auto f = bayes_firm(mixed, 1);
  EXPECT_EQ(f(0), 0);
  ASSERT_EQ(f.zero_mass_points.size(), 1u);
  EXPECT_EQ(f.zero_mass_points[0], 0u);
}

TEST(BayesFirm, ContestedSignalPoint) {
  // w = 1 holds 0.05 of label 0; the collective relabels x = 0 (mass 0.1) onto it.
  const auto p0 = TabularPopulation::from_weights({{10, 0}, {5, 0}, {85, 0}});
  const SignalPlan plan{{1, 2, 2}, 1, Rational(1, 5)};
  const auto mixed = mixture(p0, plan);
  EXPECT_EQ(mixed.mass(1, 1) / mixed.marginal(1), Rational(1, 3));
  EXPECT_EQ(bayes_firm(mixed, 1)(1), 0);
}

TEST(Success, DisjointSignalAlwaysWins) {
  const auto p0 = twenty_points();
  for (const Rational alpha : {Rational(1, 100), Rational(1, 5), Rational(1)}) {
    const SignalPlan plan{shift_by_ten(), 1, alpha};
    const auto f = bayes_firm(mixture(p0, plan), 1);
    EXPECT_EQ(success_probability(p0, plan, f), 1);
    EXPECT_EQ(success_lower_bound(alpha, signal_density(p0, plan)), 1);
  }
}

TEST(Success, BoundOnOverlappingInstance) {
  std::vector<std::array<long long, 2>> w(20, {0, 0});
  for (std::size_t x = 0; x < 10; ++x) w[x] = {19, 0};
  w[10] = {10, 0};
  const auto p0 = TabularPopulation::from_weights(w);
  const SignalPlan plan{shift_by_ten(), 1, Rational(1, 5)};
  const Rational xi = signal_density(p0, plan);
  EXPECT_EQ(xi, Rational(1, 20));
  EXPECT_EQ(success_lower_bound(plan.alpha, xi), Rational(4, 5));
  const auto f = bayes_firm(mixture(p0, plan), 1);
  const Rational s = success_probability(p0, plan, f);
  EXPECT_EQ(s, Rational(171, 200));
  EXPECT_GE(s, Rational(4, 5));

  oracle::Table t;
  for (std::size_t x = 0; x < 20; ++x) t.mass.push_back({to_double(p0.mass(x, 0)), to_double(p0.mass(x, 1))});
  const auto o = oracle::collective_brute_force(t, plan.signal, 1, 0.2);
  EXPECT_NEAR(o.xi, 0.05, 1e-15);
  EXPECT_NEAR(o.success, 0.855, 1e-12);
}

TEST(Success, FullParticipationWinsRegardlessOfOverlap) {
  const auto p0 = TabularPopulation::from_weights({{3, 1}, {2, 2}, {1, 1}});
  const SignalPlan plan{{1, 1, 2}, 0, Rational(1)};
  EXPECT_EQ(success_probability(p0, plan, bayes_firm(mixture(p0, plan), 0)), 1);
}

TEST(Revenue, UpliftIsSuccessTimesBeta) {
  std::vector<std::array<long long, 2>> w(20, {0, 0});
  for (std::size_t x = 0; x < 10; ++x) w[x] = {1, 0};
  const auto p0 = TabularPopulation::from_weights(w);
  std::vector<std::size_t> g(20);
  for (std::size_t x = 0; x < 20; ++x) g[x] = x < 8 ? x + 10 : x;
  const SignalPlan plan{g, 1, Rational(1, 5)};
  const auto f = bayes_firm(mixture(p0, plan), 1);
  EXPECT_EQ(success_probability(p0, plan, f), Rational(4, 5));
  RevenueModel rev{std::vector<Rational>(20, Rational(3)), Rational(2), Rational(0)};
  EXPECT_EQ(revenue_uplift(p0, plan, f, rev), Rational(8, 5));
  rev.beta_perf = 0;
  EXPECT_EQ(revenue_uplift(p0, plan, f, rev), 0);
}

TEST(Revenue, BaselineMustBeInvariant) {
  const auto p0 = twenty_points();
  const SignalPlan plan{shift_by_ten(), 1, Rational(1, 5)};
  const auto f = bayes_firm(mixture(p0, plan), 1);
  std::vector<Rational> h(20, Rational(1));
  h[13] = 2;
  try {
    revenue_uplift(p0, plan, f, {h, Rational(1), Rational(0)});
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("x = 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(revenue_uplift(p0, plan, f, {std::vector<Rational>(20, Rational(1)), Rational(1), Rational(1)}),
               std::invalid_argument);
  const SignalPlan demote{shift_by_ten(), 0, Rational(1, 5)};
  EXPECT_THROW(revenue_uplift(p0, demote, bayes_firm(mixture(p0, demote), 0),
                              {std::vector<Rational>(20, Rational(1)), Rational(1), Rational(0)}),
               std::invalid_argument);
}

TEST(BayesFirm, NoImprovingFlips) {
  const auto p0 = TabularPopulation::from_weights({{3, 1}, {2, 2}, {1, 4}, {0, 0}});
  const SignalPlan plan{{3, 1, 2, 3}, 1, Rational(2, 7)};
  const auto mixed = mixture(p0, plan);
  EXPECT_EQ(improving_flips(mixed, bayes_firm(mixed, 1)), 0u);
  Classifier wrong = bayes_firm(mixed, 1);
  wrong.labels[3] = 1 - wrong.labels[3];
  EXPECT_EQ(improving_flips(mixed, wrong), 1u);
}
