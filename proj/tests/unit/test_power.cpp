#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "perfpred/losses.hpp"
#include "perfpred/power.hpp"

using namespace perfpred;
using namespace perfpred::power;

namespace {

Platform homogeneous(std::size_t n = 10) {
  return Platform({3.0, 2.0, 1.0}, std::vector<Viewer>(n, Viewer{0.4, 0.2, {}}), 2.5);
}

Platform random_platform(Stream& s, std::size_t items, std::size_t viewers) {
  std::vector<double> scores(items);
  for (auto& x : scores) x = s.uniform(0, 10);
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::vector<Viewer> vs(viewers);
  for (auto& v : vs) {
    v.p1 = s.uniform();
    v.p2 = s.uniform(0, v.p1);
    v.affinity.resize(items);
    for (auto& a : v.affinity) a = s.uniform(0.5, 1.0);
  }
  return Platform(scores, vs, sorted[0] - sorted[items - 1] + 1.0);
}

}  // namespace

TEST(PositionEffect, HomogeneousViewers) {
  const auto p = homogeneous(200);
  Stream s(9);
  const auto e = causal_effect_of_position(p, 200, &s);
  EXPECT_NEAR(e.beta, 0.2, 1e-15);
  ASSERT_TRUE(e.mc_beta.has_value());
  EXPECT_LE(std::abs(*e.mc_beta - 0.2), 3.0 * *e.mc_std_error);
}

TEST(PositionEffect, IrrelevantPosition) {
  const Platform p({2.0, 1.0}, std::vector<Viewer>(5, Viewer{0.3, 0.3, {}}), 2.0);
  EXPECT_EQ(causal_effect_of_position(p).beta, 0.0);
}

TEST(PositionEffect, MixedPopulationAverages) {
  std::vector<Viewer> vs(4, Viewer{0.5, 0.1, {}});
  vs.resize(8, Viewer{0.3, 0.3, {}});
  const Platform p({3.0, 2.0, 1.0}, vs, 2.5);
  EXPECT_NEAR(causal_effect_of_position(p).beta, 0.2, 1e-15);
}

TEST(PositionEffect, EmptyPopulationIsAnError) {
  const Platform empty({2.0, 1.0}, {}, 2.0);
  EXPECT_THROW(causal_effect_of_position(empty), std::invalid_argument);
  EXPECT_THROW(performative_power_lower_bound(empty, default_probes(empty)), std::invalid_argument);
}

TEST(PerformativePower, ProbeExamples) {
  const auto p = homogeneous();
  const std::vector<Action> identity{identity_action(p)};
  EXPECT_EQ(performative_power_lower_bound(p, identity).power, 0.0);
  const std::vector<Action> swap{identity_action(p), swap_top_two(p)};
  EXPECT_GE(performative_power_lower_bound(p, swap).power, 0.2 - 1e-12);
  const std::vector<Action> demote{demote_first(p)};
  EXPECT_GE(performative_power_lower_bound(p, demote).power, 0.4 - 1e-12);
  const auto all = performative_power_lower_bound(p, default_probes(p));
  EXPECT_NEAR(all.power, 0.4, 1e-15);
  EXPECT_EQ(all.per_action.size(), 3u);
  EXPECT_EQ(all.argmax, 2u);
  EXPECT_THROW(performative_power_lower_bound(p, std::vector<Action>{}), std::invalid_argument);
}

TEST(PerformativePower, ActionsAreBudgeted) {
  const auto p = homogeneous();
  Action big{"big", {0.0, 0.0, 10.0}};
  EXPECT_THROW(p.check_action(big), std::invalid_argument);
  Action wrong{"wrong", {0.0}};
  EXPECT_THROW(p.check_action(wrong), std::invalid_argument);
  const Platform tight({3.0, 2.0, 1.0}, std::vector<Viewer>(2, Viewer{0.4, 0.2, {}}), 1.5);
  EXPECT_THROW(demote_first(tight), std::invalid_argument);
  EXPECT_EQ(default_probes(tight).size(), 2u);
}

TEST(PerformativePower, SwapRealizesPositionEffect) {
  Stream s(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_platform(s, 2 + s.index(5), 1 + s.index(20));
    const std::vector<Action> probes{identity_action(p), swap_top_two(p)};
    ASSERT_GE(performative_power_lower_bound(p, probes).power + 1e-12, causal_effect_of_position(p).beta);
  }
}

TEST(PerformativePower, MonotoneInProbeSet) {
  Stream s(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_platform(s, 3 + s.index(4), 1 + s.index(10));
    const auto probes = default_probes(p);
    double prev = 0.0;
    for (std::size_t k = 1; k <= probes.size(); ++k) {
      const double v = performative_power_lower_bound(p, std::span(probes).first(k)).power;
      ASSERT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Calculator, ExamplesAndOrderInvariance) {
  EXPECT_NEAR(traffic_steering_calculator(0.66, 0.8, 0.8, 0.7), 0.29568, 1e-15);
  EXPECT_EQ(traffic_steering_calculator(0.0, 0.8, 0.8, 0.7), 0.0);
  EXPECT_EQ(traffic_steering_calculator(0.66, 0.8, 0.0, 0.7), 0.0);
  EXPECT_EQ(traffic_steering_calculator(1, 1, 1, 1), 1.0);
  std::array<double, 4> args{0.66, 0.8, 0.8, 0.7};
  std::sort(args.begin(), args.end());
  const double base = traffic_steering_calculator(args[0], args[1], args[2], args[3]);
  do {
    EXPECT_NEAR(traffic_steering_calculator(args[0], args[1], args[2], args[3]), base, 1e-15);
  } while (std::next_permutation(args.begin(), args.end()));
  EXPECT_THROW(traffic_steering_calculator(1.2, 0.5, 0.5, 0.5), std::invalid_argument);
  EXPECT_THROW(traffic_steering_calculator(0.5, -0.1, 0.5, 0.5), std::invalid_argument);
}

TEST(Decomposition, WholePopulationIsEquality) {
  const auto p = homogeneous();
  const auto probes = default_probes(p);
  const auto r = decomposition_check(p, 1.0, probes);
  EXPECT_TRUE(r.holds);
  EXPECT_DOUBLE_EQ(r.power_full, r.alpha * r.power_sub);
}

TEST(Decomposition, HomogeneousHalf) {
  const auto p = homogeneous();
  const auto probes = default_probes(p);
  const auto r = decomposition_check(p, 0.5, probes);
  EXPECT_TRUE(r.holds);
  EXPECT_DOUBLE_EQ(r.power_sub, r.power_full);
  EXPECT_LT(r.alpha * r.power_sub, r.power_full);
}

TEST(Decomposition, RandomSubpopulations) {
  Stream s(14);
  const auto p = random_platform(s, 5, 30);
  const auto probes = default_probes(p);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> all(30);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), s.engine());
    all.resize(1 + s.index(30));
    ASSERT_TRUE(decomposition_check(p, all, probes).holds) << trial;
  }
}

TEST(Decomposition, EmptySubpopulationIsAnError) {
  const auto p = homogeneous();
  const auto probes = default_probes(p);
  EXPECT_THROW(decomposition_check(p, std::vector<std::size_t>{}, probes), std::invalid_argument);
  EXPECT_THROW(decomposition_check(p, 0.0, probes), std::invalid_argument);
}

TEST(SteeringDiagnostic, ReportsBothSides) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.0);
  const QuadraticLoss loss(1.0, 1);
  const auto d = steering_diagnostic(loss, map, Vector::Constant(1, 0.0), ParamSet::interval(0.0, 1.0));
  // G(0) = 0.5, so the benefit is PR(0.5) - PR(0.4)
  const double pr = [](double t) { return 0.5 * std::pow(1.0 - 0.5 * t, 2) + 0.5 * t * t; }(0.5);
  EXPECT_NEAR(d.steering_benefit, pr - 0.4, 1e-12);
  EXPECT_NEAR(d.power, 0.5, 1e-12);
  EXPECT_GT(d.lipschitz_factor, 0.0);
  EXPECT_EQ(d.within_bound, d.steering_benefit < d.lipschitz_factor * d.power);
}
