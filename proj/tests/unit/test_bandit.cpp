#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "perfpred/bandit.hpp"
#include "perfpred/losses.hpp"

using namespace perfpred;
using namespace perfpred::bandit;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

struct Instance {
  LocationScaleMap map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.0);
  QuadraticLoss loss{1.0, 1};
  ParamSet box = ParamSet::interval(0.0, 1.0);
  ArmGrid grid = ArmGrid::uniform(box, 0.01);
  EquilibriumCertificates cert = *equilibrium_certificates(map, loss);
  oracle::Qb1 o{0.5, 1.0, 1.0, 0.0};

  BoundConstants constants(std::size_t horizon) const {
    const auto c = certify_constants(loss, map, box);
    BoundConstants b;
    b.lipschitz_z = *c.lipschitz_z;
    b.epsilon = c.epsilon;
    b.loss_range = loss_range(loss, map.support(box), box);
    b.horizon = horizon;
    b.num_arms = grid.size();
    return b;
  }
};

}  // namespace

TEST(ArmGrid, UniformCoversBoxWithEndpoints) {
  const auto g = ArmGrid::uniform(ParamSet::interval(0.0, 1.0), 0.01);
  ASSERT_EQ(g.size(), 101u);
  EXPECT_DOUBLE_EQ(g.arms.front()[0], 0.0);
  EXPECT_DOUBLE_EQ(g.arms.back()[0], 1.0);
  EXPECT_THROW(ArmGrid::uniform(ParamSet::interval(0.0, 1.0), 0.0), std::invalid_argument);
  EXPECT_THROW(ArmGrid::uniform(ParamSet::unbounded(1), 0.1), std::invalid_argument);
}

TEST(PerformativeUcb, SingleDeploymentIsValidEverywhere) {
  const Instance in;
  const auto b = in.constants(1);
  for (double deployed : {0.0, 0.37, 1.0}) {
    const std::vector<Deployment> history{{v1(deployed), {}}};
    for (const auto& arm : in.grid.arms) {
      ASSERT_GE(performative_ucb(in.loss, arm, history, b, &in.cert) + 1e-12, in.o.pr(arm[0]));
      ASSERT_LE(performative_lcb(in.loss, arm, history, b, &in.cert) - 1e-12, in.o.pr(arm[0]));
    }
  }
}

TEST(PerformativeUcb, DeployedArmIsExact) {
  const Instance in;
  const std::vector<Deployment> history{{v1(0.25), {}}};
  EXPECT_NEAR(performative_ucb(in.loss, v1(0.25), history, in.constants(1), &in.cert), in.o.pr(0.25), 1e-15);
}

TEST(PerformativeUcb, ManySamplesConvergeToRisk) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.1);
  const QuadraticLoss loss(1.0, 1);
  BoundConstants b;
  b.lipschitz_z = 2.0;
  b.epsilon = 0.5;
  b.loss_range = 1.0;
  b.horizon = 1;
  b.num_arms = 1;
  Stream s(3);
  const std::vector<Deployment> history{{v1(0.5), map.sample(v1(0.5), 200000, s)}};
  const oracle::Qb1 o{0.5, 1.0, 1.0, 0.1};
  EXPECT_NEAR(performative_ucb(loss, v1(0.5), history, b), o.pr(0.5), 0.01);
}

TEST(PerformativeUcb, StaticMapDropsDistanceTerm) {
  const auto map = LocationScaleMap::label_shift_1d(0.0, 1.0, 0.5);
  const QuadraticLoss loss(1.0, 1);
  BoundConstants b;
  b.lipschitz_z = 3.0;
  b.epsilon = 0.0;
  b.loss_range = 2.0;
  b.horizon = 10;
  b.num_arms = 5;
  Stream s(4);
  const std::vector<Deployment> history{{v1(0.0), map.sample(v1(0.0), 50, s)},
                                        {v1(1.0), map.sample(v1(1.0), 80, s)}};
  const Vector arm = v1(0.6);
  double best = 1e300;
  for (const auto& d : history)
    best = std::min(best, risk(loss, arm, d.batch) + confidence_radius(d.batch.size(), b));
  EXPECT_DOUBLE_EQ(performative_ucb(loss, arm, history, b), best);
}

TEST(PerformativeUcb, AddingHistoryNeverRaisesBound) {
  const Instance in;
  const auto b = in.constants(10);
  std::vector<Deployment> history;
  std::vector<double> prev(in.grid.size(), std::numeric_limits<double>::infinity());
  Stream s(6);
  for (int t = 0; t < 10; ++t) {
    history.push_back({v1(s.uniform()), {}});
    for (std::size_t i = 0; i < in.grid.size(); ++i) {
      const double u = performative_ucb(in.loss, in.grid.arms[i], history, b, &in.cert);
      ASSERT_LE(u, prev[i]);
      prev[i] = u;
    }
  }
}

TEST(PerformativeUcb, EmptyHistoryIsAnError) {
  const Instance in;
  EXPECT_THROW(performative_ucb(in.loss, v1(0.5), {}, in.constants(1), &in.cert), std::invalid_argument);
  EXPECT_THROW(performative_lcb(in.loss, v1(0.5), {}, in.constants(1), &in.cert), std::invalid_argument);
}

TEST(ConfidenceRadius, UnionBoundHoeffding) {
  BoundConstants b;
  b.loss_range = 2.0;
  b.horizon = 100;
  b.num_arms = 10;
  b.delta_conf = 0.05;
  EXPECT_EQ(confidence_radius(0, b), 0.0);
  EXPECT_NEAR(confidence_radius(50, b), 2.0 * std::sqrt(std::log(2.0 * 100 * 10 / 0.05) / 100.0), 1e-15);
}

TEST(SuccessiveElimination, ExactPathKeepsBestArmAndStaysValid) {
  const Instance in;
  EliminationConfig cfg;
  cfg.horizon = 2000;
  const auto res = successive_elimination(in.loss, in.map, in.grid, in.constants(cfg.horizon), cfg);
  EXPECT_EQ(res.ucb_violations, 0u);
  EXPECT_EQ(res.unsound_eliminations, 0u);
  EXPECT_FALSE(res.best_arm_eliminated);
  EXPECT_TRUE(res.active[res.best_arm]);
  EXPECT_NEAR(in.grid.arms[res.best_arm][0], 0.4, 1e-12);
  EXPECT_FALSE(res.short_horizon);
  // sublinear: average regret shrinks
  const auto& r = res.regret;
  EXPECT_LT(r[1999].regret_cum / 2000.0, r[199].regret_cum / 200.0);
  EXPECT_LT(r[199].regret_cum / 200.0, r[19].regret_cum / 20.0);
}

TEST(SuccessiveElimination, SurvivingArmsWereAllTried) {
  const Instance in;
  EliminationConfig cfg;
  cfg.horizon = 300;
  const auto res = successive_elimination(in.loss, in.map, in.grid, in.constants(cfg.horizon), cfg);
  std::vector<bool> seen(in.grid.size(), false);
  std::size_t last_seen = 0;
  for (const auto& row : res.regret) {
    seen[row.arm_index] = true;
    last_seen = std::max(last_seen, row.t);
  }
  for (std::size_t i = 0; i < in.grid.size(); ++i)
    if (res.active[i]) EXPECT_TRUE(seen[i]) << i;
  EXPECT_EQ(last_seen, 300u);
}

TEST(SuccessiveElimination, FlatInstanceHasNoRegret) {
  Matrix mu = Matrix::Zero(2, 1);
  const LocationScaleMap map({BaseCoordinate::point(0.0), BaseCoordinate::point(1.0)}, mu);
  const QuadraticLoss loss(0.0, 1);
  const auto grid = ArmGrid::uniform(ParamSet::interval(-1.0, 1.0), 0.25);
  BoundConstants b;
  b.lipschitz_z = 1.0;
  b.loss_range = 1.0;
  b.horizon = 40;
  b.num_arms = grid.size();
  EliminationConfig cfg;
  cfg.horizon = 40;
  cfg.batch_size = 3;
  cfg.pr_samples = 5;
  const auto res = successive_elimination(loss, map, grid, b, cfg);
  for (const auto& row : res.regret) EXPECT_EQ(row.regret_cum, 0.0);
}

TEST(SuccessiveElimination, ShortHorizonWarnsButRuns) {
  const Instance in;
  EliminationConfig cfg;
  cfg.horizon = 10;
  const auto res = successive_elimination(in.loss, in.map, in.grid, in.constants(cfg.horizon), cfg);
  EXPECT_TRUE(res.short_horizon);
  EXPECT_TRUE(res.trace.meta().contains("warning"));
  EXPECT_EQ(res.regret.size(), 10u);
}

TEST(SuccessiveElimination, ExactPathNeedsClosedForm) {
  const StrategicResponseMap map({BaseCoordinate::uniform(-1, 1)}, 1.0, v1(1.0));
  const LogisticLoss loss(0.1, 1);
  EliminationConfig cfg;
  EXPECT_THROW(successive_elimination(loss, map, ArmGrid::uniform(ParamSet::interval(0, 1), 0.5), {}, cfg),
               std::invalid_argument);
}

TEST(BruteForcePo, GridArgmin) {
  const Instance in;
  Stream s(0);
  const auto [idx, value] = brute_force_po(in.loss, in.map, in.grid, 10, s);
  EXPECT_NEAR(in.grid.arms[idx][0], 0.4, 1e-12);
  EXPECT_NEAR(value, 0.4, 1e-12);

  const std::vector<double> two{1.0, 2.0};
  EXPECT_EQ(brute_force_po(two).first, 0u);
  EXPECT_THROW(brute_force_po(std::vector<double>{}), std::invalid_argument);
}

TEST(BruteForcePo, StaticMapMatchesStaticMinimizer) {
  const auto map = LocationScaleMap::label_shift_1d(0.0, 1.2, 0.0);
  const QuadraticLoss loss(1.0, 1);
  const auto grid = ArmGrid::uniform(ParamSet::interval(0.0, 1.0), 0.01);
  Stream s(0);
  EXPECT_NEAR(grid.arms[brute_force_po(loss, map, grid, 10, s).first][0], 0.6, 1e-12);
}

TEST(UniformRegret, NondecreasingAndCsv) {
  const std::vector<double> pr{0.5, 0.7, 0.9};
  Stream s(1);
  const auto rows = uniform_random_regret(pr, 30, s);
  ASSERT_EQ(rows.size(), 30u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GE(rows[i].regret_cum, rows[i - 1].regret_cum);
  std::ostringstream out;
  write_regret_csv(out, rows);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "t,arm_index,pr_deployed,regret_cum");
}
