#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "perfpred/core.hpp"
#include "perfpred/losses.hpp"
#include "perfpred/maps.hpp"
#include "perfpred/trace.hpp"

using namespace perfpred;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

DataPoint pt(double y) { return {v1(1.0), y}; }

}  // namespace

TEST(Risk, HandEvaluatedQuadratic) {
  const QuadraticLoss loss(1.0, 1);
  const std::vector<DataPoint> one{pt(1.0)};
  EXPECT_DOUBLE_EQ(risk(loss, v1(0.0), one), 0.5);

  const QuadraticLoss plain(0.0, 1);
  const std::vector<DataPoint> two{pt(0.0), pt(2.0)};
  EXPECT_DOUBLE_EQ(risk(plain, v1(1.0), two), 0.5);
}

TEST(Risk, ConstantSampleGivesPointLoss) {
  const LogisticLoss loss(0.3, 2);
  const DataPoint z{Vector::Constant(2, 0.7), 1.0};
  const std::vector<DataPoint> same(9, z);
  const Vector theta = Vector::Constant(2, -0.4);
  EXPECT_NEAR(risk(loss, theta, same), loss.value(theta, z), 1e-15);
}

TEST(Risk, EmptySampleIsAnError) {
  const QuadraticLoss loss(1.0, 1);
  try {
    risk(loss, v1(0.0), {});
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "no data");
  }
}

TEST(Risk, EstimateReportsStandardError) {
  const QuadraticLoss loss(0.0, 1);
  const std::vector<DataPoint> s{pt(0.0), pt(2.0)};
  const Estimate e = risk_estimate(loss, v1(1.0), s);
  EXPECT_DOUBLE_EQ(e.value, 0.5);
  EXPECT_DOUBLE_EQ(e.std_error, 0.0);  // both losses equal 0.5
}

TEST(PerformativeRisk, ClosedFormMatchesHandValue) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.0);
  const QuadraticLoss loss(1.0, 1);
  Stream s(0);
  const Estimate e = performative_risk(loss, map, v1(0.4), 100, s);
  EXPECT_EQ(e.path, EvalPath::exact);
  EXPECT_NEAR(e.value, 0.40, 1e-15);
  const oracle::Qb1 o{0.5, 1.0, 1.0, 0.0};
  EXPECT_NEAR(e.value, o.pr(0.4), 1e-15);
}

TEST(PerformativeRisk, NoiseAddsHalfVarianceAndMonteCarloAgrees) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 1.0);
  const QuadraticLoss loss(1.0, 1);
  Stream s(3);
  const Estimate exact = performative_risk(loss, map, v1(0.4), 10, s);
  EXPECT_NEAR(exact.value, 0.90, 1e-15);
  const Estimate mc = performative_risk(loss, map, v1(0.4), 200000, s, false);
  EXPECT_EQ(mc.path, EvalPath::monte_carlo);
  EXPECT_GT(mc.std_error, 0.0);
  EXPECT_LE(std::abs(mc.value - 0.90), 3.0 * mc.std_error);
}

TEST(PerformativeRisk, StaticMapEqualsFixedRisk) {
  const auto map = LocationScaleMap::label_shift_1d(0.0, 1.0, 0.0);
  const QuadraticLoss loss(1.0, 1);
  Stream s(0);
  for (double t : {-1.0, 0.0, 0.3, 2.0}) {
    const std::vector<DataPoint> fixed{pt(1.0)};
    EXPECT_NEAR(performative_risk(loss, map, v1(t), 10, s).value, risk(loss, v1(t), fixed), 1e-15);
  }
}

TEST(SteeringDecomposition, HandValues) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.0);
  const QuadraticLoss loss(1.0, 1);
  Stream s(0);
  const auto d = steering_decomposition(loss, map, v1(0.4), v1(0.0), 10, s);
  EXPECT_NEAR(d.learning.value, 0.26, 1e-15);
  EXPECT_NEAR(d.steering.value, 0.14, 1e-15);
}

TEST(SteeringDecomposition, ZeroWhenDeployedEqualsEvaluated) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.7);
  const QuadraticLoss loss(1.0, 1);
  Stream s(0);
  EXPECT_EQ(steering_decomposition(loss, map, v1(1.3), v1(1.3), 10, s).steering.value, 0.0);
}

TEST(SteeringDecomposition, ZeroForStaticMap) {
  const auto map = LocationScaleMap::label_shift_1d(0.0, 1.0, 0.0);
  const QuadraticLoss loss(1.0, 1);
  Stream s(0);
  for (double phi : {-2.0, 0.0, 5.0})
    EXPECT_NEAR(steering_decomposition(loss, map, v1(0.4), v1(phi), 10, s).steering.value, 0.0, 1e-15);
}

TEST(Wasserstein, HandValues) {
  const std::vector<double> a{0, 1}, b{1, 2};
  EXPECT_DOUBLE_EQ(wasserstein1_1d(a, b), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein1_1d(a, a), 0.0);
  const std::vector<double> c{0, 0, 0, 4}, d{1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(wasserstein1_1d(c, d), 1.5);
  EXPECT_DOUBLE_EQ(oracle::w1_matching(c, d), 1.5);
}

TEST(Wasserstein, SizeMismatchIsAnError) {
  const std::vector<double> a{0, 1}, b{1};
  EXPECT_THROW(wasserstein1_1d(a, b), std::invalid_argument);
}

TEST(Sensitivity, ClosedFormForShiftMaps) {
  EXPECT_DOUBLE_EQ(*LocationScaleMap::label_shift_1d(0.5, 1.0, 1.0).sensitivity(), 0.5);
  EXPECT_DOUBLE_EQ(*LocationScaleMap::label_shift_1d(0.0, 1.0, 1.0).sensitivity(), 0.0);
  EXPECT_DOUBLE_EQ(*LocationScaleMap::label_shift_1d(2.0, 0.0, 1.0).sensitivity(), 2.0);
}

TEST(Sensitivity, EmpiricalWithinFivePercent) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 1.0);
  const std::vector<std::pair<ParamPoint, ParamPoint>> probes{{v1(0.0), v1(1.0)}, {v1(-1.0), v1(2.0)}};
  Stream s(11);
  const double eps = empirical_sensitivity(map, probes, 100000, s);
  EXPECT_NEAR(eps, 0.5, 0.025);
}

TEST(Sensitivity, CoincidentPairsAreSkippedOrRejected) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 1.0);
  Stream s(0);
  const std::vector<std::pair<ParamPoint, ParamPoint>> same{{v1(1.0), v1(1.0)}};
  EXPECT_THROW(empirical_sensitivity(map, same, 100, s), std::invalid_argument);
  const std::vector<std::pair<ParamPoint, ParamPoint>> mixed{{v1(1.0), v1(1.0)}, {v1(0.0), v1(2.0)}};
  EXPECT_NO_THROW(empirical_sensitivity(map, mixed, 1000, s));
}

TEST(Sensitivity, EstimatePrefersClosedForm) {
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 1.0);
  const std::vector<std::pair<ParamPoint, ParamPoint>> probes{{v1(0.0), v1(1.0)}};
  Stream s(0);
  EXPECT_DOUBLE_EQ(estimate_sensitivity(map, probes, 10, s), 0.5);
}

TEST(ParamSet, ProjectionIsIdempotentAndContained) {
  const auto box = ParamSet::box(Vector::Constant(2, -1.0), Vector::Constant(2, 2.0));
  const auto ball = ParamSet::ball(Vector::Zero(2), 1.5);
  Vector p(2);
  p << 5.0, -7.0;
  for (const auto& set : {box, ball}) {
    const Vector q = set.project(p);
    EXPECT_TRUE(set.contains(q, 1e-12));
    EXPECT_TRUE(set.project(q).isApprox(q));
  }
  EXPECT_DOUBLE_EQ(box.diameter(), std::sqrt(18.0));
  EXPECT_DOUBLE_EQ(ball.diameter(), 3.0);
  EXPECT_TRUE(std::isinf(ParamSet::unbounded(2).diameter()));
}

TEST(RegularityConstants, QuadraticScalarBenchmark) {
  const QuadraticLoss loss(1.0, 1);
  const auto map = LocationScaleMap::label_shift_1d(0.5, 1.0, 0.0);
  const auto c = certify_constants(loss, map, ParamSet::unbounded(1));
  EXPECT_DOUBLE_EQ(c.gamma, 2.0);
  EXPECT_DOUBLE_EQ(c.beta_z, 1.0);
  EXPECT_DOUBLE_EQ(c.epsilon, 0.5);
  EXPECT_TRUE(c.contractive());
}

TEST(RegularityConstants, NonContractiveInstance) {
  const QuadraticLoss loss(0.0, 1);
  const auto map = LocationScaleMap::label_shift_1d(3.0, 1.0, 0.0);
  const auto c = certify_constants(loss, map, ParamSet::unbounded(1));
  EXPECT_DOUBLE_EQ(c.gamma, 1.0);
  EXPECT_DOUBLE_EQ(c.beta_z, 1.0);
  EXPECT_DOUBLE_EQ(c.epsilon, 3.0);
  EXPECT_FALSE(c.contractive());
}

TEST(RegularityConstants, StaticMapIsContractive) {
  const QuadraticLoss loss(0.5, 1);
  const auto c = certify_constants(loss, LocationScaleMap::label_shift_1d(0.0, 1.0, 1.0), ParamSet::unbounded(1));
  EXPECT_EQ(c.epsilon, 0.0);
  EXPECT_TRUE(c.contractive());
}

TEST(RegularityConstants, MissingConstantNamedInError) {
  const QuadraticLoss loss(1.0, 1);
  const auto c = certify_constants(loss, LocationScaleMap::label_shift_1d(0.5, 1.0, 1.0), ParamSet::unbounded(1));
  try {
    c.require_lipschitz_z();
    FAIL() << "expected an exception";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("L_z"), std::string::npos) << e.what();
  }
}

TEST(Trace, CsvHeaderAndEmptyDistances) {
  Trace t(5, "abc");
  TraceRecord r;
  r.k = 0;
  r.theta = Vector::Constant(2, 0.5);
  r.pr_est = 0.25;
  t.append(r);
  r.k = 1;
  r.deployments = 1;
  r.dist_ps = 0.125;
  t.append(r);
  std::istringstream in(t.to_csv());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "k,theta_0,theta_1,deployments,samples,pr_est,pr_se,dist_ps,dist_po");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.5,0.5,0,0,0.25,0,,");
  std::getline(in, line);
  EXPECT_EQ(line, "1,0.5,0.5,1,0,0.25,0,0.125,");
  EXPECT_EQ(t.sidecar()["seed"], 5);
  EXPECT_EQ(t.sidecar()["config_digest"], "abc");
}

TEST(Trace, RejectsOutOfOrderAndNonfiniteRecords) {
  Trace t;
  TraceRecord r;
  r.k = 3;
  r.theta = v1(0.0);
  r.deployments = 2;
  t.append(r);
  TraceRecord earlier = r;
  earlier.k = 3;
  EXPECT_THROW(t.append(earlier), std::invalid_argument);
  TraceRecord fewer = r;
  fewer.k = 4;
  fewer.deployments = 1;
  EXPECT_THROW(t.append(fewer), std::invalid_argument);
  TraceRecord nan = r;
  nan.k = 5;
  nan.pr_est = std::nan("");
  EXPECT_THROW(t.append(nan), std::invalid_argument);
}

TEST(Trace, FormatRealRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) EXPECT_EQ(std::stod(format_real(v)), v);
  EXPECT_EQ(format_real(2.0), "2");
}

TEST(Trace, DigestIsStableFnv1a) {
  EXPECT_EQ(digest_hex(""), "cbf29ce484222325");
  EXPECT_EQ(digest_hex("a"), "af63dc4c8601ec8c");
}

TEST(Stream, ChildrenAreDeterministicAndIndependentOfParentUse) {
  Stream a(9), b(9);
  a.normal();
  EXPECT_EQ(a.child(4).seed(), b.child(4).seed());
  Stream c1 = b.child(1), c2 = b.child(1);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(c1.uniform(), c2.uniform());
  EXPECT_NE(b.child(1).seed(), b.child(2).seed());
}
