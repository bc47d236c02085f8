#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include "perfpred/experiment.hpp"

using namespace perfpred;
using namespace perfpred::experiment;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
  const fs::path p = fs::temp_directory_path() / ("perfpred_unit_" + name + "_" + std::to_string(tick));
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

json qb1_rrm() {
  return json::parse(R"({
    "kind": "solver", "name": "rrm",
    "map": {"type": "qb1", "a": 0.5, "b": 1.0, "s": 0.0},
    "loss": {"type": "quadratic", "lambda": 1.0},
    "theta0": [0.0],
    "solver": {"kind": "rrm", "max_steps": 30},
    "seeds": [0],
    "checks": ["rrm_ratio", "rrm_contraction", "finite"]
  })");
}

}  // namespace

TEST(Config, RoundTripIsIdentity) {
  for (const auto& entry : fs::directory_iterator(PERFPRED_CONFIG_DIR)) {
    const ExperimentConfig a = load_config(entry.path());
    const std::string text = serialize(a);
    const ExperimentConfig b = parse_config(json::parse(text));
    EXPECT_EQ(serialize(b), text) << entry.path();
    EXPECT_EQ(config_digest(a), config_digest(b)) << entry.path();
  }
}

TEST(Config, DigestTracksContent) {
  const auto a = parse_config(qb1_rrm());
  json j = qb1_rrm();
  j["map"]["a"] = 0.25;
  const auto b = parse_config(j);
  EXPECT_EQ(config_digest(a), config_digest(parse_config(qb1_rrm())));
  EXPECT_NE(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 16u);
}

TEST(Config, UnknownFieldNamesItsPath) {
  json j = qb1_rrm();
  j["solver"]["stepsise"] = "constant";
  try {
    parse_config(j);
    FAIL() << "expected a config error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "solver.stepsise");
  }
}

TEST(Config, InvalidValuesAreReported) {
  json j = qb1_rrm();
  j["checks"] = json::array({"no_such_check"});
  EXPECT_THROW(parse_config(j).validate(), ConfigError);
  j = qb1_rrm();
  j["seeds"] = json::array();
  EXPECT_THROW(parse_config(j).validate(), ConfigError);
  j = qb1_rrm();
  j["theta0"] = json::array({0.0, 1.0});
  EXPECT_THROW(parse_config(j).validate(), ConfigError);
  j = qb1_rrm();
  j["map"]["type"] = "banana";
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, FractionsParseExactly) {
  EXPECT_EQ(parse_fraction("1/5"), collective::Rational(1, 5));
  EXPECT_EQ(parse_fraction("0.25"), collective::Rational(1, 4));
  EXPECT_EQ(parse_fraction("1"), collective::Rational(1));
  EXPECT_THROW(parse_fraction("a/b"), std::exception);
}

TEST(Run, RrmRatiosAndDeterminism) {
  const auto cfg = parse_config(qb1_rrm());
  const fs::path a = scratch("rrm_a"), b = scratch("rrm_b");
  const RunSummary ra = run(cfg, {a, 1, {}});
  const RunSummary rb = run(cfg, {b, 1, {}});
  EXPECT_TRUE(ra.ok);
  for (const auto& c : ra.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  EXPECT_EQ(slurp(a / "trace_seed0.csv"), slurp(b / "trace_seed0.csv"));
  EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
  EXPECT_NEAR(ra.metrics.at("theta_ps"), 2.0 / 3.0, 1e-15);

  const auto rows = lines(slurp(a / "trace_seed0.csv"));
  ASSERT_EQ(rows.size(), 32u);
  EXPECT_EQ(rows[0], "k,theta_0,deployments,samples,pr_est,pr_se,dist_ps,dist_po");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, SeedOverrideReplacesSeedList) {
  json j = qb1_rrm();
  j["seeds"] = json::array({1, 2, 3});
  const fs::path dir = scratch("override");
  const RunSummary r = run(parse_config(j), {dir, 1, 7});
  EXPECT_TRUE(fs::exists(dir / "trace_seed7.csv"));
  EXPECT_FALSE(fs::exists(dir / "trace_seed1.csv"));
  EXPECT_TRUE(r.ok);
  fs::remove_all(dir);
}

TEST(Run, FailedCheckMakesRunNotOk) {
  json j = qb1_rrm();
  j["map"]["a"] = 3.0;
  j["loss"]["lambda"] = 0.0;
  j["theta0"] = json::array({1.0});
  j["checks"] = json::array({"rrm_contraction"});
  const fs::path dir = scratch("noncontractive");
  const RunSummary r = run(parse_config(j), {dir, 1, {}});
  EXPECT_FALSE(r.ok);
  fs::remove_all(dir);
}

TEST(Run, GmsReport) {
  const auto cfg = load_config(fs::path(PERFPRED_CONFIG_DIR) / "gms_affine.json");
  const fs::path dir = scratch("gms");
  const RunSummary r = run(cfg, {dir, 1, {}});
  EXPECT_TRUE(r.ok);
  EXPECT_NEAR(r.metrics.at("y_star"), 0.666667, 5e-7);
  const json report = json::parse(slurp(dir / "gms_seed0.json"));
  EXPECT_LE(report["residual"].get<double>(), 1e-10);
  fs::remove_all(dir);
}

TEST(Run, PowerReport) {
  const auto cfg = load_config(fs::path(PERFPRED_CONFIG_DIR) / "power_homogeneous.json");
  const fs::path dir = scratch("power");
  const RunSummary r = run(cfg, {dir, 1, {}});
  EXPECT_TRUE(r.ok);
  EXPECT_NEAR(r.metrics.at("beta"), 0.2, 1e-15);
  EXPECT_NEAR(r.metrics.at("calculator"), 0.29568, 1e-15);
  fs::remove_all(dir);
}

TEST(Sweep, RefusesAboveCap) {
  json j;
  j["kind"] = "sweep";
  j["sweep"] = {{"base", qb1_rrm()},
                {"parameters", {{"map.a", {0.0, 0.1, 0.2}}, {"map.b", {1.0, 2.0}}}},
                {"max_runs", 5}};
  try {
    sweep(parse_config(j), {scratch("cap"), 1, {}});
    FAIL() << "expected refusal";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("6 runs"), std::string::npos) << e.what();
  }
}

TEST(Sweep, SinglePointMatchesRun) {
  json j;
  j["kind"] = "sweep";
  j["sweep"] = {{"base", qb1_rrm()}, {"parameters", {{"map.a", {0.5}}}}, {"max_runs", 5}};
  const fs::path s = scratch("single_sweep"), r = scratch("single_run");
  sweep(parse_config(j), {s, 1, {}});
  run(parse_config(qb1_rrm()), {r, 1, {}});
  EXPECT_EQ(slurp(s / "run_000" / "trace_seed0.csv"), slurp(r / "trace_seed0.csv"));
  EXPECT_EQ(slurp(s / "run_000" / "summary.json"), slurp(r / "summary.json"));
  fs::remove_all(s);
  fs::remove_all(r);
}

TEST(Sweep, EpsilonColumnMatchesClosedForm) {
  const auto cfg = load_config(fs::path(PERFPRED_CONFIG_DIR) / "qb1_epsilon_sweep.json");
  const fs::path dir = scratch("eps");
  const RunSummary r = sweep(cfg, {dir, 2, {}});
  EXPECT_TRUE(r.ok);
  const double eps[] = {0.0, 0.25, 0.5};
  for (int i = 0; i < 3; ++i) {
    const std::string key = "run_00" + std::to_string(i) + ".theta_ps";
    EXPECT_NEAR(r.metrics.at(key), 1.0 / (2.0 - eps[i]), 1e-15) << key;
  }
  const auto rows = lines(slurp(dir / "sweep_summary.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_NE(rows[0].find("theta_ps"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Sweep, LazyExponentRows) {
  json base = json::parse(R"({
    "kind": "solver", "name": "lazy",
    "map": {"type": "qb1", "a": 0.5, "b": 1.0, "s": 0.5},
    "loss": {"type": "quadratic", "lambda": 1.0},
    "theta0": [0.0],
    "solver": {"kind": "sgd_lazy", "max_steps": 200, "max_samples": 20000, "delta_targets": [0.1, 0.01]},
    "seeds": [0, 1, 2]
  })");
  json j;
  j["kind"] = "sweep";
  j["sweep"] = {{"base", base}, {"parameters", {{"solver.lazy_alpha", {0.5, 1.0, 2.0}}}}, {"max_runs", 10}};
  const fs::path dir = scratch("lazy");
  sweep(parse_config(j), {dir, 1, {}});
  const auto rows = lines(slurp(dir / "sweep_summary.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_NE(rows[0].find("deployment_slope"), std::string::npos) << rows[0];
  fs::remove_all(dir);
}

TEST(DeploymentFit, RecoversKnownExponent) {
  // squared error 1/k^2 at deployment k: reaching delta takes 1/sqrt(delta) deployments
  Trace t;
  for (std::size_t k = 0; k <= 2000; ++k) {
    TraceRecord r;
    r.k = k;
    r.theta = Vector::Zero(1);
    r.deployments = k;
    r.dist_ps = 1.0 / double(k + 1);
    t.append(r);
  }
  const std::vector<Trace> traces{t};
  const std::vector<double> deltas{1e-2, 1e-4, 1e-6};
  const auto fit = fit_deployment_exponent(traces, deltas);
  EXPECT_EQ(fit.points, 3u);
  EXPECT_NEAR(fit.slope, 0.5, 0.01);
}
