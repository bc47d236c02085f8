#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfpred/bandit.hpp"
#include "perfpred/collective.hpp"
#include "perfpred/core.hpp"
#include "perfpred/losses.hpp"
#include "perfpred/maps.hpp"
#include "perfpred/power.hpp"
#include "perfpred/solvers.hpp"

namespace perfpred::experiment {

/// Raised on an invalid config; `field` is the JSON path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class ExperimentKind { solver, bandit, power, collective, gms, sweep };

std::string_view to_string(ExperimentKind kind) noexcept;

// ---- map / loss specs ------------------------------------------------------

struct CoordinateSpec {
  std::string dist = "gaussian";  ///< gaussian | uniform | point
  double a = 0.0;                 ///< mean, lower end, or point value
  double b = 0.0;                 ///< sd or upper end
};

/// Canonical scalar benchmark: x == 1, y = a theta + b + noise.
struct Qb1MapSpec {
  double a = 0.5;
  double b = 1.0;
  double s = 0.0;
  std::string noise = "gaussian";  ///< gaussian (sd s) | uniform (half-width s)
};

struct LocationScaleMapSpec {
  std::vector<CoordinateSpec> base;  ///< features then label
  std::vector<std::vector<double>> mu;
};

struct MixtureComponentSpec {
  double weight = 1.0;
  std::vector<double> offset;
  std::vector<std::vector<double>> shift;
  std::vector<double> std_dev;
};

struct MixtureMapSpec {
  std::vector<MixtureComponentSpec> components;
};

struct StrategicMapSpec {
  std::vector<CoordinateSpec> base_x;
  double eta = 1.0;
  std::vector<double> label_weights;
  double label_threshold = 0.0;
};

struct OutcomeMapSpec {
  std::vector<CoordinateSpec> base_x;
  std::vector<double> outcome_weights;
  double kappa = 0.0;
  double noise_sd = 0.0;
};

using MapSpec = std::variant<Qb1MapSpec, LocationScaleMapSpec, MixtureMapSpec, StrategicMapSpec,
                             OutcomeMapSpec>;

struct LossSpec {
  std::string type = "quadratic";  ///< quadratic | logistic
  double lambda = 1.0;
};

struct ParamSetSpec {
  std::string type = "unbounded";  ///< unbounded | box | ball
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> center;
  double radius = 0.0;
};

// ---- experiment specs --------------------------------------------------------

struct SolverSpec {
  std::string kind = "rrm";
  std::size_t max_steps = 100;
  std::string stepsize = "constant";
  double step = 0.1;
  double lazy_alpha = 1.0;
  double lazy_scale = 1.0;
  double inner_tol = 1e-10;
  std::size_t inner_max_iter = 10000;
  bool strict = true;
  std::size_t batch_size = 0;
  std::size_t pr_samples = 1000;
  std::size_t record_every = 1;
  std::size_t max_samples = 0;
  double zo_radius = 0.0;
  /// Accuracy targets for the deployments-to-accuracy fit (lazy/greedy sweeps).
  std::vector<double> delta_targets;
};

struct BanditSpec {
  double spacing = 0.01;
  std::size_t horizon = 1000;
  std::size_t batch_size = 0;
  double delta_conf = 0.05;
  std::size_t pr_samples = 10000;
};

struct ViewerGroupSpec {
  std::size_t count = 1;
  double p1 = 0.0;
  double p2 = 0.0;
  std::vector<double> affinity;
};

struct PowerSpec {
  std::vector<double> scores;
  std::vector<ViewerGroupSpec> viewers;
  double budget = 1.0;
  /// Probe actions by name: identity | swap | demote.
  std::vector<std::string> probes = {"identity", "swap", "demote"};
  std::vector<double> subpopulation_fractions = {1.0, 0.5};
  std::size_t mc_draws = 0;
  /// traffic_steering_calculator inputs.
  double effect_first_pos = 0.66;
  double second_pos_discount = 0.8;
  double platform_share = 0.8;
  double top_two_share = 0.7;
};

struct CollectiveSpec {
  /// Integer weights per feature: [w(x, 0), w(x, 1)].
  std::vector<std::array<long long, 2>> weights;
  std::vector<std::size_t> signal;
  int target_label = 1;
  /// alpha values as exact fractions "num/den" or decimals.
  std::vector<std::string> alphas = {"1/10", "1/5", "1/2", "1"};
  std::vector<double> baseline;  ///< h(x); empty skips revenue
  double beta_perf = 0.0;
};

struct GmsSpec {
  std::string type = "affine";  ///< affine | polynomial | piecewise_linear
  std::vector<double> coefficients;  ///< affine: [intercept, slope]; polynomial: c0..cn
  std::vector<double> knots;
  std::vector<double> values;
  double tol = 1e-10;
};

struct SweepSpec {
  /// Dotted paths into the base config (e.g. "solver.lazy_alpha", "map.a")
  /// mapped to the values to try; the run set is their Cartesian product.
  std::map<std::string, std::vector<nlohmann::json>> parameters;
  std::size_t max_runs = 1000;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::solver;
  std::string name = "experiment";
  MapSpec map = Qb1MapSpec{};
  LossSpec loss;
  ParamSetSpec theta_set;
  std::vector<double> theta0 = {0.0};
  SolverSpec solver;
  BanditSpec bandit;
  PowerSpec power;
  CollectiveSpec collective;
  GmsSpec gms;
  /// Base experiment for kind == sweep (any non-sweep kind).
  std::shared_ptr<ExperimentConfig> sweep_base;
  SweepSpec sweep;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "out";
  std::size_t workers = 1;
  /// Hard invariant checks; any failure makes the run exit nonzero.
  std::vector<std::string> checks;

  void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);
std::string serialize(const ExperimentConfig& config);
/// Digest of the canonical serialization.
std::string config_digest(const ExperimentConfig& config);

// ---- instantiation -----------------------------------------------------------

std::unique_ptr<DistributionMap> make_map(const MapSpec& spec);
std::unique_ptr<LossModel> make_loss(const LossSpec& spec, Index dim);
ParamSet make_param_set(const ParamSetSpec& spec, Index dim);
SolverConfig make_solver_config(const SolverSpec& spec, const ParamSet& theta_set,
                                std::uint64_t seed);
ScalarResponse make_response(const GmsSpec& spec);
power::Platform make_platform(const PowerSpec& spec);
collective::Rational parse_fraction(const std::string& text);

// ---- running -----------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunSummary {
  bool ok = true;                 ///< no hard check failed and no numeric failure
  std::vector<CheckResult> checks;
  std::vector<std::filesystem::path> files;
  /// Scalar metrics for sweep aggregation (e.g. theta_ps, fitted exponents).
  std::map<std::string, double> metrics;
  std::vector<std::string> failures;  ///< per-seed numeric failures
};

struct RunOptions {
  std::filesystem::path out_dir;
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed_override;
};

/// Runs a non-sweep experiment: one artifact per seed plus summary.json.
RunSummary run(const ExperimentConfig& config, const RunOptions& options);

/// Runs the Cartesian product of the sweep parameters; writes sweep_long.csv
/// and sweep_summary.csv. Throws ConfigError when the product exceeds max_runs.
RunSummary sweep(const ExperimentConfig& config, const RunOptions& options);

/// Deployments needed for the seed-averaged squared error to first reach each
/// target, and the least-squares slope of log(deployments) on log(1/delta).
struct DeploymentFit {
  std::vector<double> deltas;
  std::vector<std::size_t> deployments;  ///< 0 where the target was not reached
  double slope = 0.0;
  std::size_t points = 0;
};

DeploymentFit fit_deployment_exponent(std::span<const Trace> traces,
                                      std::span<const double> deltas);

}  // namespace perfpred::experiment
