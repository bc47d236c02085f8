#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "perfpred/core.hpp"
#include "perfpred/maps.hpp"
#include "perfpred/trace.hpp"

namespace perfpred::bandit {

/// Finite set of arms covering a box-shaped parameter set with spacing h.
struct ArmGrid {
  std::vector<ParamPoint> arms;
  double spacing = 0.0;

  /// Product grid with spacing <= h on every axis (endpoints included).
  static ArmGrid uniform(const ParamSet& box, double h);
  static ArmGrid from_points(std::vector<ParamPoint> arms, double spacing);

  std::size_t size() const noexcept { return arms.size(); }
};

/// One deployment and the batch observed from D(theta). An empty batch means
/// the exact-risk path (risks come from the closed form).
struct Deployment {
  ParamPoint theta;
  std::vector<DataPoint> batch;
};

struct BoundConstants {
  double lipschitz_z = 0.0;
  double epsilon = 0.0;
  /// sup l - inf l over the declared domain.
  double loss_range = 0.0;
  std::size_t horizon = 1;
  std::size_t num_arms = 1;
  double delta_conf = 0.05;
};

/// Hoeffding radius loss_range * sqrt(log(2 T K / delta) / (2 n)); 0 for the
/// exact path.
double confidence_radius(std::size_t n, const BoundConstants& c);

/// min over deployments t of Risk^(arm; batch_t) + L_z eps ||arm - theta_t|| + conf(n_t).
/// `certificates` is required for deployments with an empty batch.
double performative_ucb(const LossModel& loss, const ParamPoint& arm,
                        std::span<const Deployment> history, const BoundConstants& c,
                        const EquilibriumCertificates* certificates = nullptr);

/// max over deployments t of Risk^(arm; batch_t) - L_z eps ||arm - theta_t|| - conf(n_t).
double performative_lcb(const LossModel& loss, const ParamPoint& arm,
                        std::span<const Deployment> history, const BoundConstants& c,
                        const EquilibriumCertificates* certificates = nullptr);

struct EliminationConfig {
  std::size_t horizon = 1000;
  /// Samples per deployment; 0 selects the exact-risk path.
  std::size_t batch_size = 0;
  double delta_conf = 0.05;
  std::uint64_t seed = 0;
  /// Monte-Carlo budget for PR of deployed arms when no closed form exists.
  std::size_t pr_samples = 10000;
};

struct RegretRow {
  std::size_t t = 0;
  std::size_t arm_index = 0;
  double pr_deployed = 0.0;
  double regret_cum = 0.0;
};

struct EliminationResult {
  Trace trace;
  std::vector<RegretRow> regret;
  std::vector<bool> active;
  std::vector<double> upper;
  std::vector<double> lower;
  std::size_t best_arm = 0;
  double best_pr = 0.0;
  /// Set if the brute-force best arm was eliminated at any round.
  bool best_arm_eliminated = false;
  /// Rounds at which some active arm had upper bound below its true PR
  /// (only counted when a closed form exists).
  std::size_t ucb_violations = 0;
  /// Horizon shorter than the number of arms.
  bool short_horizon = false;
  /// Elimination steps that violated soundness (must stay 0).
  std::size_t unsound_eliminations = 0;
};

/// Successive elimination with performative confidence bounds and
/// round-robin deployment among active arms.
EliminationResult successive_elimination(const LossModel& loss, const DistributionMap& map,
                                         const ArmGrid& grid, const BoundConstants& constants,
                                         const EliminationConfig& config);

/// Grid argmin of PR (closed form when available, else `pr_samples` draws).
std::pair<std::size_t, double> brute_force_po(const LossModel& loss, const DistributionMap& map,
                                              const ArmGrid& grid, std::size_t pr_samples,
                                              Stream& stream);

/// Same as brute_force_po on precomputed PR values.
std::pair<std::size_t, double> brute_force_po(std::span<const double> pr_values);

/// Regret curve of deploying a uniformly random arm each round.
std::vector<RegretRow> uniform_random_regret(std::span<const double> pr_values,
                                             std::size_t horizon, Stream& stream);

void write_regret_csv(std::ostream& out, std::span<const RegretRow> rows);

}  // namespace perfpred::bandit
