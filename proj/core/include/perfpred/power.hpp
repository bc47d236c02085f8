#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perfpred/core.hpp"
#include "perfpred/maps.hpp"

namespace perfpred::power {

struct Viewer {
  double p1 = 0.0;  ///< click propensity for the first slot
  double p2 = 0.0;  ///< click propensity for the second slot
  /// Per-item multiplier on the slot propensity; empty means all ones.
  std::vector<double> affinity;
};

/// Firm action: additive per-item score perturbation.
struct Action {
  std::string name;
  std::vector<double> deltas;
};

/// Two-slot content platform: items are ranked by score, the top two are
/// displayed, the rest are unlisted.
class Platform {
 public:
  Platform(std::vector<double> scores, std::vector<Viewer> viewers, double perturbation_budget);

  std::size_t num_items() const noexcept { return scores_.size(); }
  std::size_t num_viewers() const noexcept { return viewers_.size(); }
  const std::vector<double>& scores() const noexcept { return scores_; }
  const std::vector<Viewer>& viewers() const noexcept { return viewers_; }
  double budget() const noexcept { return budget_; }

  /// Items in slot 1 and slot 2 under `scores` (ties broken by item index).
  std::pair<std::size_t, std::size_t> top_two(const std::vector<double>& scores) const;
  std::pair<std::size_t, std::size_t> top_two() const { return top_two(scores_); }

  /// Probability that `viewer` consumes `item` under the ranking `scores`.
  double propensity(std::size_t viewer, std::size_t item, const std::vector<double>& scores) const;

  /// Potential outcome z_f(u): propensity to consume the item that is first
  /// under the base ranking, after applying `action`.
  double outcome(std::size_t viewer, const Action& action) const;

  /// Throws if the action exceeds the perturbation budget or has wrong size.
  void check_action(const Action& action) const;

  /// Platform restricted to the given viewers.
  Platform subpopulation(std::span<const std::size_t> viewers) const;

  double affinity(std::size_t viewer, std::size_t item) const;

 private:
  std::vector<double> scores_;
  std::vector<Viewer> viewers_;
  double budget_;
};

Action identity_action(const Platform& platform);
/// Raises the second item just above the first: swaps the two slots.
Action swap_top_two(const Platform& platform);
/// Lowers the first item below the third: moves it out of the display.
Action demote_first(const Platform& platform);

struct PositionEffect {
  double beta = 0.0;
  /// Monte-Carlo click estimate and its standard error, when requested.
  std::optional<double> mc_beta;
  std::optional<double> mc_std_error;
};

/// |mean_u E[Y_1(u) - Y_0(u)]| from propensities; with mc_draws > 0 also a
/// Monte-Carlo estimate from simulated clicks under both treatment arms.
PositionEffect causal_effect_of_position(const Platform& platform, std::size_t mc_draws = 0,
                                         Stream* stream = nullptr);

struct PowerReport {
  double power = 0.0;  ///< max over probes (a lower bound on the sup over F)
  std::size_t argmax = 0;
  std::vector<double> per_action;
};

/// max over probe actions of mean_u |z(u) - z_f(u)| (exact propensities).
PowerReport performative_power_lower_bound(const Platform& platform,
                                           std::span<const Action> probes);

/// Standard probe set: identity, slot swap, and demotion when feasible.
std::vector<Action> default_probes(const Platform& platform);

/// platform_share * top_two_share * second_pos_discount * effect_first_pos.
double traffic_steering_calculator(double effect_first_pos, double second_pos_discount,
                                   double platform_share, double top_two_share);

struct DecompositionResult {
  double power_full = 0.0;
  double power_sub = 0.0;
  double alpha = 0.0;
  bool holds = false;
};

/// Checks P(U) >= (|U'|/|U|) P(U') on the same probe set.
DecompositionResult decomposition_check(const Platform& platform,
                                        std::span<const std::size_t> subpopulation,
                                        std::span<const Action> probes);

/// Uses the first ceil(alpha_pop * |U|) viewers as the subpopulation.
DecompositionResult decomposition_check(const Platform& platform, double alpha_pop,
                                        std::span<const Action> probes);

struct SteeringDiagnostic {
  double steering_benefit = 0.0;  ///< PR(G(phi)) - PR(theta_PO)
  double power = 0.0;             ///< sup over theta of E||z_phi - z_theta||
  double lipschitz_factor = 0.0;  ///< certified L_z
  bool within_bound = false;      ///< steering_benefit < factor * power
};

/// Reported (not asserted) comparison of the steering benefit against
/// L_z times the performative power of a shift map over a box parameter set,
/// with potential outcomes coupled through a shared base draw.
SteeringDiagnostic steering_diagnostic(const LossModel& loss, const LocationScaleMap& map,
                                       const ParamPoint& phi, const ParamSet& theta_set);

}  // namespace perfpred::power
