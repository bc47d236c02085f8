#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "perfpred/core.hpp"
#include "perfpred/maps.hpp"
#include "perfpred/trace.hpp"

namespace perfpred {

enum class SolverKind { rrm, rgd, sgd_greedy, sgd_lazy, zeroth_order, gms_bisect };

enum class StepsizePolicy {
  constant,   ///< eta_k = step
  certified,   ///< eta_k = ((gamma - eps beta) k + 8 L^2 / (gamma - eps beta))^-1
  inverse_k,  ///< eta_k = step / k
};

std::string_view to_string(SolverKind kind) noexcept;
SolverKind solver_kind_from_string(std::string_view name);
std::string_view to_string(StepsizePolicy policy) noexcept;
StepsizePolicy stepsize_policy_from_string(std::string_view name);

struct SolverConfig {
  SolverKind kind = SolverKind::rrm;
  std::size_t max_steps = 100;
  StepsizePolicy stepsize = StepsizePolicy::constant;
  double step = 0.1;

  /// Lazy deploy runs ceil(lazy_scale * k^lazy_alpha) inner steps before deployment k+1.
  double lazy_alpha = 1.0;
  double lazy_scale = 1.0;

  /// Inner argmin (damped Newton) gradient-norm tolerance and iteration cap.
  double inner_tol = 1e-10;
  std::size_t inner_max_iter = 10000;

  ParamSet theta_set = ParamSet::unbounded(1);
  std::uint64_t seed = 0;

  /// Refuse to run stochastic solvers when the SGD convergence hypotheses fail.
  bool strict = true;

  /// Samples per expectation when no closed form is used (RRM inner problem,
  /// RGD gradient). 0 means "exact when certificates exist".
  std::size_t batch_size = 0;

  /// Monte-Carlo budget for the per-step PR column when no closed form exists.
  std::size_t pr_samples = 1000;
  /// Record every n-th step (the first and last step are always recorded).
  std::size_t record_every = 1;
  /// Stop once the cumulative sample count reaches this budget (0: no budget).
  std::size_t max_samples = 0;

  /// Zeroth-order smoothing radius; 0 selects 1e-3 * diam(theta_set).
  double zo_radius = 0.0;
  /// Non-descent streak length that triggers halving the radius.
  std::size_t zo_streak = 20;

  void validate() const;
};

/// Raised when an iterate becomes nonfinite; carries the last finite iterate.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, ParamPoint last)
      : std::runtime_error(what), last_(std::move(last)) {}
  const ParamPoint& last_iterate() const noexcept { return last_; }

 private:
  ParamPoint last_;
};

/// Raised when a solver's inner argmin fails to converge.
class InnerSolverError : public std::runtime_error {
 public:
  InnerSolverError(const std::string& what, ParamPoint last)
      : std::runtime_error(what), last_(std::move(last)) {}
  const ParamPoint& last_iterate() const noexcept { return last_; }

 private:
  ParamPoint last_;
};

/// Repeated risk minimization theta_{k+1} = argmin Risk(., D(theta_k)).
Trace rrm(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
          const SolverConfig& config);

/// Repeated (projected) gradient descent with constant step.
Trace rgd(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
          const SolverConfig& config);

/// Greedy deploy: one sample and one deployment per step.
Trace sgd_greedy(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
                 const SolverConfig& config);

/// Lazy deploy: ceil(c k^alpha) private SGD steps on D(theta_k) per deployment.
Trace sgd_lazy(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
               const SolverConfig& config);

/// Two-point zeroth-order descent on PR; every PR evaluation is a deployment.
Trace zeroth_order_pr(const LossModel& loss, const DistributionMap& map,
                      const ParamPoint& theta0, const SolverConfig& config);

/// Dispatch on config.kind (all kinds except gms_bisect).
Trace run_solver(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
                 const SolverConfig& config);

/// Certified stepsize for step k >= 1 given certified constants.
double certified_stepsize(const RegularityConstants& c, std::size_t k);

/// Certified bound on E||theta_{k+1} - theta_PS||^2. `beta` selects which
/// smoothness constant enters the bound.
double certified_bound(const RegularityConstants& c, double initial_dist, std::size_t k,
                      double beta);

/// The M constant of the certified bound: max(2 sigma^2, 8 L^2 ||theta_1 - theta_PS||^2).
double certified_m(const RegularityConstants& c, double initial_dist);

/// Fixed point y* = R(y*) by bisection on R(y) - y over [0, 1];
/// |R(y*) - y*| <= tol on return.
double gms_fixed_point(const ScalarResponse& response, double tol);

/// Minimizer of the empirical risk over `theta_set` by damped Newton (and
/// projected gradient when the unconstrained minimizer leaves the set).
ParamPoint empirical_argmin(const LossModel& loss, std::span<const DataPoint> samples,
                            const ParamPoint& start, const ParamSet& theta_set, double tol,
                            std::size_t max_iter);

}  // namespace perfpred
