#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "perfpred/random.hpp"

namespace perfpred {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// A point theta in the parameter set.
using ParamPoint = Vector;

/// A data instance z = (x, y).
struct DataPoint {
  Vector x;
  double y = 0.0;

  /// (x, y) stacked into one vector; the l2 norm on data space uses this.
  Vector concat() const;
};

/// Closed convex parameter set: all of R^d, an axis-aligned box, or a ball.
class ParamSet {
 public:
  enum class Kind { unbounded, box, ball };

  static ParamSet unbounded(Index dim);
  static ParamSet box(Vector lo, Vector hi);
  static ParamSet interval(double lo, double hi);
  static ParamSet ball(Vector center, double radius);

  Kind kind() const noexcept { return kind_; }
  Index dim() const noexcept { return lo_.size(); }
  bool bounded() const noexcept { return kind_ != Kind::unbounded; }

  /// Euclidean projection; idempotent.
  ParamPoint project(const ParamPoint& theta) const;
  bool contains(const ParamPoint& theta, double tol = 0.0) const;

  /// Largest distance between two points of the set (infinite if unbounded).
  double diameter() const;
  /// sup over the set of ||theta||.
  double max_norm() const;

  const Vector& lower() const noexcept { return lo_; }
  const Vector& upper() const noexcept { return hi_; }
  const Vector& center() const noexcept { return center_; }
  double radius() const noexcept { return radius_; }

 private:
  Kind kind_ = Kind::unbounded;
  Vector lo_, hi_;
  Vector center_;
  double radius_ = 0.0;
};

/// Closed interval, possibly unbounded.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool bounded() const noexcept;
  bool degenerate() const noexcept { return lo == hi; }
  double max_abs() const noexcept;
};

/// Box containing the data support: one interval per feature plus the label.
struct DataDomain {
  std::vector<Interval> x;
  Interval y;

  bool x_bounded() const noexcept;
  /// All feature coordinates are point masses.
  bool x_degenerate() const noexcept;
  /// sup ||x|| over the box.
  double max_x_norm() const noexcept;
};

/// Regularity constants of a loss / distribution-map pair. Constants whose
/// certificate needs a compact domain are empty when the domain is unbounded.
struct RegularityConstants {
  double gamma = 0.0;
  double beta_z = 0.0;
  std::optional<double> beta_theta;
  std::optional<double> lipschitz_z;
  std::optional<double> sigma;
  std::optional<double> variance_l;
  double epsilon = 0.0;
  /// Names of constants left uncertified with the reason, for diagnostics.
  std::vector<std::string> missing;

  bool contractive() const noexcept { return epsilon * beta_z < gamma; }
  /// max(beta_z, beta_theta), falling back to beta_z.
  double beta_max() const noexcept;

  double require_beta_theta() const;
  double require_lipschitz_z() const;
  double require_sigma() const;
  double require_variance_l() const;
};

/// Loss l(theta; z) with analytic derivatives in theta.
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::string_view name() const = 0;
  virtual Index dim() const = 0;
  virtual double value(const ParamPoint& theta, const DataPoint& z) const = 0;
  virtual Vector grad(const ParamPoint& theta, const DataPoint& z) const = 0;
  virtual Matrix hessian(const ParamPoint& theta, const DataPoint& z) const = 0;
};

/// Distribution map theta -> D(theta). Implementations are immutable and
/// stateless: all randomness comes from the stream argument.
class DistributionMap {
 public:
  virtual ~DistributionMap() = default;

  virtual std::string_view name() const = 0;
  virtual Index param_dim() const = 0;
  virtual Index feature_dim() const = 0;

  virtual std::vector<DataPoint> sample(const ParamPoint& theta, std::size_t n,
                                        Stream& stream) const = 0;

  /// Closed-form sensitivity epsilon (a valid upper bound), when known.
  virtual std::optional<double> sensitivity() const { return std::nullopt; }

  /// Box containing supp D(theta) for every theta in `theta_set`.
  virtual DataDomain support(const ParamSet& theta_set) const = 0;

  /// One-dimensional projection used for empirical W1; defaults to the label.
  virtual double project1d(const DataPoint& z) const { return z.y; }

 protected:
  void check_param(const ParamPoint& theta) const;
};

enum class EvalPath { exact, monte_carlo };

std::string_view to_string(EvalPath path) noexcept;

/// Point estimate with its standard error (zero on the exact path).
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  EvalPath path = EvalPath::monte_carlo;
};

/// Sample mean of l(theta; z). Throws std::invalid_argument("no data") on an
/// empty sample.
double risk(const LossModel& loss, const ParamPoint& theta, std::span<const DataPoint> samples);

/// Sample mean with standard error sqrt(s^2 / n).
Estimate risk_estimate(const LossModel& loss, const ParamPoint& theta,
                       std::span<const DataPoint> samples);

/// PR(theta) = Risk(theta, D(theta)). Uses the closed form when the pair is a
/// recognized family and `allow_exact` is set; otherwise draws n samples.
Estimate performative_risk(const LossModel& loss, const DistributionMap& map,
                           const ParamPoint& theta, std::size_t n, Stream& stream,
                           bool allow_exact = true);

struct SteeringDecomposition {
  /// Risk(theta, D(phi)).
  Estimate learning;
  /// Risk(theta, D(theta)) - Risk(theta, D(phi)).
  Estimate steering;
};

SteeringDecomposition steering_decomposition(const LossModel& loss, const DistributionMap& map,
                                             const ParamPoint& theta, const ParamPoint& phi,
                                             std::size_t n, Stream& stream,
                                             bool allow_exact = true);

/// Exact W1 between two equal-size empirical measures on the line (mean
/// absolute difference of order statistics). Inputs need not be sorted.
double wasserstein1_1d(std::span<const double> a, std::span<const double> b);

using Projection1d = std::function<double(const DataPoint&)>;

/// max over probe pairs of W1(D(theta), D(theta')) / ||theta - theta'||, with
/// W1 estimated from n samples per side on a 1-D projection. Coincident pairs
/// are skipped; throws if every pair is coincident.
double empirical_sensitivity(const DistributionMap& map,
                             std::span<const std::pair<ParamPoint, ParamPoint>> probes,
                             std::size_t n, Stream& stream, const Projection1d& projection = {});

/// The map's closed-form epsilon when it advertises one, else
/// empirical_sensitivity.
double estimate_sensitivity(const DistributionMap& map,
                            std::span<const std::pair<ParamPoint, ParamPoint>> probes,
                            std::size_t n, Stream& stream, const Projection1d& projection = {});

bool all_finite(const Vector& v) noexcept;

}  // namespace perfpred
