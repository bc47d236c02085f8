#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "perfpred/core.hpp"

namespace perfpred {

/// Law of one base coordinate. A Gaussian with sd == 0 is a point mass.
struct BaseCoordinate {
  enum class Kind { gaussian, uniform };

  Kind kind = Kind::gaussian;
  double a = 0.0;  ///< mean (gaussian) or lower end (uniform)
  double b = 0.0;  ///< sd (gaussian) or upper end (uniform)

  static BaseCoordinate gaussian(double mean, double sd);
  static BaseCoordinate uniform(double lo, double hi);
  static BaseCoordinate point(double value) { return gaussian(value, 0.0); }

  double mean() const noexcept;
  double variance() const noexcept;
  Interval support() const noexcept;
  double draw(Stream& stream) const;
};

/// z = z0 + mu * theta with z0 drawn coordinate-wise from a product base law.
/// z stacks (x_1..x_m, y); mu has m + 1 rows and d columns.
class LocationScaleMap final : public DistributionMap {
 public:
  LocationScaleMap(std::vector<BaseCoordinate> base, Matrix mu);

  /// 1-D label shift used throughout the tests: x == 1, y ~ N(a*theta + b, s^2).
  static LocationScaleMap label_shift_1d(double a, double b, double s);

  std::string_view name() const override { return "location_scale"; }
  Index param_dim() const override { return mu_.cols(); }
  Index feature_dim() const override { return mu_.rows() - 1; }

  std::vector<DataPoint> sample(const ParamPoint& theta, std::size_t n,
                                Stream& stream) const override;
  /// Operator norm of mu; exact for pure shift families under W1.
  std::optional<double> sensitivity() const override;
  DataDomain support(const ParamSet& theta_set) const override;

  const std::vector<BaseCoordinate>& base() const noexcept { return base_; }
  const Matrix& mu() const noexcept { return mu_; }
  /// Only the label row of mu is nonzero (features are not shifted).
  bool features_static() const noexcept;

 private:
  std::vector<BaseCoordinate> base_;
  Matrix mu_;
};

/// sum_i w_i N(m_i + M_i theta, diag(var_i)) over stacked z = (x, y).
class GaussianMixtureMeanShiftMap final : public DistributionMap {
 public:
  struct Component {
    double weight = 1.0;
    Vector offset;   ///< m_i, length m + 1
    Matrix shift;    ///< M_i, (m + 1) x d
    Vector std_dev;  ///< per-coordinate standard deviation, > 0
  };

  explicit GaussianMixtureMeanShiftMap(std::vector<Component> components);

  std::string_view name() const override { return "gaussian_mixture"; }
  Index param_dim() const override { return param_dim_; }
  Index feature_dim() const override { return data_dim_ - 1; }

  std::vector<DataPoint> sample(const ParamPoint& theta, std::size_t n,
                                Stream& stream) const override;
  /// sum_i w_i ||M_i||: component-wise coupling bound on W1.
  std::optional<double> sensitivity() const override;
  DataDomain support(const ParamSet& theta_set) const override;

  const std::vector<Component>& components() const noexcept { return components_; }

 private:
  std::vector<Component> components_;
  std::vector<double> cumulative_;
  Index param_dim_ = 0;
  Index data_dim_ = 0;
};

/// Strategic agents best-responding to the linear score theta^T x under the
/// cost ||x' - x0||^2 / (2 eta): x(theta) = x0 + eta * theta. Labels are a
/// fixed threshold rule on the un-gamed features x0, in {-1, +1}.
class StrategicResponseMap final : public DistributionMap {
 public:
  StrategicResponseMap(std::vector<BaseCoordinate> base_x, double eta, Vector label_weights,
                       double label_threshold = 0.0);

  std::string_view name() const override { return "strategic"; }
  Index param_dim() const override { return static_cast<Index>(base_x_.size()); }
  Index feature_dim() const override { return static_cast<Index>(base_x_.size()); }

  std::vector<DataPoint> sample(const ParamPoint& theta, std::size_t n,
                                Stream& stream) const override;
  /// eta: features move by eta*(theta - theta') under the shared-x0 coupling.
  std::optional<double> sensitivity() const override { return eta_; }
  DataDomain support(const ParamSet& theta_set) const override;
  double project1d(const DataPoint& z) const override { return z.x[0]; }

  Vector best_response(const Vector& x_orig, const ParamPoint& theta) const;
  /// Agent utility theta^T x' - ||x' - x0||^2 / (2 eta).
  double utility(const Vector& x_orig, const Vector& x_new, const ParamPoint& theta) const;
  double label(const Vector& x_orig) const;

  double eta() const noexcept { return eta_; }

 private:
  std::vector<BaseCoordinate> base_x_;
  double eta_;
  Vector label_weights_;
  double label_threshold_;
};

/// Outcome performativity: X ~ D_x independent of theta, prediction
/// yhat = theta^T X, outcome Y = g(X, yhat, xi_Y). The built-in structural
/// equation is linear, Y = w^T X + kappa * yhat + xi_Y with xi_Y ~ N(0, s^2);
/// a custom g can be supplied instead.
class OutcomePerformativityMap final : public DistributionMap {
 public:
  using StructuralEquation = std::function<double(const Vector& x, double yhat, double noise)>;

  OutcomePerformativityMap(std::vector<BaseCoordinate> base_x, Vector outcome_weights,
                           double kappa, double noise_sd);
  OutcomePerformativityMap(std::vector<BaseCoordinate> base_x, StructuralEquation g,
                           double noise_sd);

  std::string_view name() const override { return "outcome"; }
  Index param_dim() const override { return static_cast<Index>(base_x_.size()); }
  Index feature_dim() const override { return static_cast<Index>(base_x_.size()); }

  std::vector<DataPoint> sample(const ParamPoint& theta, std::size_t n,
                                Stream& stream) const override;
  /// |kappa| * sqrt(E||x||^2) for the linear equation; none for custom g.
  std::optional<double> sensitivity() const override;
  DataDomain support(const ParamSet& theta_set) const override;

 private:
  std::vector<BaseCoordinate> base_x_;
  StructuralEquation g_;
  std::optional<std::pair<Vector, double>> linear_;  // (w, kappa)
  double noise_sd_;
};

/// Continuous response R: [0, 1] -> [0, 1] from a restricted family.
class ScalarResponse {
 public:
  struct Affine {
    double intercept = 0.0;
    double slope = 0.0;
  };
  struct Polynomial {
    std::vector<double> coefficients;  ///< c0 + c1 y + c2 y^2 + ...
  };
  struct PiecewiseLinear {
    std::vector<double> knots;   ///< strictly increasing, covering [0, 1]
    std::vector<double> values;
  };
  using Expr = std::variant<Affine, Polynomial, PiecewiseLinear>;

  /// Throws std::invalid_argument when the range check on a 1e-3 grid fails.
  explicit ScalarResponse(Expr expr);

  static ScalarResponse affine(double intercept, double slope);
  static ScalarResponse constant(double c) { return affine(c, 0.0); }
  static ScalarResponse piecewise_linear(std::vector<double> knots, std::vector<double> values);
  static ScalarResponse polynomial(std::vector<double> coefficients);

  double operator()(double yhat) const;
  const Expr& expr() const noexcept { return expr_; }

 private:
  Expr expr_;
};

/// Exact solution-concept oracles for a recognized map/loss family.
struct EquilibriumCertificates {
  /// G(phi) = argmin over R^d of Risk(., D(phi)).
  std::function<ParamPoint(const ParamPoint&)> best_response;
  /// G is affine; this is its (constant) Jacobian dG/dphi.
  Matrix best_response_jacobian;
  std::optional<ParamPoint> theta_ps;
  std::optional<ParamPoint> theta_po;
  std::function<double(const ParamPoint&)> pr_exact;
  /// Risk(theta, D(phi)).
  std::function<double(const ParamPoint& theta, const ParamPoint& phi)> risk_exact;
  /// E_{z ~ D(phi)} grad l(theta; z).
  std::function<Vector(const ParamPoint& theta, const ParamPoint& phi)> mean_grad;
};

/// Closed forms for QuadraticLoss over a LocationScaleMap whose features are
/// not shifted by theta; empty for every other pair.
std::optional<EquilibriumCertificates> equilibrium_certificates(const DistributionMap& map,
                                                                const LossModel& loss);

/// Monte-Carlo gap of the stochastic-dominance inequality
///   E_{D(a t1 + (1-a) t2)} l(theta; z) - E_{a D(t1) + (1-a) D(t2)} l(theta; z).
/// Nonpositive (up to noise) when risk is convex in the distribution argument.
Estimate dominance_gap(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta,
                       const ParamPoint& theta1, const ParamPoint& theta2, double alpha,
                       std::size_t n, Stream& stream);

}  // namespace perfpred
