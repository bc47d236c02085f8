#include "perfpred/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "perfpred/maps.hpp"

namespace perfpred {

namespace {

void check_dims(Index dim, const ParamPoint& theta, const DataPoint& z) {
  if (theta.size() != dim || z.x.size() != dim)
    throw std::invalid_argument(
        fmt::format("loss: dimension mismatch (theta {}, x {}, expected {})", theta.size(),
                    z.x.size(), dim));
}

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

QuadraticLoss::QuadraticLoss(double lambda, Index dim) : lambda_(lambda), dim_(dim) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("QuadraticLoss: lambda must be finite and >= 0");
  if (dim < 1) throw std::invalid_argument("QuadraticLoss: dim must be >= 1");
}

double QuadraticLoss::value(const ParamPoint& theta, const DataPoint& z) const {
  check_dims(dim_, theta, z);
  const double r = z.y - theta.dot(z.x);
  return 0.5 * r * r + 0.5 * lambda_ * theta.squaredNorm();
}

Vector QuadraticLoss::grad(const ParamPoint& theta, const DataPoint& z) const {
  check_dims(dim_, theta, z);
  return (theta.dot(z.x) - z.y) * z.x + lambda_ * theta;
}

Matrix QuadraticLoss::hessian(const ParamPoint& theta, const DataPoint& z) const {
  check_dims(dim_, theta, z);
  return z.x * z.x.transpose() + lambda_ * Matrix::Identity(dim_, dim_);
}

LogisticLoss::LogisticLoss(double lambda, Index dim) : lambda_(lambda), dim_(dim) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("LogisticLoss: lambda must be finite and > 0");
  if (dim < 1) throw std::invalid_argument("LogisticLoss: dim must be >= 1");
}

double LogisticLoss::value(const ParamPoint& theta, const DataPoint& z) const {
  check_dims(dim_, theta, z);
  return softplus(-z.y * theta.dot(z.x)) + 0.5 * lambda_ * theta.squaredNorm();
}

Vector LogisticLoss::grad(const ParamPoint& theta, const DataPoint& z) const {
  check_dims(dim_, theta, z);
  const double m = z.y * theta.dot(z.x);
  return -z.y * sigmoid(-m) * z.x + lambda_ * theta;
}

Matrix LogisticLoss::hessian(const ParamPoint& theta, const DataPoint& z) const {
  check_dims(dim_, theta, z);
  const double s = sigmoid(z.y * theta.dot(z.x));
  return s * (1.0 - s) * z.y * z.y * (z.x * z.x.transpose()) +
         lambda_ * Matrix::Identity(dim_, dim_);
}

// ---- constants ---------------------------------------------------------------

namespace {

// Smallest eigenvalue of E[x x^T] for the map's feature law, when known.
std::optional<double> second_moment_min_eig(const DistributionMap* map, const DataDomain& domain) {
  if (const auto* ls = dynamic_cast<const LocationScaleMap*>(map); ls && ls->features_static()) {
    const Index m = ls->feature_dim();
    Vector mean(m);
    Matrix s = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      mean[i] = ls->base()[static_cast<std::size_t>(i)].mean();
      s(i, i) = ls->base()[static_cast<std::size_t>(i)].variance();
    }
    s += mean * mean.transpose();
    return Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues().minCoeff();
  }
  if (domain.x_degenerate()) {
    // x is a fixed vector c: E[x x^T] = c c^T, min eigenvalue 0 unless m == 1.
    if (domain.x.size() == 1) return domain.x[0].lo * domain.x[0].lo;
    return 0.0;
  }
  return std::nullopt;
}

}  // namespace

RegularityConstants certify_constants(const LossModel& loss, const DataDomain& domain,
                                      const ParamSet& theta_set, const DistributionMap* map) {
  RegularityConstants c;
  if (map) {
    if (auto eps = map->sensitivity()) {
      c.epsilon = *eps;
    } else {
      c.missing.push_back("epsilon: map has no closed-form sensitivity");
    }
  }
  const Index d = loss.dim();
  if (static_cast<Index>(domain.x.size()) != d)
    throw std::invalid_argument("certify_constants: domain dimension does not match the loss");

  if (const auto* q = dynamic_cast<const QuadraticLoss*>(&loss)) {
    const double lambda = q->lambda();
    const auto eig = second_moment_min_eig(map, domain);
    c.gamma = lambda + eig.value_or(0.0);
    if (!eig) c.missing.push_back("gamma: feature second moment unknown, using lambda only");

    // grad = (theta^T x - y) x + lambda theta. In y it is 1-Lipschitz times |x|;
    // in x it also picks up |theta^T x - y| + |theta||x|.
    if (domain.x_degenerate()) {
      c.beta_z = domain.max_x_norm();
    } else if (domain.x_bounded() && theta_set.bounded() && domain.y.bounded()) {
      const double xn = domain.max_x_norm();
      const double tn = theta_set.max_norm();
      const double resid = tn * xn + domain.y.max_abs();
      c.beta_z = std::hypot(xn, resid + tn * xn);
    } else {
      c.beta_z = std::numeric_limits<double>::infinity();
      c.missing.push_back("beta_z: unbounded feature or parameter domain");
    }

    if (domain.x_bounded()) {
      c.beta_theta = domain.max_x_norm() * domain.max_x_norm() + lambda;
    } else {
      c.missing.push_back("beta_theta: unbounded feature domain");
    }

    // L_z = sup |d l / dz|. With static x only y moves: |y - theta^T x|.
    if (domain.x_bounded() && domain.y.bounded() && theta_set.bounded()) {
      double sup_resid = 0.0;
      if (theta_set.kind() == ParamSet::Kind::box && domain.x_degenerate()) {
        // Exact: residual is affine in (theta, y), maximized at box vertices.
        Vector x(d);
        for (Index i = 0; i < d; ++i) x[i] = domain.x[static_cast<std::size_t>(i)].lo;
        double lo_fit = 0.0, hi_fit = 0.0;
        for (Index i = 0; i < d; ++i) {
          const double a = theta_set.lower()[i] * x[i];
          const double b = theta_set.upper()[i] * x[i];
          lo_fit += std::min(a, b);
          hi_fit += std::max(a, b);
        }
        sup_resid = std::max(std::abs(domain.y.hi - lo_fit), std::abs(domain.y.lo - hi_fit));
      } else {
        sup_resid = domain.y.max_abs() + theta_set.max_norm() * domain.max_x_norm();
      }
      if (domain.x_degenerate()) {
        c.lipschitz_z = sup_resid;
      } else {
        c.lipschitz_z = sup_resid * std::sqrt(1.0 + theta_set.max_norm() * theta_set.max_norm());
      }
    } else {
      c.missing.push_back("L_z: unbounded data or parameter domain");
    }

    // (sigma, L): with x == 1 and a Gaussian label, E[(gamma theta' - y)^2]
    // = s^2 + gamma^2 (theta' - G(theta))^2 exactly.
    if (map && d == 1 && domain.x_degenerate() && domain.x[0].lo == 1.0) {
      if (const auto* ls = dynamic_cast<const LocationScaleMap*>(map)) {
        const double sd = std::sqrt(ls->base().back().variance());
        c.sigma = sd;
        c.variance_l = 1.0 + lambda;
      }
    }
    if (!c.sigma) c.missing.push_back("sigma: no closed form outside the scalar label-shift family");
    if (!c.variance_l) c.missing.push_back("L: no closed form outside the scalar label-shift family");
    return c;
  }

  if (const auto* lg = dynamic_cast<const LogisticLoss*>(&loss)) {
    const double lambda = lg->lambda();
    c.gamma = lambda;
    if (domain.x_bounded()) {
      const double xn = domain.max_x_norm();
      c.beta_theta = 0.25 * xn * xn + lambda;
      if (theta_set.bounded()) {
        const double tn = theta_set.max_norm();
        // |d/dx grad| <= sigma' |y| |x| |theta| + sigma <= 1/4 xn tn + 1.
        c.beta_z = 0.25 * xn * tn + 1.0;
        c.lipschitz_z = tn;
      } else {
        c.beta_z = std::numeric_limits<double>::infinity();
        c.missing.push_back("beta_z: unbounded parameter set");
        c.missing.push_back("L_z: unbounded parameter set");
      }
    } else {
      c.beta_z = std::numeric_limits<double>::infinity();
      c.missing.push_back("beta_theta: unbounded feature domain");
      c.missing.push_back("L_z: unbounded feature domain");
    }
    c.missing.push_back("sigma: not certified for logistic loss");
    c.missing.push_back("L: not certified for logistic loss");
    return c;
  }

  throw std::invalid_argument(fmt::format("certify_constants: unsupported loss '{}'", loss.name()));
}

RegularityConstants certify_constants(const LossModel& loss, const DistributionMap& map,
                                      const ParamSet& theta_set) {
  return certify_constants(loss, map.support(theta_set), theta_set, &map);
}

double loss_range(const LossModel& loss, const DataDomain& domain, const ParamSet& theta_set) {
  if (!domain.x_bounded() || !domain.y.bounded() || !theta_set.bounded())
    throw std::domain_error("loss_range: needs a compact data domain and parameter set");
  const double xn = domain.max_x_norm();
  const double tn = theta_set.max_norm();
  if (const auto* q = dynamic_cast<const QuadraticLoss*>(&loss)) {
    double sup_resid = domain.y.max_abs() + tn * xn;
    if (theta_set.kind() == ParamSet::Kind::box && domain.x_degenerate()) {
      double lo_fit = 0.0, hi_fit = 0.0;
      for (Index i = 0; i < theta_set.dim(); ++i) {
        const double x = domain.x[static_cast<std::size_t>(i)].lo;
        lo_fit += std::min(theta_set.lower()[i] * x, theta_set.upper()[i] * x);
        hi_fit += std::max(theta_set.lower()[i] * x, theta_set.upper()[i] * x);
      }
      sup_resid = std::max(std::abs(domain.y.hi - lo_fit), std::abs(domain.y.lo - hi_fit));
    }
    // inf of the loss is >= 0.
    return 0.5 * sup_resid * sup_resid + 0.5 * q->lambda() * tn * tn;
  }
  if (const auto* lg = dynamic_cast<const LogisticLoss*>(&loss)) {
    const double m = tn * xn;
    return softplus(m) - softplus(-m) + 0.5 * lg->lambda() * tn * tn;
  }
  throw std::invalid_argument(fmt::format("loss_range: unsupported loss '{}'", loss.name()));
}

}  // namespace perfpred
