#include <cmath>
#include <stdexcept>

#include "perfpred/losses.hpp"
#include "perfpred/maps.hpp"

namespace perfpred {

// Quadratic loss over a label-shift location-scale map. With x independent of
// theta and of the label noise:
//   Risk(theta, D(phi)) = 1/2 (theta^T S theta - 2 theta^T E[x] m(phi) + s^2 + m(phi)^2)
//                         + 1/2 lambda |theta|^2,
// where S = E[x x^T] and m(phi) = E[y] + mu_y^T phi.
std::optional<EquilibriumCertificates> equilibrium_certificates(const DistributionMap& map,
                                                                const LossModel& loss) {
  const auto* ls = dynamic_cast<const LocationScaleMap*>(&map);
  const auto* q = dynamic_cast<const QuadraticLoss*>(&loss);
  if (!ls || !q || !ls->features_static()) return std::nullopt;
  const Index m = ls->feature_dim();
  if (loss.dim() != m || ls->param_dim() != m) return std::nullopt;

  Vector ex(m);
  Matrix s = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    const auto& c = ls->base()[static_cast<std::size_t>(i)];
    ex[i] = c.mean();
    s(i, i) = c.variance();
  }
  s += ex * ex.transpose();
  const double lambda = q->lambda();
  const Vector mu_y = ls->mu().row(m).transpose();
  const double m0 = ls->base().back().mean();
  const double s2 = ls->base().back().variance();
  const Matrix a = s + lambda * Matrix::Identity(m, m);

  Eigen::LDLT<Matrix> a_ldlt(a);
  if (a_ldlt.info() != Eigen::Success || !(a_ldlt.vectorD().array() > 1e-14).all())
    return std::nullopt;
  const Vector u = a_ldlt.solve(ex);

  EquilibriumCertificates cert;
  auto mean_y = [mu_y, m0](const ParamPoint& phi) { return m0 + mu_y.dot(phi); };

  cert.best_response = [u, mean_y](const ParamPoint& phi) -> ParamPoint { return u * mean_y(phi); };
  cert.best_response_jacobian = u * mu_y.transpose();
  cert.risk_exact = [s, ex, s2, lambda, mean_y](const ParamPoint& theta, const ParamPoint& phi) {
    const double my = mean_y(phi);
    return 0.5 * (theta.dot(s * theta) - 2.0 * theta.dot(ex) * my + s2 + my * my) +
           0.5 * lambda * theta.squaredNorm();
  };
  cert.pr_exact = [risk = cert.risk_exact](const ParamPoint& theta) { return risk(theta, theta); };
  cert.mean_grad = [a, ex, mean_y](const ParamPoint& theta, const ParamPoint& phi) -> Vector {
    return a * theta - ex * mean_y(phi);
  };

  const Matrix fixed = Matrix::Identity(m, m) - u * mu_y.transpose();
  Eigen::FullPivLU<Matrix> lu(fixed);
  if (lu.isInvertible()) cert.theta_ps = lu.solve(u * m0);

  const Matrix h = a - ex * mu_y.transpose() - mu_y * ex.transpose() + mu_y * mu_y.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  if (eig.eigenvalues().minCoeff() > 1e-14) cert.theta_po = Vector(h.ldlt().solve((ex - mu_y) * m0));

  return cert;
}

Estimate dominance_gap(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta,
                       const ParamPoint& theta1, const ParamPoint& theta2, double alpha,
                       std::size_t n, Stream& stream) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("dominance_gap: alpha must lie in [0, 1]");
  if (n < 2) throw std::invalid_argument("dominance_gap: n must be >= 2");
  Stream s_mid = stream.child(1);
  Stream s_1 = stream.child(2);
  Stream s_2 = stream.child(3);
  const ParamPoint mid = alpha * theta1 + (1.0 - alpha) * theta2;
  const Estimate e_mid = risk_estimate(loss, theta, map.sample(mid, n, s_mid));
  const Estimate e_1 = risk_estimate(loss, theta, map.sample(theta1, n, s_1));
  const Estimate e_2 = risk_estimate(loss, theta, map.sample(theta2, n, s_2));
  const double value = e_mid.value - (alpha * e_1.value + (1.0 - alpha) * e_2.value);
  const double var = e_mid.std_error * e_mid.std_error +
                     alpha * alpha * e_1.std_error * e_1.std_error +
                     (1.0 - alpha) * (1.0 - alpha) * e_2.std_error * e_2.std_error;
  return {value, std::sqrt(var), EvalPath::monte_carlo};
}

}  // namespace perfpred
