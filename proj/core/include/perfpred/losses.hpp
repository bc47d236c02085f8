#pragma once

#include "perfpred/core.hpp"

namespace perfpred {

/// Ridge-regularized squared loss 0.5 (y - theta^T x)^2 + 0.5 lambda ||theta||^2.
/// With x == 1 this is the scalar 0.5 (z - theta)^2 + 0.5 lambda theta^2.
class QuadraticLoss final : public LossModel {
 public:
  QuadraticLoss(double lambda, Index dim);

  std::string_view name() const override { return "quadratic"; }
  Index dim() const override { return dim_; }
  double value(const ParamPoint& theta, const DataPoint& z) const override;
  Vector grad(const ParamPoint& theta, const DataPoint& z) const override;
  Matrix hessian(const ParamPoint& theta, const DataPoint& z) const override;

  double lambda() const noexcept { return lambda_; }

 private:
  double lambda_;
  Index dim_;
};

/// log(1 + exp(-y theta^T x)) + 0.5 lambda ||theta||^2 with y in {-1, +1}.
class LogisticLoss final : public LossModel {
 public:
  LogisticLoss(double lambda, Index dim);

  std::string_view name() const override { return "logistic"; }
  Index dim() const override { return dim_; }
  double value(const ParamPoint& theta, const DataPoint& z) const override;
  Vector grad(const ParamPoint& theta, const DataPoint& z) const override;
  Matrix hessian(const ParamPoint& theta, const DataPoint& z) const override;

  double lambda() const noexcept { return lambda_; }

 private:
  double lambda_;
  Index dim_;
};

/// Analytic regularity constants for `loss` on `domain` with parameters in
/// `theta_set`. epsilon is copied from the map's certificate when present.
/// Constants that need a compact domain are left empty (and listed in
/// `missing`) when the domain is unbounded; the require_* accessors throw
/// with the offending constant's name.
RegularityConstants certify_constants(const LossModel& loss, const DataDomain& domain,
                                      const ParamSet& theta_set,
                                      const DistributionMap* map = nullptr);

/// Convenience overload using map.support(theta_set) as the domain.
RegularityConstants certify_constants(const LossModel& loss, const DistributionMap& map,
                                      const ParamSet& theta_set);

/// Range sup l - inf l over the declared domain (for concentration bounds).
double loss_range(const LossModel& loss, const DataDomain& domain, const ParamSet& theta_set);

}  // namespace perfpred
