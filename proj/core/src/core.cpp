#include "perfpred/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "perfpred/maps.hpp"

namespace perfpred {

Vector DataPoint::concat() const {
  Vector z(x.size() + 1);
  z.head(x.size()) = x;
  z[x.size()] = y;
  return z;
}

// ---- ParamSet ----------------------------------------------------------------

ParamSet ParamSet::unbounded(Index dim) {
  if (dim < 1) throw std::invalid_argument("ParamSet: dimension must be >= 1");
  ParamSet s;
  s.kind_ = Kind::unbounded;
  s.lo_ = Vector::Constant(dim, -std::numeric_limits<double>::infinity());
  s.hi_ = Vector::Constant(dim, std::numeric_limits<double>::infinity());
  s.center_ = Vector::Zero(dim);
  return s;
}

ParamSet ParamSet::box(Vector lo, Vector hi) {
  if (lo.size() < 1 || lo.size() != hi.size())
    throw std::invalid_argument("ParamSet::box: bounds must be nonempty and of equal size");
  for (Index i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]))
      throw std::invalid_argument("ParamSet::box: need finite lo <= hi on every axis");
  }
  ParamSet s;
  s.kind_ = Kind::box;
  s.center_ = 0.5 * (lo + hi);
  s.lo_ = std::move(lo);
  s.hi_ = std::move(hi);
  return s;
}

ParamSet ParamSet::interval(double lo, double hi) {
  return box(Vector::Constant(1, lo), Vector::Constant(1, hi));
}

ParamSet ParamSet::ball(Vector center, double radius) {
  if (center.size() < 1) throw std::invalid_argument("ParamSet::ball: empty center");
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("ParamSet::ball: radius must be positive and finite");
  ParamSet s;
  s.kind_ = Kind::ball;
  s.lo_ = center.array() - radius;
  s.hi_ = center.array() + radius;
  s.center_ = std::move(center);
  s.radius_ = radius;
  return s;
}

ParamPoint ParamSet::project(const ParamPoint& theta) const {
  if (theta.size() != dim())
    throw std::invalid_argument("ParamSet::project: dimension mismatch");
  switch (kind_) {
    case Kind::unbounded:
      return theta;
    case Kind::box:
      return theta.cwiseMax(lo_).cwiseMin(hi_);
    case Kind::ball: {
      const Vector d = theta - center_;
      const double n = d.norm();
      if (n <= radius_) return theta;
      return center_ + d * (radius_ / n);
    }
  }
  return theta;
}

bool ParamSet::contains(const ParamPoint& theta, double tol) const {
  if (theta.size() != dim()) return false;
  switch (kind_) {
    case Kind::unbounded:
      return true;
    case Kind::box:
      return ((theta - lo_).array() >= -tol).all() && ((hi_ - theta).array() >= -tol).all();
    case Kind::ball:
      return (theta - center_).norm() <= radius_ + tol;
  }
  return false;
}

double ParamSet::diameter() const {
  switch (kind_) {
    case Kind::unbounded:
      return std::numeric_limits<double>::infinity();
    case Kind::box:
      return (hi_ - lo_).norm();
    case Kind::ball:
      return 2.0 * radius_;
  }
  return 0.0;
}

double ParamSet::max_norm() const {
  switch (kind_) {
    case Kind::unbounded:
      return std::numeric_limits<double>::infinity();
    case Kind::box:
      return lo_.cwiseAbs().cwiseMax(hi_.cwiseAbs()).norm();
    case Kind::ball:
      return center_.norm() + radius_;
  }
  return 0.0;
}

// ---- domains -----------------------------------------------------------------

bool Interval::bounded() const noexcept { return std::isfinite(lo) && std::isfinite(hi); }

double Interval::max_abs() const noexcept { return std::max(std::abs(lo), std::abs(hi)); }

bool DataDomain::x_bounded() const noexcept {
  return std::all_of(x.begin(), x.end(), [](const Interval& i) { return i.bounded(); });
}

bool DataDomain::x_degenerate() const noexcept {
  return std::all_of(x.begin(), x.end(), [](const Interval& i) { return i.degenerate(); });
}

double DataDomain::max_x_norm() const noexcept {
  double s = 0.0;
  for (const auto& i : x) s += i.max_abs() * i.max_abs();
  return std::sqrt(s);
}

// ---- constants ---------------------------------------------------------------

double RegularityConstants::beta_max() const noexcept {
  return beta_theta ? std::max(beta_z, *beta_theta) : beta_z;
}

namespace {

double require(const std::optional<double>& v, const char* name,
               const std::vector<std::string>& missing) {
  if (v) return *v;
  std::string msg = std::string("constant ") + name + " is not certified";
  for (const auto& m : missing) {
    if (m.rfind(name, 0) == 0) {
      msg += ": " + m;
      break;
    }
  }
  throw std::domain_error(msg);
}

}  // namespace

double RegularityConstants::require_beta_theta() const {
  return require(beta_theta, "beta_theta", missing);
}
double RegularityConstants::require_lipschitz_z() const {
  return require(lipschitz_z, "L_z", missing);
}
double RegularityConstants::require_sigma() const { return require(sigma, "sigma", missing); }
double RegularityConstants::require_variance_l() const {
  return require(variance_l, "L", missing);
}

void DistributionMap::check_param(const ParamPoint& theta) const {
  if (theta.size() != param_dim())
    throw std::invalid_argument(std::string(name()) + ": parameter dimension mismatch (got " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(param_dim()) + ")");
}

std::string_view to_string(EvalPath path) noexcept {
  return path == EvalPath::exact ? "exact" : "monte_carlo";
}

bool all_finite(const Vector& v) noexcept { return v.allFinite(); }

// ---- risk --------------------------------------------------------------------

double risk(const LossModel& loss, const ParamPoint& theta, std::span<const DataPoint> samples) {
  if (samples.empty()) throw std::invalid_argument("no data");
  double sum = 0.0;
  for (const auto& z : samples) sum += loss.value(theta, z);
  return sum / static_cast<double>(samples.size());
}

Estimate risk_estimate(const LossModel& loss, const ParamPoint& theta,
                       std::span<const DataPoint> samples) {
  if (samples.empty()) throw std::invalid_argument("no data");
  // Welford keeps the variance stable for large n.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (const auto& z : samples) {
    const double v = loss.value(theta, z);
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  const double var = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(n)), EvalPath::monte_carlo};
}

Estimate performative_risk(const LossModel& loss, const DistributionMap& map,
                           const ParamPoint& theta, std::size_t n, Stream& stream,
                           bool allow_exact) {
  if (n < 1) throw std::invalid_argument("performative_risk: n must be >= 1");
  if (allow_exact) {
    if (auto cert = equilibrium_certificates(map, loss))
      return {cert->pr_exact(theta), 0.0, EvalPath::exact};
  }
  const auto samples = map.sample(theta, n, stream);
  return risk_estimate(loss, theta, samples);
}

SteeringDecomposition steering_decomposition(const LossModel& loss, const DistributionMap& map,
                                             const ParamPoint& theta, const ParamPoint& phi,
                                             std::size_t n, Stream& stream, bool allow_exact) {
  if (n < 1) throw std::invalid_argument("steering_decomposition: n must be >= 1");
  if (allow_exact) {
    if (auto cert = equilibrium_certificates(map, loss)) {
      const double learning = cert->risk_exact(theta, phi);
      const double pr = cert->pr_exact(theta);
      return {{learning, 0.0, EvalPath::exact}, {pr - learning, 0.0, EvalPath::exact}};
    }
  }
  Stream s_phi = stream.child(1);
  Stream s_theta = stream.child(2);
  const auto at_phi = map.sample(phi, n, s_phi);
  const auto at_theta = map.sample(theta, n, s_theta);
  const Estimate learning = risk_estimate(loss, theta, at_phi);
  const Estimate pr = risk_estimate(loss, theta, at_theta);
  const double se = std::sqrt(learning.std_error * learning.std_error + pr.std_error * pr.std_error);
  return {learning, {pr.value - learning.value, se, EvalPath::monte_carlo}};
}

// ---- Wasserstein / sensitivity -------------------------------------------------

double wasserstein1_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_1d: empty input");
  if (a.size() != b.size())
    throw std::invalid_argument("wasserstein1_1d: size mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) sum += std::abs(sa[i] - sb[i]);
  return sum / static_cast<double>(sa.size());
}

double empirical_sensitivity(const DistributionMap& map,
                             std::span<const std::pair<ParamPoint, ParamPoint>> probes,
                             std::size_t n, Stream& stream, const Projection1d& projection) {
  if (n < 1) throw std::invalid_argument("empirical_sensitivity: n must be >= 1");
  const auto project = [&](const DataPoint& z) {
    return projection ? projection(z) : map.project1d(z);
  };
  double best = 0.0;
  std::size_t used = 0;
  std::uint64_t key = 0;
  for (const auto& [t1, t2] : probes) {
    const double gap = (t1 - t2).norm();
    ++key;
    if (!(gap > 0.0)) continue;
    ++used;
    Stream s1 = stream.child(2 * key);
    Stream s2 = stream.child(2 * key + 1);
    const auto d1 = map.sample(t1, n, s1);
    const auto d2 = map.sample(t2, n, s2);
    std::vector<double> p1(n), p2(n);
    for (std::size_t i = 0; i < n; ++i) {
      p1[i] = project(d1[i]);
      p2[i] = project(d2[i]);
    }
    best = std::max(best, wasserstein1_1d(p1, p2) / gap);
  }
  if (used == 0) throw std::invalid_argument("empirical_sensitivity: all probe pairs coincide");
  return best;
}

double estimate_sensitivity(const DistributionMap& map,
                            std::span<const std::pair<ParamPoint, ParamPoint>> probes,
                            std::size_t n, Stream& stream, const Projection1d& projection) {
  if (auto eps = map.sensitivity()) return *eps;
  return empirical_sensitivity(map, probes, n, stream, projection);
}

}  // namespace perfpred
