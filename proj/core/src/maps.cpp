#include "perfpred/maps.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace perfpred {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Range of r^T theta over the parameter set.
Interval linear_range(const Eigen::Ref<const Vector>& r, const ParamSet& set) {
  if (r.isZero(0.0)) return {0.0, 0.0};
  switch (set.kind()) {
    case ParamSet::Kind::unbounded:
      return {-kInf, kInf};
    case ParamSet::Kind::box: {
      double lo = 0.0, hi = 0.0;
      for (Index i = 0; i < r.size(); ++i) {
        const double a = r[i] * set.lower()[i];
        const double b = r[i] * set.upper()[i];
        lo += std::min(a, b);
        hi += std::max(a, b);
      }
      return {lo, hi};
    }
    case ParamSet::Kind::ball: {
      const double c = r.dot(set.center());
      const double w = r.norm() * set.radius();
      return {c - w, c + w};
    }
  }
  return {-kInf, kInf};
}

Interval add(const Interval& a, const Interval& b) { return {a.lo + b.lo, a.hi + b.hi}; }

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

}  // namespace

// ---- BaseCoordinate ------------------------------------------------------------

BaseCoordinate BaseCoordinate::gaussian(double mean, double sd) {
  if (!std::isfinite(mean) || !(sd >= 0.0) || !std::isfinite(sd))
    throw std::invalid_argument("BaseCoordinate::gaussian: need finite mean and sd >= 0");
  return {Kind::gaussian, mean, sd};
}

BaseCoordinate BaseCoordinate::uniform(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo <= hi))
    throw std::invalid_argument("BaseCoordinate::uniform: need finite lo <= hi");
  return {Kind::uniform, lo, hi};
}

double BaseCoordinate::mean() const noexcept { return kind == Kind::gaussian ? a : 0.5 * (a + b); }

double BaseCoordinate::variance() const noexcept {
  return kind == Kind::gaussian ? b * b : (b - a) * (b - a) / 12.0;
}

Interval BaseCoordinate::support() const noexcept {
  if (kind == Kind::uniform) return {a, b};
  if (b == 0.0) return {a, a};
  return {-kInf, kInf};
}

double BaseCoordinate::draw(Stream& stream) const {
  return kind == Kind::gaussian ? stream.normal(a, b) : stream.uniform(a, b);
}

// ---- LocationScaleMap ------------------------------------------------------------

LocationScaleMap::LocationScaleMap(std::vector<BaseCoordinate> base, Matrix mu)
    : base_(std::move(base)), mu_(std::move(mu)) {
  if (base_.size() < 2)
    throw std::invalid_argument("LocationScaleMap: need at least one feature and the label");
  if (mu_.rows() != static_cast<Index>(base_.size()))
    throw std::invalid_argument(fmt::format(
        "LocationScaleMap: mu has {} rows, base has {} coordinates", mu_.rows(), base_.size()));
  if (mu_.cols() < 1) throw std::invalid_argument("LocationScaleMap: mu needs >= 1 column");
  if (!mu_.allFinite()) throw std::invalid_argument("LocationScaleMap: mu must be finite");
}

LocationScaleMap LocationScaleMap::label_shift_1d(double a, double b, double s) {
  Matrix mu(2, 1);
  mu << 0.0, a;
  return LocationScaleMap({BaseCoordinate::point(1.0), BaseCoordinate::gaussian(b, s)}, mu);
}

std::vector<DataPoint> LocationScaleMap::sample(const ParamPoint& theta, std::size_t n,
                                                Stream& stream) const {
  check_param(theta);
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const Vector shift = mu_ * theta;
  const Index m = feature_dim();
  std::vector<DataPoint> out(n);
  for (auto& z : out) {
    z.x.resize(m);
    for (Index i = 0; i < m; ++i) z.x[i] = base_[static_cast<std::size_t>(i)].draw(stream) + shift[i];
    z.y = base_.back().draw(stream) + shift[m];
  }
  return out;
}

std::optional<double> LocationScaleMap::sensitivity() const { return operator_norm(mu_); }

DataDomain LocationScaleMap::support(const ParamSet& theta_set) const {
  DataDomain d;
  const Index m = feature_dim();
  for (Index i = 0; i < m; ++i)
    d.x.push_back(add(base_[static_cast<std::size_t>(i)].support(),
                      linear_range(mu_.row(i).transpose(), theta_set)));
  d.y = add(base_.back().support(), linear_range(mu_.row(m).transpose(), theta_set));
  return d;
}

bool LocationScaleMap::features_static() const noexcept {
  return mu_.topRows(mu_.rows() - 1).isZero(0.0);
}

// ---- GaussianMixtureMeanShiftMap ---------------------------------------------------

GaussianMixtureMeanShiftMap::GaussianMixtureMeanShiftMap(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("GaussianMixtureMeanShiftMap: no components");
  data_dim_ = components_.front().offset.size();
  param_dim_ = components_.front().shift.cols();
  if (data_dim_ < 2) throw std::invalid_argument("GaussianMixtureMeanShiftMap: data dim must be >= 2");
  if (param_dim_ < 1) throw std::invalid_argument("GaussianMixtureMeanShiftMap: shift needs columns");
  double total = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw std::invalid_argument(fmt::format("component {}: weight must be > 0", i));
    if (c.offset.size() != data_dim_ || c.shift.rows() != data_dim_ ||
        c.shift.cols() != param_dim_ || c.std_dev.size() != data_dim_)
      throw std::invalid_argument(fmt::format("component {}: inconsistent dimensions", i));
    if ((c.std_dev.array() <= 0.0).any() || !c.std_dev.allFinite())
      throw std::invalid_argument(fmt::format("component {}: std_dev must be positive", i));
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument(
        fmt::format("GaussianMixtureMeanShiftMap: weights sum to {}, expected 1", total));
  double acc = 0.0;
  for (const auto& c : components_) {
    acc += c.weight;
    cumulative_.push_back(acc);
  }
  cumulative_.back() = 1.0;
}

std::vector<DataPoint> GaussianMixtureMeanShiftMap::sample(const ParamPoint& theta, std::size_t n,
                                                           Stream& stream) const {
  check_param(theta);
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  std::vector<Vector> means;
  means.reserve(components_.size());
  for (const auto& c : components_) means.push_back(c.offset + c.shift * theta);
  const Index m = data_dim_ - 1;
  std::vector<DataPoint> out(n);
  for (auto& z : out) {
    const double u = stream.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                         components_.size() - 1);
    const auto& c = components_[k];
    z.x.resize(m);
    for (Index i = 0; i < m; ++i) z.x[i] = stream.normal(means[k][i], c.std_dev[i]);
    z.y = stream.normal(means[k][m], c.std_dev[m]);
  }
  return out;
}

std::optional<double> GaussianMixtureMeanShiftMap::sensitivity() const {
  double eps = 0.0;
  for (const auto& c : components_) eps += c.weight * operator_norm(c.shift);
  return eps;
}

DataDomain GaussianMixtureMeanShiftMap::support(const ParamSet&) const {
  DataDomain d;
  d.x.assign(static_cast<std::size_t>(data_dim_ - 1), Interval{});
  d.y = Interval{};
  return d;
}

// ---- StrategicResponseMap ------------------------------------------------------------

StrategicResponseMap::StrategicResponseMap(std::vector<BaseCoordinate> base_x, double eta,
                                           Vector label_weights, double label_threshold)
    : base_x_(std::move(base_x)),
      eta_(eta),
      label_weights_(std::move(label_weights)),
      label_threshold_(label_threshold) {
  if (base_x_.empty()) throw std::invalid_argument("StrategicResponseMap: no features");
  if (!(eta_ > 0.0) || !std::isfinite(eta_))
    throw std::invalid_argument("StrategicResponseMap: eta must be finite and > 0");
  if (label_weights_.size() != static_cast<Index>(base_x_.size()))
    throw std::invalid_argument("StrategicResponseMap: label weights dimension mismatch");
}

Vector StrategicResponseMap::best_response(const Vector& x_orig, const ParamPoint& theta) const {
  return x_orig + eta_ * theta;
}

double StrategicResponseMap::utility(const Vector& x_orig, const Vector& x_new,
                                     const ParamPoint& theta) const {
  return theta.dot(x_new) - (x_new - x_orig).squaredNorm() / (2.0 * eta_);
}

double StrategicResponseMap::label(const Vector& x_orig) const {
  return label_weights_.dot(x_orig) >= label_threshold_ ? 1.0 : -1.0;
}

std::vector<DataPoint> StrategicResponseMap::sample(const ParamPoint& theta, std::size_t n,
                                                    Stream& stream) const {
  check_param(theta);
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const Index m = feature_dim();
  std::vector<DataPoint> out(n);
  Vector x0(m);
  for (auto& z : out) {
    for (Index i = 0; i < m; ++i) x0[i] = base_x_[static_cast<std::size_t>(i)].draw(stream);
    z.x = best_response(x0, theta);
    z.y = label(x0);
  }
  return out;
}

DataDomain StrategicResponseMap::support(const ParamSet& theta_set) const {
  DataDomain d;
  for (Index i = 0; i < feature_dim(); ++i) {
    Vector e = Vector::Zero(feature_dim());
    e[i] = eta_;
    d.x.push_back(add(base_x_[static_cast<std::size_t>(i)].support(), linear_range(e, theta_set)));
  }
  d.y = {-1.0, 1.0};
  return d;
}

// ---- OutcomePerformativityMap -----------------------------------------------------------

OutcomePerformativityMap::OutcomePerformativityMap(std::vector<BaseCoordinate> base_x,
                                                   Vector outcome_weights, double kappa,
                                                   double noise_sd)
    : base_x_(std::move(base_x)), noise_sd_(noise_sd) {
  if (base_x_.empty()) throw std::invalid_argument("OutcomePerformativityMap: no features");
  if (outcome_weights.size() != static_cast<Index>(base_x_.size()))
    throw std::invalid_argument("OutcomePerformativityMap: outcome weights dimension mismatch");
  if (!std::isfinite(kappa)) throw std::invalid_argument("OutcomePerformativityMap: kappa must be finite");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("OutcomePerformativityMap: noise_sd must be >= 0");
  linear_ = std::make_pair(outcome_weights, kappa);
  g_ = [w = std::move(outcome_weights), kappa](const Vector& x, double yhat, double xi) {
    return w.dot(x) + kappa * yhat + xi;
  };
}

OutcomePerformativityMap::OutcomePerformativityMap(std::vector<BaseCoordinate> base_x,
                                                   StructuralEquation g, double noise_sd)
    : base_x_(std::move(base_x)), g_(std::move(g)), noise_sd_(noise_sd) {
  if (base_x_.empty()) throw std::invalid_argument("OutcomePerformativityMap: no features");
  if (!g_) throw std::invalid_argument("OutcomePerformativityMap: empty structural equation");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("OutcomePerformativityMap: noise_sd must be >= 0");
}

std::vector<DataPoint> OutcomePerformativityMap::sample(const ParamPoint& theta, std::size_t n,
                                                        Stream& stream) const {
  check_param(theta);
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const Index m = feature_dim();
  std::vector<DataPoint> out(n);
  for (auto& z : out) {
    z.x.resize(m);
    for (Index i = 0; i < m; ++i) z.x[i] = base_x_[static_cast<std::size_t>(i)].draw(stream);
    const double xi = stream.normal(0.0, noise_sd_);
    z.y = g_(z.x, theta.dot(z.x), xi);
  }
  return out;
}

std::optional<double> OutcomePerformativityMap::sensitivity() const {
  if (!linear_) return std::nullopt;
  double second_moment = 0.0;
  for (const auto& c : base_x_) second_moment += c.variance() + c.mean() * c.mean();
  return std::abs(linear_->second) * std::sqrt(second_moment);
}

DataDomain OutcomePerformativityMap::support(const ParamSet& theta_set) const {
  DataDomain d;
  for (const auto& c : base_x_) d.x.push_back(c.support());
  d.y = Interval{};
  if (linear_ && noise_sd_ == 0.0 && d.x_bounded() && theta_set.bounded()) {
    const double bound =
        (linear_->first.norm() + std::abs(linear_->second) * theta_set.max_norm()) * d.max_x_norm();
    d.y = {-bound, bound};
  }
  return d;
}

// ---- ScalarResponse -------------------------------------------------------------------------

namespace {

double evaluate(const ScalarResponse::Expr& expr, double y) {
  return std::visit(
      [y](const auto& e) -> double {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ScalarResponse::Affine>) {
          return e.intercept + e.slope * y;
        } else if constexpr (std::is_same_v<T, ScalarResponse::Polynomial>) {
          double acc = 0.0;
          for (auto it = e.coefficients.rbegin(); it != e.coefficients.rend(); ++it)
            acc = acc * y + *it;
          return acc;
        } else {
          const auto& k = e.knots;
          const auto& v = e.values;
          if (y <= k.front()) return v.front();
          if (y >= k.back()) return v.back();
          const auto it = std::upper_bound(k.begin(), k.end(), y);
          const auto j = static_cast<std::size_t>(it - k.begin());
          const double t = (y - k[j - 1]) / (k[j] - k[j - 1]);
          return v[j - 1] + t * (v[j] - v[j - 1]);
        }
      },
      expr);
}

}  // namespace

ScalarResponse::ScalarResponse(Expr expr) : expr_(std::move(expr)) {
  if (const auto* p = std::get_if<PiecewiseLinear>(&expr_)) {
    if (p->knots.size() < 2 || p->knots.size() != p->values.size())
      throw std::invalid_argument("ScalarResponse: piecewise-linear needs >= 2 matching knots/values");
    for (std::size_t i = 1; i < p->knots.size(); ++i)
      if (!(p->knots[i] > p->knots[i - 1]))
        throw std::invalid_argument("ScalarResponse: knots must be strictly increasing");
    if (p->knots.front() > 0.0 || p->knots.back() < 1.0)
      throw std::invalid_argument("ScalarResponse: knots must cover [0, 1]");
  }
  if (const auto* p = std::get_if<Polynomial>(&expr_); p && p->coefficients.empty())
    throw std::invalid_argument("ScalarResponse: polynomial needs coefficients");
  for (int i = 0; i <= 1000; ++i) {
    const double y = i / 1000.0;
    const double r = evaluate(expr_, y);
    if (!(r >= 0.0 && r <= 1.0))
      throw std::invalid_argument(
          fmt::format("ScalarResponse: R({}) = {} lies outside [0, 1]", y, r));
  }
}

ScalarResponse ScalarResponse::affine(double intercept, double slope) {
  return ScalarResponse(Affine{intercept, slope});
}

ScalarResponse ScalarResponse::piecewise_linear(std::vector<double> knots,
                                                std::vector<double> values) {
  return ScalarResponse(PiecewiseLinear{std::move(knots), std::move(values)});
}

ScalarResponse ScalarResponse::polynomial(std::vector<double> coefficients) {
  return ScalarResponse(Polynomial{std::move(coefficients)});
}

double ScalarResponse::operator()(double yhat) const { return evaluate(expr_, yhat); }

}  // namespace perfpred
