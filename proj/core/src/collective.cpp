#include "perfpred/collective.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace perfpred::collective {

namespace {

std::string str(const Rational& r) { return r.str(); }

}  // namespace

TabularPopulation::TabularPopulation(std::vector<std::array<Rational, 2>> mass)
    : mass_(std::move(mass)) {
  if (mass_.empty()) throw std::invalid_argument("TabularPopulation: empty domain");
  if (mass_.size() > 10'000) throw std::invalid_argument("TabularPopulation: domain above 1e4 points");
  for (std::size_t x = 0; x < mass_.size(); ++x)
    for (int y = 0; y < 2; ++y)
      if (mass_[x][static_cast<std::size_t>(y)] < 0)
        throw std::invalid_argument(fmt::format("TabularPopulation: negative mass at ({}, {})", x, y));
  const Rational t = total();
  if (t != 1) throw std::invalid_argument("TabularPopulation: masses sum to " + str(t) + ", expected 1");
}

Rational TabularPopulation::total() const {
  Rational t = 0;
  for (const auto& row : mass_) t += row[0] + row[1];
  return t;
}

TabularPopulation TabularPopulation::from_weights(
    const std::vector<std::array<long long, 2>>& weights) {
  Rational total = 0;
  for (std::size_t x = 0; x < weights.size(); ++x)
    for (long long w : weights[x]) {
      if (w < 0) throw std::invalid_argument(fmt::format("from_weights: negative weight at x = {}", x));
      total += w;
    }
  if (total == 0) throw std::invalid_argument("from_weights: all weights are zero");
  std::vector<std::array<Rational, 2>> mass(weights.size());
  for (std::size_t x = 0; x < weights.size(); ++x)
    for (std::size_t y = 0; y < 2; ++y) mass[x][y] = Rational(weights[x][y]) / total;
  return TabularPopulation(std::move(mass));
}

TabularPopulation TabularPopulation::from_doubles(const std::vector<std::array<double, 2>>& mass) {
  Rational total = 0;
  std::vector<std::array<Rational, 2>> exact(mass.size());
  for (std::size_t x = 0; x < mass.size(); ++x)
    for (std::size_t y = 0; y < 2; ++y) {
      if (!(mass[x][y] >= 0.0) || !std::isfinite(mass[x][y]))
        throw std::invalid_argument(fmt::format("from_doubles: invalid mass at ({}, {})", x, y));
      exact[x][y] = Rational(mass[x][y]);
      total += exact[x][y];
    }
  if (abs(total - 1) > Rational(1, 1'000'000'000'000LL))
    throw std::invalid_argument(
        fmt::format("from_doubles: masses sum to {}, not 1 within 1e-12", to_double(total)));
  for (auto& row : exact)
    for (auto& m : row) m /= total;
  return TabularPopulation(std::move(exact));
}

void SignalPlan::validate(std::size_t domain_size) const {
  if (signal.size() != domain_size)
    throw std::invalid_argument(fmt::format("signal plan: g has {} entries, domain has {}",
                                            signal.size(), domain_size));
  for (std::size_t x = 0; x < signal.size(); ++x)
    if (signal[x] >= domain_size)
      throw std::invalid_argument(
          fmt::format("signal plan: g({}) = {} maps outside the domain", x, signal[x]));
  if (target_label != 0 && target_label != 1)
    throw std::invalid_argument("signal plan: target label must be 0 or 1");
  if (!(alpha > 0 && alpha <= 1))
    throw std::invalid_argument("signal plan: alpha must lie in (0, 1], got " + str(alpha));
}

Rational signal_density(const TabularPopulation& base, const SignalPlan& plan) {
  plan.validate(base.domain_size());
  const std::set<std::size_t> image(plan.signal.begin(), plan.signal.end());
  Rational xi = 0;
  for (std::size_t w : image) xi += base.marginal(w);
  return xi;
}

TabularPopulation mixture(const TabularPopulation& base, const SignalPlan& plan) {
  plan.validate(base.domain_size());
  const auto t = static_cast<std::size_t>(plan.target_label);
  std::vector<std::array<Rational, 2>> mass(base.domain_size());
  for (std::size_t x = 0; x < mass.size(); ++x)
    for (int y = 0; y < 2; ++y) mass[x][static_cast<std::size_t>(y)] = (1 - plan.alpha) * base.mass(x, y);
  for (std::size_t x = 0; x < mass.size(); ++x) mass[plan.signal[x]][t] += plan.alpha * base.marginal(x);
  return TabularPopulation(std::move(mass));
}

Classifier bayes_firm(const TabularPopulation& mixed, int target_label) {
  if (target_label != 0 && target_label != 1)
    throw std::invalid_argument("bayes_firm: target label must be 0 or 1");
  const int other = 1 - target_label;
  Classifier f;
  f.labels.resize(mixed.domain_size());
  for (std::size_t x = 0; x < mixed.domain_size(); ++x) {
    const Rational& pt = mixed.mass(x, target_label);
    const Rational& po = mixed.mass(x, other);
    if (pt + po == 0) {
      f.labels[x] = other;
      f.zero_mass_points.push_back(x);
    } else {
      f.labels[x] = pt > po ? target_label : other;
    }
  }
  return f;
}

Rational success_probability(const TabularPopulation& base, const SignalPlan& plan,
                             const Classifier& firm) {
  plan.validate(base.domain_size());
  if (firm.labels.size() != base.domain_size())
    throw std::invalid_argument("success_probability: classifier domain mismatch");
  Rational s = 0;
  for (std::size_t x = 0; x < base.domain_size(); ++x)
    if (firm(plan.signal[x]) == plan.target_label) s += base.marginal(x);
  return s;
}

Rational success_lower_bound(const Rational& alpha, const Rational& xi) {
  if (!(alpha > 0)) throw std::invalid_argument("success_lower_bound: alpha must be > 0");
  return 1 - ((1 - alpha) / alpha) * xi;
}

Rational revenue_uplift(const TabularPopulation& base, const SignalPlan& plan,
                        const Classifier& firm, const RevenueModel& revenue) {
  plan.validate(base.domain_size());
  if (plan.target_label != 1)
    throw std::invalid_argument("revenue_uplift: needs target label 1 (f = 1 means promotion)");
  if (revenue.noise_mean != 0) throw std::invalid_argument("revenue_uplift: noise Z must be mean-zero");
  if (revenue.baseline.size() != base.domain_size())
    throw std::invalid_argument("revenue_uplift: baseline h has the wrong size");
  for (std::size_t x = 0; x < base.domain_size(); ++x)
    if (revenue.baseline[plan.signal[x]] != revenue.baseline[x])
      throw std::invalid_argument(fmt::format(
          "revenue_uplift: baseline is not invariant under g at x = {} (h(g(x)) = {}, h(x) = {})", x,
          str(revenue.baseline[plan.signal[x]]), str(revenue.baseline[x])));
  // E[Y | C] with x ~ P0 transformed by g, minus E[h(X)] under P0.
  Rational with_signal = 0;
  Rational baseline = 0;
  for (std::size_t x = 0; x < base.domain_size(); ++x) {
    const Rational p = base.marginal(x);
    const std::size_t w = plan.signal[x];
    with_signal += p * (revenue.baseline[w] + revenue.beta_perf * firm(w) + revenue.noise_mean);
    baseline += p * revenue.baseline[x];
  }
  return with_signal - baseline;
}

std::size_t improving_flips(const TabularPopulation& mixed, const Classifier& firm) {
  if (firm.labels.size() != mixed.domain_size())
    throw std::invalid_argument("improving_flips: classifier domain mismatch");
  std::size_t n = 0;
  for (std::size_t x = 0; x < mixed.domain_size(); ++x) {
    const int f = firm(x);
    if (mixed.mass(x, 1 - f) > mixed.mass(x, f)) ++n;
  }
  return n;
}

Rational total_variation(const TabularPopulation& p, const TabularPopulation& q) {
  if (p.domain_size() != q.domain_size())
    throw std::invalid_argument("total_variation: domain mismatch");
  Rational tv = 0;
  for (std::size_t x = 0; x < p.domain_size(); ++x)
    for (int y = 0; y < 2; ++y) tv += abs(p.mass(x, y) - q.mass(x, y));
  return tv / 2;
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

}  // namespace perfpred::collective
