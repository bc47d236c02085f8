#include "perfpred/power.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

#include "perfpred/losses.hpp"

namespace perfpred::power {

Platform::Platform(std::vector<double> scores, std::vector<Viewer> viewers,
                   double perturbation_budget)
    : scores_(std::move(scores)), viewers_(std::move(viewers)), budget_(perturbation_budget) {
  if (scores_.size() < 2) throw std::invalid_argument("Platform: need at least 2 items");
  for (double s : scores_)
    if (!std::isfinite(s)) throw std::invalid_argument("Platform: scores must be finite");
  for (std::size_t u = 0; u < viewers_.size(); ++u) {
    const auto& v = viewers_[u];
    if (!(0.0 <= v.p2 && v.p2 <= v.p1 && v.p1 <= 1.0))
      throw std::invalid_argument(
          fmt::format("Platform: viewer {} needs 0 <= p2 <= p1 <= 1 (p1={}, p2={})", u, v.p1, v.p2));
    if (!v.affinity.empty() && v.affinity.size() != scores_.size())
      throw std::invalid_argument(fmt::format("Platform: viewer {} affinity size mismatch", u));
    for (double a : v.affinity)
      if (!(a >= 0.0) || !std::isfinite(a))
        throw std::invalid_argument(fmt::format("Platform: viewer {} affinity must be >= 0", u));
  }
  std::vector<double> sorted = scores_;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double max_gap = 0.0;
  for (std::size_t i = 1; i < sorted.size(); ++i) max_gap = std::max(max_gap, sorted[i - 1] - sorted[i]);
  if (!(budget_ > max_gap) || !std::isfinite(budget_))
    throw std::invalid_argument(fmt::format(
        "Platform: perturbation budget {} must exceed the largest adjacent score gap {}", budget_,
        max_gap));
}

std::pair<std::size_t, std::size_t> Platform::top_two(const std::vector<double>& scores) const {
  if (scores.size() != scores_.size()) throw std::invalid_argument("top_two: score size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + 2, idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  return {idx[0], idx[1]};
}

double Platform::affinity(std::size_t viewer, std::size_t item) const {
  const auto& a = viewers_.at(viewer).affinity;
  return a.empty() ? 1.0 : a.at(item);
}

double Platform::propensity(std::size_t viewer, std::size_t item,
                            const std::vector<double>& scores) const {
  const auto [first, second] = top_two(scores);
  const auto& v = viewers_.at(viewer);
  double p = 0.0;
  if (item == first) p = v.p1;
  else if (item == second) p = v.p2;
  return std::min(1.0, p * affinity(viewer, item));
}

void Platform::check_action(const Action& action) const {
  if (action.deltas.size() != scores_.size())
    throw std::invalid_argument(fmt::format("action '{}': expected {} deltas, got {}", action.name,
                                            scores_.size(), action.deltas.size()));
  for (double d : action.deltas)
    if (!(std::abs(d) <= budget_))
      throw std::invalid_argument(
          fmt::format("action '{}': delta {} exceeds the budget {}", action.name, d, budget_));
}

double Platform::outcome(std::size_t viewer, const Action& action) const {
  check_action(action);
  std::vector<double> perturbed = scores_;
  for (std::size_t i = 0; i < perturbed.size(); ++i) perturbed[i] += action.deltas[i];
  return propensity(viewer, top_two().first, perturbed);
}

Platform Platform::subpopulation(std::span<const std::size_t> viewers) const {
  if (viewers.empty()) throw std::invalid_argument("subpopulation: empty subpopulation");
  std::vector<bool> seen(viewers_.size(), false);
  std::vector<Viewer> sub;
  for (std::size_t u : viewers) {
    if (u >= viewers_.size())
      throw std::invalid_argument(fmt::format("subpopulation: viewer {} not in the population", u));
    if (seen[u]) throw std::invalid_argument(fmt::format("subpopulation: viewer {} listed twice", u));
    seen[u] = true;
    sub.push_back(viewers_[u]);
  }
  return Platform(scores_, std::move(sub), budget_);
}

Action identity_action(const Platform& platform) {
  return {"identity", std::vector<double>(platform.num_items(), 0.0)};
}

Action swap_top_two(const Platform& platform) {
  const auto [first, second] = platform.top_two();
  const double gap = platform.scores()[first] - platform.scores()[second];
  Action a{"swap", std::vector<double>(platform.num_items(), 0.0)};
  a.deltas[second] = gap + 0.5 * (platform.budget() - gap);
  return a;
}

Action demote_first(const Platform& platform) {
  if (platform.num_items() < 3)
    throw std::invalid_argument("demote_first: needs a third item to take the freed slot");
  std::vector<std::size_t> idx(platform.num_items());
  std::iota(idx.begin(), idx.end(), 0);
  const auto& s = platform.scores();
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s[a] > s[b] || (s[a] == s[b] && a < b);
  });
  const double drop = s[idx[0]] - s[idx[2]];
  if (!(drop < platform.budget()))
    throw std::invalid_argument("demote_first: budget too small to move the first item below the third");
  Action a{"demote", std::vector<double>(platform.num_items(), 0.0)};
  a.deltas[idx[0]] = -(drop + 0.5 * (platform.budget() - drop));
  return a;
}

std::vector<Action> default_probes(const Platform& platform) {
  std::vector<Action> probes{identity_action(platform), swap_top_two(platform)};
  try {
    probes.push_back(demote_first(platform));
  } catch (const std::invalid_argument&) {
  }
  return probes;
}

PositionEffect causal_effect_of_position(const Platform& platform, std::size_t mc_draws,
                                         Stream* stream) {
  if (platform.num_viewers() == 0)
    throw std::invalid_argument("causal_effect_of_position: empty population");
  const Action control = identity_action(platform);
  const Action treat = swap_top_two(platform);
  double sum = 0.0;
  for (std::size_t u = 0; u < platform.num_viewers(); ++u)
    sum += platform.outcome(u, treat) - platform.outcome(u, control);
  PositionEffect e;
  e.beta = std::abs(sum / static_cast<double>(platform.num_viewers()));

  if (mc_draws > 0) {
    if (!stream) throw std::invalid_argument("causal_effect_of_position: Monte-Carlo needs a stream");
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (std::size_t u = 0; u < platform.num_viewers(); ++u) {
      const double p1 = platform.outcome(u, treat);
      const double p0 = platform.outcome(u, control);
      for (std::size_t i = 0; i < mc_draws; ++i) {
        const double diff = (stream->bernoulli(p1) ? 1.0 : 0.0) - (stream->bernoulli(p0) ? 1.0 : 0.0);
        ++n;
        const double d = diff - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (diff - mean);
      }
    }
    e.mc_beta = std::abs(mean);
    e.mc_std_error = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
  return e;
}

PowerReport performative_power_lower_bound(const Platform& platform,
                                           std::span<const Action> probes) {
  if (probes.empty()) throw std::invalid_argument("performative_power_lower_bound: empty probe set");
  if (platform.num_viewers() == 0)
    throw std::invalid_argument("performative_power_lower_bound: empty population");
  const Action base = identity_action(platform);
  PowerReport r;
  for (const auto& a : probes) {
    double sum = 0.0;
    for (std::size_t u = 0; u < platform.num_viewers(); ++u)
      sum += std::abs(platform.outcome(u, base) - platform.outcome(u, a));
    r.per_action.push_back(sum / static_cast<double>(platform.num_viewers()));
  }
  const auto it = std::max_element(r.per_action.begin(), r.per_action.end());
  r.argmax = static_cast<std::size_t>(it - r.per_action.begin());
  r.power = *it;
  return r;
}

double traffic_steering_calculator(double effect_first_pos, double second_pos_discount,
                                   double platform_share, double top_two_share) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  // Each input is read as the decimal it prints as, the product is exact and
  // rounded once, so the result does not depend on argument order.
  auto as_decimal = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument(fmt::format("traffic_steering_calculator: {} = {} not in [0, 1]", name, v));
    const std::string text = fmt::format("{}", v);
    std::string digits;
    int exponent = 0;
    const auto e_pos = text.find_first_of("eE");
    std::string mantissa = text.substr(0, e_pos);
    if (e_pos != std::string::npos) exponent = std::stoi(text.substr(e_pos + 1));
    const auto dot = mantissa.find('.');
    if (dot != std::string::npos) {
      exponent -= static_cast<int>(mantissa.size() - dot - 1);
      mantissa.erase(dot, 1);
    }
    const cpp_rational r{cpp_int(std::stoull(mantissa))};
    cpp_int scale = 1;
    for (int i = 0; i < std::abs(exponent); ++i) scale *= 10;
    return exponent >= 0 ? cpp_rational(r * scale) : cpp_rational(r / scale);
  };
  const cpp_rational product = as_decimal(platform_share, "platform_share") *
                               as_decimal(top_two_share, "top_two_share") *
                               as_decimal(second_pos_discount, "second_pos_discount") *
                               as_decimal(effect_first_pos, "effect_first_pos");
  return product.convert_to<double>();
}

DecompositionResult decomposition_check(const Platform& platform,
                                        std::span<const std::size_t> subpopulation,
                                        std::span<const Action> probes) {
  const Platform sub = platform.subpopulation(subpopulation);
  DecompositionResult r;
  r.power_full = performative_power_lower_bound(platform, probes).power;
  r.power_sub = performative_power_lower_bound(sub, probes).power;
  r.alpha = static_cast<double>(sub.num_viewers()) / static_cast<double>(platform.num_viewers());
  r.holds = r.power_full + 1e-12 >= r.alpha * r.power_sub;
  return r;
}

DecompositionResult decomposition_check(const Platform& platform, double alpha_pop,
                                        std::span<const Action> probes) {
  if (!(alpha_pop > 0.0 && alpha_pop <= 1.0))
    throw std::invalid_argument("decomposition_check: fraction must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(
      std::ceil(alpha_pop * static_cast<double>(platform.num_viewers()) - 1e-9));
  if (n == 0) throw std::invalid_argument("decomposition_check: empty subpopulation");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return decomposition_check(platform, idx, probes);
}

SteeringDiagnostic steering_diagnostic(const LossModel& loss, const LocationScaleMap& map,
                                       const ParamPoint& phi, const ParamSet& theta_set) {
  if (theta_set.kind() != ParamSet::Kind::box)
    throw std::invalid_argument("steering_diagnostic: needs a box parameter set");
  const auto certs = equilibrium_certificates(map, loss);
  if (!certs || !certs->theta_po)
    throw std::invalid_argument("steering_diagnostic: needs a closed-form family with a performative optimum");
  const Index d = theta_set.dim();
  if (d > 20) throw std::invalid_argument("steering_diagnostic: too many box vertices");
  SteeringDiagnostic r;
  r.steering_benefit = certs->pr_exact(certs->best_response(phi)) - certs->pr_exact(*certs->theta_po);
  // Coupled through the base draw z_theta - z_phi = mu (theta - phi); the
  // norm is convex, so the sup over the box sits at a vertex.
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    ParamPoint v(d);
    for (Index i = 0; i < d; ++i)
      v[i] = (mask >> i) & 1 ? theta_set.upper()[i] : theta_set.lower()[i];
    r.power = std::max(r.power, (map.mu() * (v - phi)).norm());
  }
  r.lipschitz_factor = certify_constants(loss, map, theta_set).require_lipschitz_z();
  r.within_bound = r.steering_benefit < r.lipschitz_factor * r.power;
  return r;
}

}  // namespace perfpred::power
