#include "perfpred/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace perfpred::bandit {

ArmGrid ArmGrid::uniform(const ParamSet& box, double h) {
  if (box.kind() != ParamSet::Kind::box)
    throw std::invalid_argument("ArmGrid::uniform: needs a box parameter set");
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("ArmGrid: spacing must be > 0");
  const Index d = box.dim();
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
  double spacing = 0.0;
  std::size_t total = 1;
  for (Index i = 0; i < d; ++i) {
    const double lo = box.lower()[i];
    const double hi = box.upper()[i];
    auto& axis = axes[static_cast<std::size_t>(i)];
    if (hi == lo) {
      axis.push_back(lo);
      continue;
    }
    const auto cells = static_cast<std::size_t>(std::ceil((hi - lo) / h - 1e-9));
    for (std::size_t j = 0; j <= cells; ++j)
      axis.push_back(j == cells ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(cells));
    spacing = std::max(spacing, (hi - lo) / static_cast<double>(cells));
    total *= axis.size();
    if (total > 10'000'000) throw std::invalid_argument("ArmGrid: more than 1e7 arms");
  }
  ArmGrid grid;
  grid.spacing = spacing > 0.0 ? spacing : h;
  std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
  for (;;) {
    ParamPoint p(d);
    for (Index i = 0; i < d; ++i) p[i] = axes[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    grid.arms.push_back(std::move(p));
    Index i = d - 1;
    while (i >= 0) {
      auto& j = idx[static_cast<std::size_t>(i)];
      if (++j < axes[static_cast<std::size_t>(i)].size()) break;
      j = 0;
      --i;
    }
    if (i < 0) break;
  }
  return grid;
}

ArmGrid ArmGrid::from_points(std::vector<ParamPoint> arms, double spacing) {
  if (arms.empty()) throw std::invalid_argument("ArmGrid: no arms");
  if (!(spacing > 0.0)) throw std::invalid_argument("ArmGrid: spacing must be > 0");
  for (const auto& a : arms)
    if (a.size() != arms.front().size()) throw std::invalid_argument("ArmGrid: mixed dimensions");
  return {std::move(arms), spacing};
}

double confidence_radius(std::size_t n, const BoundConstants& c) {
  if (n == 0) return 0.0;
  const double log_term = std::log(2.0 * static_cast<double>(c.horizon) *
                                   static_cast<double>(c.num_arms) / c.delta_conf);
  return c.loss_range * std::sqrt(log_term / (2.0 * static_cast<double>(n)));
}

namespace {

double risk_at(const LossModel& loss, const ParamPoint& arm, const Deployment& dep,
               const EquilibriumCertificates* certs) {
  if (dep.batch.empty()) {
    if (!certs) throw std::invalid_argument("exact-risk deployment without certificates");
    return certs->risk_exact(arm, dep.theta);
  }
  return risk(loss, arm, dep.batch);
}

// One deployment's contribution to the upper and lower bound of `arm`.
std::pair<double, double> bound_terms(const LossModel& loss, const ParamPoint& arm,
                                      const Deployment& dep, const BoundConstants& c,
                                      const EquilibriumCertificates* certs) {
  const double r = risk_at(loss, arm, dep, certs);
  const double slack = c.lipschitz_z * c.epsilon * (arm - dep.theta).norm() +
                       confidence_radius(dep.batch.size(), c);
  return {r + slack, r - slack};
}

}  // namespace

double performative_ucb(const LossModel& loss, const ParamPoint& arm,
                        std::span<const Deployment> history, const BoundConstants& c,
                        const EquilibriumCertificates* certificates) {
  if (history.empty()) throw std::invalid_argument("performative_ucb: empty history");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& dep : history) best = std::min(best, bound_terms(loss, arm, dep, c, certificates).first);
  return best;
}

double performative_lcb(const LossModel& loss, const ParamPoint& arm,
                        std::span<const Deployment> history, const BoundConstants& c,
                        const EquilibriumCertificates* certificates) {
  if (history.empty()) throw std::invalid_argument("performative_lcb: empty history");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& dep : history) best = std::max(best, bound_terms(loss, arm, dep, c, certificates).second);
  return best;
}

namespace {

std::vector<double> grid_pr(const LossModel& loss, const DistributionMap& map, const ArmGrid& grid,
                            const std::optional<EquilibriumCertificates>& certs,
                            std::size_t pr_samples, Stream& stream) {
  std::vector<double> pr(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (certs) {
      pr[i] = certs->pr_exact(grid.arms[i]);
    } else {
      Stream s = stream.child(i);
      pr[i] = risk(loss, grid.arms[i], map.sample(grid.arms[i], pr_samples, s));
    }
  }
  return pr;
}

}  // namespace

std::pair<std::size_t, double> brute_force_po(std::span<const double> pr_values) {
  if (pr_values.empty()) throw std::invalid_argument("brute_force_po: empty grid");
  const auto it = std::min_element(pr_values.begin(), pr_values.end());
  return {static_cast<std::size_t>(it - pr_values.begin()), *it};
}

std::pair<std::size_t, double> brute_force_po(const LossModel& loss, const DistributionMap& map,
                                              const ArmGrid& grid, std::size_t pr_samples,
                                              Stream& stream) {
  const auto pr = grid_pr(loss, map, grid, equilibrium_certificates(map, loss), pr_samples, stream);
  return brute_force_po(pr);
}

EliminationResult successive_elimination(const LossModel& loss, const DistributionMap& map,
                                         const ArmGrid& grid, const BoundConstants& constants,
                                         const EliminationConfig& config) {
  if (grid.size() == 0) throw std::invalid_argument("successive_elimination: empty grid");
  if (config.horizon < 1) throw std::invalid_argument("successive_elimination: horizon must be >= 1");
  if (!(config.delta_conf > 0.0 && config.delta_conf < 1.0))
    throw std::invalid_argument("successive_elimination: delta_conf must lie in (0, 1)");
  const auto certs = equilibrium_certificates(map, loss);
  if (config.batch_size == 0 && !certs)
    throw std::invalid_argument(
        "successive_elimination: batch_size 0 selects the exact-risk path, which needs a closed form");
  const EquilibriumCertificates* cert_ptr = certs ? &*certs : nullptr;

  const std::size_t k_arms = grid.size();
  Stream root(config.seed);
  Stream pr_stream = root.child(0x5052);
  Stream draws = root.child(1);

  EliminationResult res;
  res.trace = Trace(config.seed, {});
  res.short_horizon = config.horizon < k_arms;
  auto& meta = res.trace.meta();
  meta["solver"] = "successive_elimination";
  meta["eval_path"] = std::string(to_string(config.batch_size == 0 ? EvalPath::exact : EvalPath::monte_carlo));
  meta["pr_path"] = std::string(to_string(certs ? EvalPath::exact : EvalPath::monte_carlo));
  meta["num_arms"] = k_arms;
  meta["spacing"] = grid.spacing;
  if (res.short_horizon) meta["warning"] = "horizon shorter than the number of arms";

  const std::vector<double> pr = grid_pr(loss, map, grid, certs, config.pr_samples, pr_stream);
  std::tie(res.best_arm, res.best_pr) = brute_force_po(pr);

  res.active.assign(k_arms, true);
  res.upper.assign(k_arms, std::numeric_limits<double>::infinity());
  res.lower.assign(k_arms, -std::numeric_limits<double>::infinity());

  std::size_t cursor = 0;
  std::size_t samples = 0;
  double regret = 0.0;
  std::optional<ParamPoint> po;
  if (certs && certs->theta_po) po = certs->theta_po;

  for (std::size_t t = 1; t <= config.horizon; ++t) {
    while (!res.active[cursor]) cursor = (cursor + 1) % k_arms;
    const std::size_t arm = cursor;
    cursor = (cursor + 1) % k_arms;

    Deployment dep{grid.arms[arm], {}};
    if (config.batch_size > 0) {
      dep.batch = map.sample(dep.theta, config.batch_size, draws);
      samples += config.batch_size;
    }

    // Bounds are a running min / max over the history, so one pass over the
    // new deployment updates them.
    for (std::size_t i = 0; i < k_arms; ++i) {
      if (!res.active[i]) continue;
      const auto [up, lo] = bound_terms(loss, grid.arms[i], dep, constants, cert_ptr);
      res.upper[i] = std::min(res.upper[i], up);
      res.lower[i] = std::max(res.lower[i], lo);
    }

    if (certs) {
      for (std::size_t i = 0; i < k_arms; ++i) {
        if (res.active[i] && res.upper[i] < pr[i] - 1e-12) {
          ++res.ucb_violations;
          break;
        }
      }
    }

    double min_upper = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k_arms; ++i)
      if (res.active[i]) min_upper = std::min(min_upper, res.upper[i]);
    const std::vector<bool> before = res.active;
    for (std::size_t i = 0; i < k_arms; ++i) {
      if (!before[i] || !(res.lower[i] > min_upper)) continue;
      res.active[i] = false;
      // Independent witness: some arm active this round has a smaller upper bound.
      bool witnessed = false;
      for (std::size_t j = 0; j < k_arms && !witnessed; ++j)
        witnessed = before[j] && res.upper[j] < res.lower[i];
      if (!witnessed) ++res.unsound_eliminations;
      if (i == res.best_arm) res.best_arm_eliminated = true;
    }

    regret += pr[arm] - res.best_pr;
    res.regret.push_back({t, arm, pr[arm], regret});

    TraceRecord r;
    r.k = t;
    r.theta = dep.theta;
    r.deployments = t;
    r.samples = samples;
    r.pr_est = pr[arm];
    if (po) r.dist_po = (dep.theta - *po).norm();
    res.trace.append(std::move(r));
  }
  meta["active_at_end"] = std::count(res.active.begin(), res.active.end(), true);
  meta["best_arm"] = res.best_arm;
  meta["ucb_violations"] = res.ucb_violations;
  return res;
}

std::vector<RegretRow> uniform_random_regret(std::span<const double> pr_values,
                                             std::size_t horizon, Stream& stream) {
  const auto [best, best_pr] = brute_force_po(pr_values);
  (void)best;
  std::vector<RegretRow> rows;
  rows.reserve(horizon);
  double regret = 0.0;
  for (std::size_t t = 1; t <= horizon; ++t) {
    const std::size_t arm = stream.index(pr_values.size());
    regret += pr_values[arm] - best_pr;
    rows.push_back({t, arm, pr_values[arm], regret});
  }
  return rows;
}

void write_regret_csv(std::ostream& out, std::span<const RegretRow> rows) {
  out << "t,arm_index,pr_deployed,regret_cum\n";
  for (const auto& r : rows)
    out << r.t << ',' << r.arm_index << ',' << format_real(r.pr_deployed) << ','
        << format_real(r.regret_cum) << '\n';
}

}  // namespace perfpred::bandit
