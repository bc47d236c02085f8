#include "perfpred/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "perfpred/losses.hpp"

namespace perfpred {

std::string_view to_string(SolverKind kind) noexcept {
  switch (kind) {
    case SolverKind::rrm: return "rrm";
    case SolverKind::rgd: return "rgd";
    case SolverKind::sgd_greedy: return "sgd_greedy";
    case SolverKind::sgd_lazy: return "sgd_lazy";
    case SolverKind::zeroth_order: return "zeroth_order";
    case SolverKind::gms_bisect: return "gms_bisect";
  }
  return "?";
}

SolverKind solver_kind_from_string(std::string_view name) {
  for (auto k : {SolverKind::rrm, SolverKind::rgd, SolverKind::sgd_greedy, SolverKind::sgd_lazy,
                 SolverKind::zeroth_order, SolverKind::gms_bisect})
    if (to_string(k) == name) return k;
  throw std::invalid_argument(fmt::format("unknown solver kind '{}'", name));
}

std::string_view to_string(StepsizePolicy policy) noexcept {
  switch (policy) {
    case StepsizePolicy::constant: return "constant";
    case StepsizePolicy::certified: return "certified";
    case StepsizePolicy::inverse_k: return "inverse_k";
  }
  return "?";
}

StepsizePolicy stepsize_policy_from_string(std::string_view name) {
  for (auto p : {StepsizePolicy::constant, StepsizePolicy::certified, StepsizePolicy::inverse_k})
    if (to_string(p) == name) return p;
  throw std::invalid_argument(fmt::format("unknown stepsize policy '{}'", name));
}

void SolverConfig::validate() const {
  if (max_steps < 1) throw std::invalid_argument("solver: max_steps must be >= 1");
  if (kind == SolverKind::sgd_lazy && !(lazy_alpha > 0.0))
    throw std::invalid_argument("solver: lazy_alpha must be > 0");
  if (kind == SolverKind::sgd_lazy && !(lazy_scale > 0.0))
    throw std::invalid_argument("solver: lazy_scale must be > 0");
  if (stepsize != StepsizePolicy::certified && !(step > 0.0 && std::isfinite(step)))
    throw std::invalid_argument("solver: step must be finite and > 0");
  if (stepsize == StepsizePolicy::certified && kind != SolverKind::sgd_greedy &&
      kind != SolverKind::rgd)
    throw std::invalid_argument(fmt::format(
        "solver: stepsize policy 'certified' does not apply to '{}'", to_string(kind)));
  if (!(inner_tol > 0.0)) throw std::invalid_argument("solver: inner_tol must be > 0");
  if (inner_max_iter < 1) throw std::invalid_argument("solver: inner_max_iter must be >= 1");
  if (record_every < 1) throw std::invalid_argument("solver: record_every must be >= 1");
  if (!(zo_radius >= 0.0)) throw std::invalid_argument("solver: zo_radius must be >= 0");
  if (zo_streak < 1) throw std::invalid_argument("solver: zo_streak must be >= 1");
  if (kind == SolverKind::zeroth_order && !theta_set.bounded())
    throw std::invalid_argument("solver: zeroth_order needs a bounded theta_set");
}

// ---- certified SGD stepsize and bound ---------------------------------------------

namespace {

double certified_gap(const RegularityConstants& c) {
  const double g = c.gamma - c.epsilon * c.beta_z;
  if (!(g > 0.0))
    throw std::domain_error(fmt::format(
        "SGD convergence needs epsilon * beta_z < gamma (got eps={}, beta_z={}, gamma={})", c.epsilon,
        c.beta_z, c.gamma));
  return g;
}

}  // namespace

double certified_stepsize(const RegularityConstants& c, std::size_t k) {
  if (k < 1) throw std::invalid_argument("certified_stepsize: k must be >= 1");
  const double g = certified_gap(c);
  const double l = c.require_variance_l();
  return 1.0 / (g * static_cast<double>(k) + 8.0 * l * l / g);
}

double certified_m(const RegularityConstants& c, double initial_dist) {
  const double s = c.require_sigma();
  const double l = c.require_variance_l();
  return std::max(2.0 * s * s, 8.0 * l * l * initial_dist * initial_dist);
}

double certified_bound(const RegularityConstants& c, double initial_dist, std::size_t k,
                      double beta) {
  const double g = certified_gap(c);
  return certified_m(c, initial_dist) / (g * g * static_cast<double>(k) + 8.0 * beta * beta);
}

// ---- inner minimization -------------------------------------------------------------

namespace {

struct Objective {
  std::function<double(const ParamPoint&)> value;
  std::function<Vector(const ParamPoint&)> grad;
  std::function<Matrix(const ParamPoint&)> hessian;
};

ParamPoint minimize(const Objective& f, const ParamPoint& start, const ParamSet& set, double tol,
                    std::size_t max_iter) {
  ParamPoint theta = start;
  bool converged = false;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector g = f.grad(theta);
    if (!g.allFinite()) throw InnerSolverError("inner solver: nonfinite gradient", theta);
    if (g.norm() <= tol) {
      converged = true;
      break;
    }
    const Matrix h = f.hessian(theta);
    const Vector p = -h.ldlt().solve(g);
    if (!p.allFinite() || p.dot(g) >= 0.0) throw InnerSolverError("inner solver: Hessian not positive definite", theta);
    const double f0 = f.value(theta);
    double t = 1.0;
    ParamPoint next = theta + p;
    while (f.value(next) > f0 + 1e-4 * t * g.dot(p) && t > 1e-12) {
      t *= 0.5;
      next = theta + t * p;
    }
    if ((next - theta).norm() <= 1e-15 * (1.0 + theta.norm())) {
      theta = next;
      converged = true;
      break;
    }
    theta = next;
  }
  if (!converged) throw InnerSolverError("inner solver: Newton did not converge", theta);
  if (set.contains(theta, 1e-12)) return set.project(theta);

  // Constrained: projected gradient with Armijo backtracking.
  theta = set.project(start);
  double step = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector g = f.grad(theta);
    const double f0 = f.value(theta);
    ParamPoint next;
    for (;;) {
      next = set.project(theta - step * g);
      const Vector d = next - theta;
      if (f.value(next) <= f0 + g.dot(d) + d.squaredNorm() / (2.0 * step) || step < 1e-14) break;
      step *= 0.5;
    }
    const double mapping = (next - theta).norm() / step;
    theta = next;
    if (mapping <= tol) return theta;
    step = std::min(1.0, step * 2.0);
  }
  throw InnerSolverError("inner solver: projected gradient did not converge", theta);
}

Objective empirical_objective(const LossModel& loss, std::span<const DataPoint> samples) {
  const double inv = 1.0 / static_cast<double>(samples.size());
  Objective f;
  f.value = [&loss, samples](const ParamPoint& t) { return risk(loss, t, samples); };
  f.grad = [&loss, samples, inv](const ParamPoint& t) {
    Vector g = Vector::Zero(t.size());
    for (const auto& z : samples) g += loss.grad(t, z);
    return Vector(g * inv);
  };
  f.hessian = [&loss, samples, inv](const ParamPoint& t) {
    Matrix h = Matrix::Zero(t.size(), t.size());
    for (const auto& z : samples) h += loss.hessian(t, z);
    return Matrix(h * inv);
  };
  return f;
}

}  // namespace

ParamPoint empirical_argmin(const LossModel& loss, std::span<const DataPoint> samples,
                            const ParamPoint& start, const ParamSet& theta_set, double tol,
                            std::size_t max_iter) {
  if (samples.empty()) throw std::invalid_argument("no data");
  return minimize(empirical_objective(loss, samples), start, theta_set, tol, max_iter);
}

// ---- shared run state -------------------------------------------------------------------

namespace {

// Records iterates with PR (exact or Monte-Carlo) and distances to oracles.
class Recorder {
 public:
  Recorder(const LossModel& loss, const DistributionMap& map, const SolverConfig& config)
      : loss_(loss),
        map_(map),
        config_(config),
        certs_(equilibrium_certificates(map, loss)),
        trace_(config.seed, {}),
        pr_stream_(Stream(config.seed).child(0x5052)) {
    if (loss.dim() != map.param_dim())
      throw std::invalid_argument("solver: loss and map parameter dimensions differ");
    if (config.theta_set.dim() != loss.dim())
      throw std::invalid_argument("solver: theta_set dimension mismatch");
    auto& meta = trace_.meta();
    meta["solver"] = std::string(to_string(config.kind));
    meta["eval_path"] = std::string(to_string(certs_ ? EvalPath::exact : EvalPath::monte_carlo));
    if (certs_) {
      if (certs_->theta_ps && config.theta_set.contains(*certs_->theta_ps, 1e-12))
        ps_ = certs_->theta_ps;
      if (certs_->theta_po && config.theta_set.contains(*certs_->theta_po, 1e-12))
        po_ = certs_->theta_po;
      if (certs_->theta_ps) meta["theta_ps"] = std::vector<double>(certs_->theta_ps->begin(), certs_->theta_ps->end());
      if (certs_->theta_po) meta["theta_po"] = std::vector<double>(certs_->theta_po->begin(), certs_->theta_po->end());
    }
  }

  const std::optional<EquilibriumCertificates>& certs() const { return certs_; }
  const std::optional<ParamPoint>& theta_ps() const { return ps_; }
  Trace& trace() { return trace_; }

  bool due(std::size_t k, bool last) const {
    return last || k == 0 || k % config_.record_every == 0;
  }

  void record(std::size_t k, const ParamPoint& theta, std::size_t deployments,
              std::size_t samples, const std::optional<Vector>& error_ps = std::nullopt) {
    if (!theta.allFinite())
      throw DivergenceError(fmt::format("divergence: nonfinite iterate at step {}", k), last_);
    TraceRecord r;
    r.k = k;
    r.theta = theta;
    r.deployments = deployments;
    r.samples = samples;
    if (certs_) {
      r.pr_est = certs_->pr_exact(theta);
      r.pr_se = 0.0;
    } else {
      Stream s = pr_stream_.child(k);
      const Estimate e = risk_estimate(loss_, theta, map_.sample(theta, config_.pr_samples, s));
      r.pr_est = e.value;
      r.pr_se = e.std_error;
    }
    if (!std::isfinite(r.pr_est))
      throw DivergenceError(fmt::format("divergence: nonfinite risk at step {}", k), last_);
    if (ps_) {
      const double direct = (theta - *ps_).norm();
      if (error_ps) {
        r.dist_ps = error_ps->norm();
        trace_.add_diagnostic("dist_ps_direct", direct);
      } else {
        r.dist_ps = direct;
      }
    }
    if (po_) r.dist_po = (theta - *po_).norm();
    trace_.append(std::move(r));
    last_ = theta;
  }

  void check_finite(std::size_t k, const ParamPoint& theta) const {
    if (!theta.allFinite())
      throw DivergenceError(fmt::format("divergence: nonfinite iterate at step {}", k), last_);
  }

 private:
  const LossModel& loss_;
  const DistributionMap& map_;
  const SolverConfig& config_;
  std::optional<EquilibriumCertificates> certs_;
  std::optional<ParamPoint> ps_, po_;
  Trace trace_;
  Stream pr_stream_;
  ParamPoint last_;
};

std::optional<RegularityConstants> try_constants(const LossModel& loss, const DistributionMap& map,
                                                 const ParamSet& set) {
  try {
    return certify_constants(loss, map, set);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void write_constants(nlohmann::json& meta, const RegularityConstants& c) {
  nlohmann::json j;
  j["gamma"] = c.gamma;
  j["beta_z"] = c.beta_z;
  j["epsilon"] = c.epsilon;
  if (c.beta_theta) j["beta_theta"] = *c.beta_theta;
  if (c.lipschitz_z) j["lipschitz_z"] = *c.lipschitz_z;
  if (c.sigma) j["sigma"] = *c.sigma;
  if (c.variance_l) j["L"] = *c.variance_l;
  j["contractive"] = c.contractive();
  j["missing"] = c.missing;
  meta["constants"] = j;
}

// Checks the SGD convergence hypotheses; throws in strict mode, flags otherwise.
RegularityConstants stochastic_constants(const LossModel& loss, const DistributionMap& map,
                                         const SolverConfig& config, nlohmann::json& meta) {
  RegularityConstants c = certify_constants(loss, map, config.theta_set);
  write_constants(meta, c);
  if (!c.contractive()) {
    if (config.strict)
      throw std::domain_error(fmt::format(
          "{}: constants are not contractive (eps * beta_z = {} >= gamma = {}); "
          "disable strict to run anyway",
          to_string(config.kind), c.epsilon * c.beta_z, c.gamma));
    meta["warning"] = "non-contractive constants; convergence guarantees do not apply";
  }
  return c;
}

double stepsize(const SolverConfig& config, const RegularityConstants* c, std::size_t k) {
  switch (config.stepsize) {
    case StepsizePolicy::constant: return config.step;
    case StepsizePolicy::inverse_k: return config.step / static_cast<double>(k);
    case StepsizePolicy::certified:
      if (!c) throw std::domain_error("certified stepsize needs certified constants");
      return certified_stepsize(*c, k);
  }
  return config.step;
}

bool budget_spent(const SolverConfig& config, std::size_t samples) {
  return config.max_samples > 0 && samples >= config.max_samples;
}

Vector mean_gradient(const LossModel& loss, const ParamPoint& theta,
                     std::span<const DataPoint> batch) {
  Vector g = Vector::Zero(theta.size());
  for (const auto& z : batch) g += loss.grad(theta, z);
  return g / static_cast<double>(batch.size());
}

}  // namespace

// ---- RRM ------------------------------------------------------------------------------

Trace rrm(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
          const SolverConfig& config) {
  config.validate();
  Recorder rec(loss, map, config);
  if (auto c = try_constants(loss, map, config.theta_set)) write_constants(rec.trace().meta(), *c);
  const bool exact = rec.certs() && config.batch_size == 0;
  const std::size_t n = config.batch_size > 0 ? config.batch_size : config.pr_samples;
  rec.trace().meta()["inner"] = exact ? "closed_form" : "damped_newton";
  Stream draws = Stream(config.seed).child(1);

  ParamPoint theta = config.theta_set.project(theta0);
  std::size_t samples = 0;
  // On the closed-form path G is affine, so theta_k - theta_PS is carried in
  // deviation coordinates (e <- J e); subtracting two nearly equal iterates
  // would lose all relative precision once the error falls below ~1e-8.
  std::optional<Vector> error;
  if (exact && rec.theta_ps()) {
    error = theta - *rec.theta_ps();
    rec.trace().meta()["dist_ps_path"] = "deviation";
  }
  rec.record(0, theta, 0, 0, error);
  for (std::size_t k = 1; k <= config.max_steps; ++k) {
    ParamPoint next;
    if (exact) {
      next = rec.certs()->best_response(theta);
      if (error) error = Vector(rec.certs()->best_response_jacobian * *error);
      if (!config.theta_set.contains(next)) {
        error.reset();
        const auto& cert = *rec.certs();
        const ParamPoint phi = theta;
        Objective f;
        f.value = [&cert, phi](const ParamPoint& t) { return cert.risk_exact(t, phi); };
        f.grad = [&cert, phi](const ParamPoint& t) { return cert.mean_grad(t, phi); };
        const Index d = theta.size();
        f.hessian = [&cert, phi, d](const ParamPoint& t) {
          // mean_grad is affine in theta; recover its Jacobian column by column.
          Matrix h(d, d);
          const Vector g0 = cert.mean_grad(t, phi);
          for (Index i = 0; i < d; ++i) {
            ParamPoint e = t;
            e[i] += 1.0;
            h.col(i) = cert.mean_grad(e, phi) - g0;
          }
          return h;
        };
        if (next.allFinite())
          next = minimize(f, theta, config.theta_set, config.inner_tol, config.inner_max_iter);
      }
    } else {
      const auto batch = map.sample(theta, n, draws);
      samples += n;
      next = empirical_argmin(loss, batch, theta, config.theta_set, config.inner_tol,
                              config.inner_max_iter);
    }
    rec.check_finite(k, next);
    theta = std::move(next);
    const bool last = k == config.max_steps || budget_spent(config, samples);
    if (rec.due(k, last)) rec.record(k, theta, k, samples, error);
    if (last) break;
  }
  return std::move(rec.trace());
}

// ---- RGD ------------------------------------------------------------------------------

Trace rgd(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
          const SolverConfig& config) {
  config.validate();
  Recorder rec(loss, map, config);
  const auto constants = try_constants(loss, map, config.theta_set);
  if (constants) write_constants(rec.trace().meta(), *constants);
  const bool exact = rec.certs() && config.batch_size == 0;
  const std::size_t n = config.batch_size > 0 ? config.batch_size : config.pr_samples;
  Stream draws = Stream(config.seed).child(1);

  ParamPoint theta = config.theta_set.project(theta0);
  std::size_t samples = 0;
  rec.record(0, theta, 0, 0);
  for (std::size_t k = 1; k <= config.max_steps; ++k) {
    Vector g;
    if (exact) {
      g = rec.certs()->mean_grad(theta, theta);
      // Bias of the current gradient field against the stable one, and their angle.
      if (const auto& ps = rec.certs()->theta_ps) {
        const Vector g_ps = rec.certs()->mean_grad(theta, *ps);
        rec.trace().add_diagnostic("bias", (g - g_ps).norm());
        if (constants)
          rec.trace().add_diagnostic("bias_bound",
                                     constants->epsilon * constants->beta_z * (theta - *ps).norm());
        rec.trace().add_diagnostic("inner_product", g.dot(g_ps));
        rec.trace().add_diagnostic("g_ps_norm", g_ps.norm());
      }
    } else {
      const auto batch = map.sample(theta, n, draws);
      samples += n;
      g = mean_gradient(loss, theta, batch);
    }
    ParamPoint next = config.theta_set.project(
        theta - stepsize(config, constants ? &*constants : nullptr, k) * g);
    rec.check_finite(k, next);
    theta = std::move(next);
    const bool last = k == config.max_steps || budget_spent(config, samples);
    if (rec.due(k, last)) rec.record(k, theta, k, samples);
    if (last) break;
  }
  return std::move(rec.trace());
}

// ---- SGD ------------------------------------------------------------------------------

Trace sgd_greedy(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
                 const SolverConfig& config) {
  config.validate();
  Recorder rec(loss, map, config);
  const RegularityConstants c = stochastic_constants(loss, map, config, rec.trace().meta());
  Stream draws = Stream(config.seed).child(1);

  ParamPoint theta = config.theta_set.project(theta0);
  if (config.stepsize == StepsizePolicy::certified && rec.certs() && rec.certs()->theta_ps &&
      c.sigma && c.variance_l && c.contractive()) {
    const double d1 = (theta - *rec.certs()->theta_ps).norm();
    auto& t2 = rec.trace().meta()["certified"];
    t2["M"] = certified_m(c, d1);
    t2["gap"] = c.gamma - c.epsilon * c.beta_z;
    t2["beta_z"] = c.beta_z;
    t2["beta_max"] = c.beta_max();
  }
  rec.record(0, theta, 0, 0);
  for (std::size_t k = 1; k <= config.max_steps; ++k) {
    const auto z = map.sample(theta, 1, draws);
    ParamPoint next = config.theta_set.project(theta - stepsize(config, &c, k) * loss.grad(theta, z[0]));
    rec.check_finite(k, next);
    theta = std::move(next);
    const bool last = k == config.max_steps || budget_spent(config, k);
    if (rec.due(k, last)) rec.record(k, theta, k, k);
    if (last) break;
  }
  return std::move(rec.trace());
}

Trace sgd_lazy(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
               const SolverConfig& config) {
  config.validate();
  Recorder rec(loss, map, config);
  const RegularityConstants c = stochastic_constants(loss, map, config, rec.trace().meta());
  if (!(c.gamma > 0.0)) throw std::domain_error("sgd_lazy: gamma must be > 0");
  Stream draws = Stream(config.seed).child(1);

  ParamPoint theta = config.theta_set.project(theta0);
  std::size_t samples = 0;
  rec.record(0, theta, 0, 0);
  constexpr std::size_t kChunk = 4096;
  for (std::size_t k = 1; k <= config.max_steps; ++k) {
    const auto inner = static_cast<std::size_t>(
        std::ceil(config.lazy_scale * std::pow(static_cast<double>(k), config.lazy_alpha) - 1e-9));
    const ParamPoint deployed = theta;
    std::size_t i = 0;
    while (i < inner) {
      const std::size_t m = std::min(kChunk, inner - i);
      const auto batch = map.sample(deployed, m, draws);
      for (const auto& z : batch) {
        theta = config.theta_set.project(theta -
                                         loss.grad(theta, z) / (c.gamma * static_cast<double>(i + 1)));
        ++i;
      }
    }
    samples += inner;
    rec.check_finite(k, theta);
    const bool last = k == config.max_steps || budget_spent(config, samples);
    if (rec.due(k, last)) rec.record(k, theta, k, samples);
    if (last) break;
  }
  return std::move(rec.trace());
}

// ---- zeroth order -----------------------------------------------------------------------

Trace zeroth_order_pr(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
                      const SolverConfig& config) {
  config.validate();
  Recorder rec(loss, map, config);
  if (auto c = try_constants(loss, map, config.theta_set)) write_constants(rec.trace().meta(), *c);
  Stream dirs = Stream(config.seed).child(1);
  Stream evals = Stream(config.seed).child(2);
  const double diam = config.theta_set.diameter();
  double delta = config.zo_radius > 0.0 ? config.zo_radius : 1e-3 * diam;
  const double min_delta = 1e-14 * std::max(1.0, diam);
  const Index d = theta0.size();

  std::uint64_t eval_key = 0;
  auto pr_hat = [&](const ParamPoint& t, std::size_t& samples) {
    Stream s = evals.child(++eval_key);
    const Estimate e = performative_risk(loss, map, t, config.pr_samples, s);
    if (e.path == EvalPath::monte_carlo) samples += config.pr_samples;
    return e.value;
  };

  ParamPoint theta = config.theta_set.project(theta0);
  std::size_t samples = 0;
  std::size_t deployments = 0;
  std::size_t streak = 0;
  double best = std::numeric_limits<double>::infinity();
  rec.record(0, theta, 0, 0);
  for (std::size_t k = 1; k <= config.max_steps; ++k) {
    if (!(delta > min_delta))
      throw std::runtime_error(fmt::format("zeroth_order: smoothing radius {} below tolerance", delta));
    Vector u(d);
    for (Index i = 0; i < d; ++i) u[i] = dirs.normal();
    u /= u.norm();
    const double plus = pr_hat(theta + delta * u, samples);
    const double minus = pr_hat(theta - delta * u, samples);
    deployments += 2;
    const Vector g = (plus - minus) / (2.0 * delta) * u;
    rec.trace().add_diagnostic("grad_estimate", g.norm());
    rec.trace().add_diagnostic("radius", delta);

    const double mid = 0.5 * (plus + minus);
    if (mid < best) {
      best = mid;
      streak = 0;
    } else if (++streak >= config.zo_streak) {
      delta *= 0.5;
      streak = 0;
    }

    ParamPoint next = config.theta_set.project(theta - stepsize(config, nullptr, k) * g);
    rec.check_finite(k, next);
    theta = std::move(next);
    const bool last = k == config.max_steps || budget_spent(config, samples);
    if (rec.due(k, last)) rec.record(k, theta, deployments, samples);
    if (last) break;
  }
  return std::move(rec.trace());
}

Trace run_solver(const LossModel& loss, const DistributionMap& map, const ParamPoint& theta0,
                 const SolverConfig& config) {
  switch (config.kind) {
    case SolverKind::rrm: return rrm(loss, map, theta0, config);
    case SolverKind::rgd: return rgd(loss, map, theta0, config);
    case SolverKind::sgd_greedy: return sgd_greedy(loss, map, theta0, config);
    case SolverKind::sgd_lazy: return sgd_lazy(loss, map, theta0, config);
    case SolverKind::zeroth_order: return zeroth_order_pr(loss, map, theta0, config);
    case SolverKind::gms_bisect:
      throw std::invalid_argument("run_solver: gms_bisect runs through gms_fixed_point");
  }
  throw std::invalid_argument("run_solver: unknown kind");
}

}  // namespace perfpred
