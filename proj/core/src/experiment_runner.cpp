#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "perfpred/experiment.hpp"

namespace perfpred::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- plumbing ----------------------------------------------------------------------------

// Calls fn(i) for i in [0, n) on up to `workers` threads. The first exception
// (by index) is rethrown after all threads finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t t = std::max<std::size_t>(1, std::min(workers, n));
  if (t == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < t; ++i) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string utc_now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                  std::chrono::system_clock::now())));
}

bool wants(const ExperimentConfig& c, std::string_view check) {
  return std::find(c.checks.begin(), c.checks.end(), check) != c.checks.end();
}

CheckResult make_check(std::string name, bool passed, std::string detail) {
  return {std::move(name), passed, std::move(detail)};
}

void add_point_metrics(std::map<std::string, double>& m, const std::string& prefix,
                       const Vector& v) {
  if (v.size() == 1) {
    m[prefix] = v[0];
  } else {
    for (Index i = 0; i < v.size(); ++i) m[fmt::format("{}_{}", prefix, i)] = v[i];
  }
}

// What one seed produced.
struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;
  std::vector<fs::path> files;
  std::map<std::string, double> metrics;
  std::optional<std::string> failure;
  std::optional<Trace> trace;
  json extra;  // kind-specific data for aggregate checks
};

struct Model {
  std::unique_ptr<DistributionMap> map;
  std::unique_ptr<LossModel> loss;
  ParamSet theta_set = ParamSet::unbounded(1);
};

Model build_model(const ExperimentConfig& c) {
  Model m;
  m.map = make_map(c.map);
  const Index d = m.map->param_dim();
  m.loss = make_loss(c.loss, d);
  m.theta_set = make_param_set(c.theta_set, d);
  return m;
}

fs::path seed_file(const fs::path& dir, std::string_view stem, std::uint64_t seed,
                   std::string_view ext) {
  return dir / fmt::format("{}_seed{}.{}", stem, seed, ext);
}

void write_trace(const fs::path& dir, std::string_view stem, const Trace& trace,
                 SeedOutcome& out) {
  const fs::path csv = seed_file(dir, stem, trace.seed(), "csv");
  const fs::path side = seed_file(dir, stem, trace.seed(), "json");
  write_text(csv, trace.to_csv());
  json j = trace.sidecar();
  j["generated_at"] = utc_now();
  write_json(side, j);
  out.files.push_back(csv);
  out.files.push_back(side);
}

// ---- solver checks -----------------------------------------------------------------------

CheckResult check_rrm_ratio(const Trace& t, double rate) {
  const auto& r = t.records();
  std::size_t pairs = 0;
  double worst = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) {
    if (!r[i - 1].dist_ps || !r[i].dist_ps || r[i].k != r[i - 1].k + 1) continue;
    if (*r[i - 1].dist_ps == 0.0) break;
    worst = std::max(worst, std::abs(*r[i].dist_ps / *r[i - 1].dist_ps - rate));
    ++pairs;
  }
  if (pairs == 0) return make_check("rrm_ratio", false, "no consecutive steps with a stable-point distance");
  return make_check("rrm_ratio", worst <= 1e-9,
                    fmt::format("max |ratio - {}| = {:.3e} over {} steps", rate, worst, pairs));
}

CheckResult check_rrm_contraction(const Trace& t, double rate) {
  const auto& r = t.records();
  if (r.empty() || !r.front().dist_ps) return make_check("rrm_contraction", false, "no stable-point oracle");
  if (!(rate < 1.0))
    return make_check("rrm_contraction", false, fmt::format("rate eps*beta/gamma = {} is not below 1", rate));
  const double d0 = *r.front().dist_ps;
  for (const auto& rec : r) {
    const double bound = std::pow(rate, static_cast<double>(rec.k)) * d0;
    // Allow the rounding of the bound itself and nothing else.
    if (!rec.dist_ps || *rec.dist_ps > bound + 4.0 * std::numeric_limits<double>::epsilon() * bound)
      return make_check("rrm_contraction", false,
                        fmt::format("step {}: distance {} above bound {}", rec.k,
                                    rec.dist_ps.value_or(NAN), bound));
  }
  return make_check("rrm_contraction", true, fmt::format("{} steps within rate^k * {}", r.size(), d0));
}

CheckResult check_rgd_bias(const Trace& t) {
  const auto& d = t.diagnostics();
  if (!d.count("bias") || !d.count("bias_bound"))
    return make_check("rgd_bias", false, "bias diagnostics missing (needs the exact-gradient path)");
  const auto& bias = d.at("bias");
  const auto& bound = d.at("bias_bound");
  double worst = -INFINITY;
  for (std::size_t i = 0; i < bias.size(); ++i) worst = std::max(worst, bias[i] - bound[i]);
  return make_check("rgd_bias", worst <= 1e-9,
                    fmt::format("max(bias - bound) = {:.3e} over {} steps", worst, bias.size()));
}

CheckResult check_rgd_angle(const Trace& t) {
  const auto& d = t.diagnostics();
  if (!d.count("inner_product") || !d.count("g_ps_norm"))
    return make_check("rgd_angle", false, "angle diagnostics missing (needs the exact-gradient path)");
  const auto& ip = d.at("inner_product");
  const auto& norm = d.at("g_ps_norm");
  std::size_t checked = 0;
  for (std::size_t i = 0; i < ip.size(); ++i) {
    if (norm[i] <= 1e-9) continue;
    ++checked;
    if (ip[i] < 0.0)
      return make_check("rgd_angle", false, fmt::format("step {}: g^T g_ps = {}", i + 1, ip[i]));
  }
  return make_check("rgd_angle", true, fmt::format("{} steps with nonnegative inner product", checked));
}

CheckResult check_divergence(const Trace& t) {
  for (const auto& r : t.records())
    if (r.theta.norm() >= 1e6)
      return make_check("divergence", true, fmt::format("|theta| >= 1e6 at step {}", r.k));
  return make_check("divergence", false,
                    fmt::format("max |theta| stayed below 1e6 (last {})", t.back().theta.norm()));
}

SeedOutcome run_solver_seed(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir,
                            const std::string& digest) {
  SeedOutcome out;
  out.seed = seed;
  const Model m = build_model(c);
  const SolverConfig sc = make_solver_config(c.solver, m.theta_set, seed);
  const ParamPoint theta0 = Eigen::Map<const Vector>(c.theta0.data(), static_cast<Index>(c.theta0.size()));

  Trace trace;
  try {
    trace = run_solver(*m.loss, *m.map, theta0, sc);
  } catch (const DivergenceError& e) {
    if (wants(c, "divergence")) {
      out.checks.push_back(make_check("divergence", true, e.what()));
    } else {
      out.failure = fmt::format("seed {}: {}", seed, e.what());
      if (wants(c, "finite")) out.checks.push_back(make_check("finite", false, e.what()));
    }
    return out;
  } catch (const std::exception& e) {
    out.failure = fmt::format("seed {}: {}", seed, e.what());
    return out;
  }
  trace.set_config_digest(digest);
  write_trace(dir, "trace", trace, out);

  std::optional<RegularityConstants> constants;
  try {
    constants = certify_constants(*m.loss, *m.map, m.theta_set);
  } catch (const std::exception&) {
  }
  const auto rate = [&]() -> std::optional<double> {
    if (!constants || !(constants->gamma > 0.0)) return std::nullopt;
    return constants->epsilon * constants->beta_z / constants->gamma;
  };

  for (const auto& name : c.checks) {
    if (name == "rrm_ratio" || name == "rrm_contraction") {
      if (!rate()) {
        out.checks.push_back(make_check(name, false, "constants not certified"));
      } else {
        out.checks.push_back(name == "rrm_ratio" ? check_rrm_ratio(trace, *rate())
                                                 : check_rrm_contraction(trace, *rate()));
      }
    } else if (name == "rgd_bias") {
      out.checks.push_back(check_rgd_bias(trace));
    } else if (name == "rgd_angle") {
      out.checks.push_back(check_rgd_angle(trace));
    } else if (name == "divergence") {
      out.checks.push_back(check_divergence(trace));
    } else if (name == "finite") {
      out.checks.push_back(make_check("finite", true, "all iterates finite"));
    }
  }

  const auto& last = trace.back();
  out.metrics["final_pr"] = last.pr_est;
  out.metrics["final_deployments"] = static_cast<double>(last.deployments);
  out.metrics["final_samples"] = static_cast<double>(last.samples);
  if (last.dist_ps) out.metrics["final_dist_ps"] = *last.dist_ps;
  if (last.dist_po) out.metrics["final_dist_po"] = *last.dist_po;
  out.trace = std::move(trace);
  return out;
}

// Seed-averaged checks over the solver traces.
void aggregate_solver_checks(const ExperimentConfig& c, const std::vector<SeedOutcome>& seeds,
                             RunSummary& summary) {
  std::vector<Trace> traces;
  for (const auto& s : seeds)
    if (s.trace) traces.push_back(*s.trace);
  if (traces.empty()) return;

  if (!c.solver.delta_targets.empty()) {
    const DeploymentFit fit = fit_deployment_exponent(traces, c.solver.delta_targets);
    summary.metrics["deployment_slope"] = fit.slope;
    summary.metrics["deployment_fit_points"] = static_cast<double>(fit.points);
    if (wants(c, "lazy_slope")) {
      const bool ok = fit.points >= 2 && std::abs(fit.slope - c.solver.lazy_alpha) <= 0.25;
      summary.checks.push_back(make_check(
          "lazy_slope", ok,
          fmt::format("slope {} vs alpha {} (+/- 0.25) from {} points", fit.slope, c.solver.lazy_alpha,
                      fit.points)));
    }
  } else if (wants(c, "lazy_slope")) {
    summary.checks.push_back(make_check("lazy_slope", false, "solver.delta_targets is empty"));
  }

  if (wants(c, "sgd_bound")) {
    const json& meta = traces.front().meta();
    if (!meta.contains("certified")) {
      summary.checks.push_back(make_check("sgd_bound", false,
                                          "certified constants unavailable (needs certified stepsize "
                                          "and certified sigma, L)"));
    } else {
      const double big_m = meta["certified"]["M"].get<double>();
      const double gap = meta["certified"]["gap"].get<double>();
      const double bz = meta["certified"]["beta_z"].get<double>();
      const double bmax = meta["certified"]["beta_max"].get<double>();
      bool ok = true;
      std::string detail;
      std::size_t checked = 0;
      for (const std::size_t k : {10u, 100u, 1000u}) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& t : traces)
          for (const auto& r : t.records())
            if (r.k == k && r.dist_ps) {
              sum += *r.dist_ps * *r.dist_ps;
              ++n;
            }
        if (n != traces.size()) continue;
        ++checked;
        const double mean = sum / static_cast<double>(n);
        const double kk = static_cast<double>(k);
        const double bound_z = 1.1 * big_m / (gap * gap * kk + 8.0 * bz * bz);
        const double bound_max = 1.1 * big_m / (gap * gap * kk + 8.0 * bmax * bmax);
        ok = ok && mean <= bound_z && mean <= bound_max;
        summary.metrics[fmt::format("mse_k{}", k)] = mean;
        summary.metrics[fmt::format("bound_k{}", k)] = bound_z;
        summary.metrics[fmt::format("bound_max_k{}", k)] = bound_max;
        detail += fmt::format("k={}: {:.4g} <= {:.4g} / {:.4g}; ", k, mean, bound_z, bound_max);
      }
      if (checked == 0) {
        ok = false;
        detail = "no checkpoint k in {10, 100, 1000} recorded for every seed";
      }
      summary.checks.push_back(make_check("sgd_bound", ok, detail));
    }
  }
}

std::string solver_curve_csv(const std::vector<SeedOutcome>& seeds) {
  struct Acc {
    std::vector<double> dep, samp, pr, dist;
  };
  std::map<std::size_t, Acc> by_k;
  for (const auto& s : seeds) {
    if (!s.trace) continue;
    for (const auto& r : s.trace->records()) {
      auto& a = by_k[r.k];
      a.dep.push_back(static_cast<double>(r.deployments));
      a.samp.push_back(static_cast<double>(r.samples));
      a.pr.push_back(r.pr_est);
      if (r.dist_ps) a.dist.push_back(*r.dist_ps);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::string out =
      "k,count,deployments_mean,samples_mean,pr_mean,pr_median,dist_ps_mean,dist_ps_median,"
      "dist_ps_sq_mean\n";
  for (const auto& [k, a] : by_k) {
    out += fmt::format("{},{},{},{},{},{}", k, a.pr.size(), format_real(mean(a.dep)),
                       format_real(mean(a.samp)), format_real(mean(a.pr)), format_real(median(a.pr)));
    if (a.dist.empty()) {
      out += ",,,\n";
    } else {
      double sq = 0.0;
      for (double d : a.dist) sq += d * d;
      out += fmt::format(",{},{},{}\n", format_real(mean(a.dist)), format_real(median(a.dist)),
                         format_real(sq / static_cast<double>(a.dist.size())));
    }
  }
  return out;
}

// ---- bandit ------------------------------------------------------------------------------

SeedOutcome run_bandit_seed(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir,
                            const std::string& digest) {
  SeedOutcome out;
  out.seed = seed;
  const Model m = build_model(c);
  const auto grid = bandit::ArmGrid::uniform(m.theta_set, c.bandit.spacing);
  const RegularityConstants rc = certify_constants(*m.loss, *m.map, m.theta_set);

  bandit::BoundConstants bc;
  bc.lipschitz_z = rc.require_lipschitz_z();
  bc.epsilon = rc.epsilon;
  bc.loss_range = loss_range(*m.loss, m.map->support(m.theta_set), m.theta_set);
  bc.horizon = c.bandit.horizon;
  bc.num_arms = grid.size();
  bc.delta_conf = c.bandit.delta_conf;

  bandit::EliminationConfig ec;
  ec.horizon = c.bandit.horizon;
  ec.batch_size = c.bandit.batch_size;
  ec.delta_conf = c.bandit.delta_conf;
  ec.seed = seed;
  ec.pr_samples = c.bandit.pr_samples;

  auto result = bandit::successive_elimination(*m.loss, *m.map, grid, bc, ec);
  result.trace.set_config_digest(digest);
  write_trace(dir, "trace", result.trace, out);

  // PR of every arm for the uniform-random baseline.
  Stream pr_stream = Stream(seed).child(0x554e49);
  std::vector<double> pr(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Stream s = pr_stream.child(i);
    pr[i] = performative_risk(*m.loss, *m.map, grid.arms[i], c.bandit.pr_samples, s).value;
  }
  Stream uni = Stream(seed).child(0x52414e44);
  const auto uniform = bandit::uniform_random_regret(pr, c.bandit.horizon, uni);

  const fs::path regret = seed_file(dir, "regret", seed, "csv");
  const fs::path regret_uni = seed_file(dir, "regret_uniform", seed, "csv");
  {
    std::ofstream f(regret, std::ios::binary);
    bandit::write_regret_csv(f, result.regret);
    std::ofstream g(regret_uni, std::ios::binary);
    bandit::write_regret_csv(g, uniform);
  }
  out.files.push_back(regret);
  out.files.push_back(regret_uni);

  const double reg = result.regret.empty() ? 0.0 : result.regret.back().regret_cum;
  const double reg_uni = uniform.empty() ? 0.0 : uniform.back().regret_cum;
  out.metrics["regret"] = reg;
  out.metrics["uniform_regret"] = reg_uni;
  out.metrics["best_pr"] = result.best_pr;
  out.metrics["best_arm"] = grid.arms[result.best_arm][0];
  out.metrics["ucb_violations"] = static_cast<double>(result.ucb_violations);
  out.metrics["arms"] = static_cast<double>(grid.size());
  out.extra["violated"] = result.ucb_violations > 0;

  for (const auto& name : c.checks) {
    if (name == "best_arm_kept") {
      out.checks.push_back(make_check(name, !result.best_arm_eliminated,
                                      result.best_arm_eliminated ? "best arm eliminated" : "best arm active"));
    } else if (name == "elimination_sound") {
      out.checks.push_back(make_check(name, result.unsound_eliminations == 0,
                                      fmt::format("{} unsound eliminations", result.unsound_eliminations)));
    } else if (name == "regret_vs_uniform") {
      out.checks.push_back(make_check(name, reg <= 0.5 * reg_uni,
                                      fmt::format("regret {} vs uniform {}", reg, reg_uni)));
    }
  }
  return out;
}

void aggregate_bandit_checks(const ExperimentConfig& c, const std::vector<SeedOutcome>& seeds,
                             RunSummary& summary) {
  if (!wants(c, "ucb_validity")) return;
  std::size_t runs = 0, violated = 0;
  for (const auto& s : seeds) {
    if (!s.extra.contains("violated")) continue;
    ++runs;
    if (s.extra["violated"].get<bool>()) ++violated;
  }
  const bool exact = c.bandit.batch_size == 0;
  const double rate = runs ? static_cast<double>(violated) / static_cast<double>(runs) : 1.0;
  const bool ok = runs > 0 && (exact ? violated == 0 : rate <= c.bandit.delta_conf);
  summary.metrics["ucb_violation_rate"] = rate;
  summary.checks.push_back(make_check(
      "ucb_validity", ok,
      fmt::format("{} of {} runs with a violated upper bound ({} path, allowed {})", violated, runs,
                  exact ? "exact" : "sampled", exact ? 0.0 : c.bandit.delta_conf)));
}

// ---- power -------------------------------------------------------------------------------

SeedOutcome run_power_seed(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  SeedOutcome out;
  out.seed = seed;
  const power::Platform platform = make_platform(c.power);
  std::vector<power::Action> probes;
  for (const auto& name : c.power.probes) {
    if (name == "identity") probes.push_back(power::identity_action(platform));
    if (name == "swap") probes.push_back(power::swap_top_two(platform));
    if (name == "demote") probes.push_back(power::demote_first(platform));
  }
  Stream stream = Stream(seed).child(0x504f57);
  const auto effect = power::causal_effect_of_position(platform, c.power.mc_draws, &stream);
  const auto report = power::performative_power_lower_bound(platform, probes);
  const double calc = power::traffic_steering_calculator(c.power.effect_first_pos, c.power.second_pos_discount,
                                                         c.power.platform_share, c.power.top_two_share);
  json j;
  j["seed"] = seed;
  j["beta"] = effect.beta;
  if (effect.mc_beta) {
    j["beta_mc"] = *effect.mc_beta;
    j["beta_mc_se"] = *effect.mc_std_error;
  }
  j["power"] = report.power;
  j["argmax_probe"] = probes[report.argmax].name;
  json per = json::object();
  for (std::size_t i = 0; i < probes.size(); ++i) per[probes[i].name] = report.per_action[i];
  j["per_probe"] = per;
  j["calculator"] = calc;
  json decomp = json::array();
  bool decomp_ok = true;
  for (double f : c.power.subpopulation_fractions) {
    const auto d = power::decomposition_check(platform, f, probes);
    decomp_ok = decomp_ok && d.holds;
    decomp.push_back({{"fraction", f},
                      {"alpha", d.alpha},
                      {"power_full", d.power_full},
                      {"power_sub", d.power_sub},
                      {"holds", d.holds}});
  }
  j["decomposition"] = decomp;
  const fs::path file = seed_file(dir, "power", seed, "json");
  write_json(file, j);
  out.files.push_back(file);

  out.metrics["beta"] = effect.beta;
  out.metrics["power"] = report.power;
  out.metrics["calculator"] = calc;

  const bool has_swap =
      std::find(c.power.probes.begin(), c.power.probes.end(), "swap") != c.power.probes.end();
  for (const auto& name : c.checks) {
    if (name == "power_bound") {
      if (!has_swap) {
        out.checks.push_back(make_check(name, false, "probe set lacks the swap action"));
      } else {
        out.checks.push_back(make_check(name, report.power >= effect.beta - 1e-12,
                                        fmt::format("power {} vs beta {}", report.power, effect.beta)));
      }
    } else if (name == "decomposition") {
      out.checks.push_back(make_check(name, decomp_ok, fmt::format("{} subpopulations", decomp.size())));
    }
  }
  return out;
}

// ---- collective --------------------------------------------------------------------------

std::string rational_text(const collective::Rational& r) {
  return boost::multiprecision::numerator(r).str() + "/" + boost::multiprecision::denominator(r).str();
}

SeedOutcome run_collective_seed(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  using collective::Rational;
  SeedOutcome out;
  out.seed = seed;
  const auto pop = collective::TabularPopulation::from_weights(c.collective.weights);
  const bool revenue = !c.collective.baseline.empty();
  collective::RevenueModel rm;
  if (revenue) {
    for (double h : c.collective.baseline) rm.baseline.emplace_back(h);
    rm.beta_perf = Rational(c.collective.beta_perf);
  }

  std::string csv = "alpha,xi,s_exact,s_bound,uplift\n";
  json rows = json::array();
  bool thm_ok = true, rev_ok = true, half_ok = true, bayes_ok = true;
  std::size_t half_cases = 0;
  for (const auto& a : c.collective.alphas) {
    collective::SignalPlan plan{c.collective.signal, c.collective.target_label, parse_fraction(a)};
    const Rational xi = collective::signal_density(pop, plan);
    const auto mixed = collective::mixture(pop, plan);
    const auto firm = collective::bayes_firm(mixed, plan.target_label);
    const Rational s = collective::success_probability(pop, plan, firm);
    const Rational bound = collective::success_lower_bound(plan.alpha, xi);
    thm_ok = thm_ok && s >= bound;
    bayes_ok = bayes_ok && collective::improving_flips(mixed, firm) == 0;
    json row{{"alpha", a}, {"xi", rational_text(xi)}, {"s_exact", rational_text(s)},
             {"s_bound", rational_text(bound)}};
    std::string uplift_text;
    if (revenue) {
      const Rational up = collective::revenue_uplift(pop, plan, firm, rm);
      rev_ok = rev_ok && std::abs(collective::to_double(up - s * rm.beta_perf)) <= 1e-12;
      if (xi <= plan.alpha / 2) {
        ++half_cases;
        half_ok = half_ok && up >= rm.beta_perf / 2;
      }
      row["uplift"] = rational_text(up);
      uplift_text = format_real(collective::to_double(up));
    }
    rows.push_back(row);
    csv += fmt::format("{},{},{},{},{}\n", a, format_real(collective::to_double(xi)),
                       format_real(collective::to_double(s)), format_real(collective::to_double(bound)),
                       uplift_text);
    out.metrics["s_alpha_" + a] = collective::to_double(s);
  }
  const fs::path file = seed_file(dir, "collective", seed, "csv");
  const fs::path exact = seed_file(dir, "collective", seed, "json");
  write_text(file, csv);
  write_json(exact, json{{"seed", seed}, {"rows", rows}});
  out.files.push_back(file);
  out.files.push_back(exact);

  for (const auto& name : c.checks) {
    if (name == "success_bound") {
      out.checks.push_back(make_check(name, thm_ok, "S(alpha) >= 1 - ((1 - alpha) / alpha) xi, exact"));
    } else if (name == "revenue_identity") {
      out.checks.push_back(revenue ? make_check(name, rev_ok, "uplift = S(alpha) beta within 1e-12")
                                   : make_check(name, false, "collective.baseline is empty"));
    } else if (name == "half_beta") {
      out.checks.push_back(revenue ? make_check(name, half_ok,
                                                fmt::format("{} alphas with xi <= alpha/2", half_cases))
                                   : make_check(name, false, "collective.baseline is empty"));
    } else if (name == "bayes_optimal") {
      out.checks.push_back(make_check(name, bayes_ok, "no improving single-point flip"));
    }
  }
  return out;
}

// ---- gms ---------------------------------------------------------------------------------

SeedOutcome run_gms_seed(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  SeedOutcome out;
  out.seed = seed;
  const ScalarResponse r = make_response(c.gms);
  const double y = gms_fixed_point(r, c.gms.tol);
  const double residual = std::abs(r(y) - y);
  const fs::path file = seed_file(dir, "gms", seed, "json");
  write_json(file, json{{"seed", seed}, {"y_star", y}, {"response_at_y_star", r(y)}, {"residual", residual}});
  out.files.push_back(file);
  out.metrics["y_star"] = y;
  out.metrics["residual"] = residual;
  if (wants(c, "residual"))
    out.checks.push_back(make_check("residual", residual <= c.gms.tol,
                                    fmt::format("|R(y*) - y*| = {:.3e} (tol {:.1e})", residual, c.gms.tol)));
  return out;
}

// ---- run ---------------------------------------------------------------------------------

struct RunResult {
  RunSummary summary;
  std::vector<Trace> traces;
};

RunResult run_impl(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (config.kind == ExperimentKind::sweep)
    throw ConfigError("kind", "sweep configs run through the sweep command");
  const fs::path dir = options.out_dir.empty() ? fs::path(config.output_dir) : options.out_dir;
  fs::create_directories(dir);
  const std::vector<std::uint64_t> seeds =
      options.seed_override ? std::vector<std::uint64_t>{*options.seed_override} : config.seeds;
  const std::string digest = config_digest(config);

  std::vector<SeedOutcome> outcomes(seeds.size());
  parallel_for(seeds.size(), std::max<std::size_t>(1, options.workers), [&](std::size_t i) {
    const std::uint64_t seed = seeds[i];
    try {
      switch (config.kind) {
        case ExperimentKind::solver: outcomes[i] = run_solver_seed(config, seed, dir, digest); break;
        case ExperimentKind::bandit: outcomes[i] = run_bandit_seed(config, seed, dir, digest); break;
        case ExperimentKind::power: outcomes[i] = run_power_seed(config, seed, dir); break;
        case ExperimentKind::collective: outcomes[i] = run_collective_seed(config, seed, dir); break;
        case ExperimentKind::gms: outcomes[i] = run_gms_seed(config, seed, dir); break;
        case ExperimentKind::sweep: break;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      outcomes[i] = SeedOutcome{};
      outcomes[i].seed = seed;
      outcomes[i].failure = fmt::format("seed {}: {}", seed, e.what());
    }
  });

  RunResult result;
  RunSummary& summary = result.summary;
  // Per-seed checks merge by name: a check passes only if it passed on every seed.
  std::map<std::string, CheckResult> merged;
  std::vector<std::string> order;
  std::map<std::string, std::pair<double, std::size_t>> metric_acc;
  for (const auto& o : outcomes) {
    for (const auto& chk : o.checks) {
      auto it = merged.find(chk.name);
      if (it == merged.end()) {
        order.push_back(chk.name);
        merged[chk.name] = chk;
        merged[chk.name].detail = fmt::format("seed {}: {}", o.seed, chk.detail);
      } else if (it->second.passed && !chk.passed) {
        it->second.passed = false;
        it->second.detail = fmt::format("seed {}: {}", o.seed, chk.detail);
      }
    }
    for (const auto& [k, v] : o.metrics) {
      auto& acc = metric_acc[k];
      acc.first += v;
      ++acc.second;
    }
    summary.files.insert(summary.files.end(), o.files.begin(), o.files.end());
    if (o.failure) summary.failures.push_back(*o.failure);
    if (o.trace) result.traces.push_back(*o.trace);
  }
  for (const auto& name : order) summary.checks.push_back(merged[name]);
  for (const auto& [k, acc] : metric_acc) summary.metrics[k] = acc.first / static_cast<double>(acc.second);

  if (config.kind == ExperimentKind::solver || config.kind == ExperimentKind::bandit) {
    try {
      const Model m = build_model(config);
      if (auto certs = equilibrium_certificates(*m.map, *m.loss)) {
        if (certs->theta_ps) add_point_metrics(summary.metrics, "theta_ps", *certs->theta_ps);
        if (certs->theta_po) add_point_metrics(summary.metrics, "theta_po", *certs->theta_po);
      }
    } catch (const std::exception&) {
    }
  }
  if (config.kind == ExperimentKind::solver) {
    aggregate_solver_checks(config, outcomes, summary);
    const fs::path curve = dir / "summary_curve.csv";
    write_text(curve, solver_curve_csv(outcomes));
    summary.files.push_back(curve);
  }
  if (config.kind == ExperimentKind::bandit) aggregate_bandit_checks(config, outcomes, summary);

  // Configured checks that produced no verdict (e.g. every seed failed) count as failed.
  for (const auto& name : config.checks) {
    const bool present = std::any_of(summary.checks.begin(), summary.checks.end(),
                                     [&](const CheckResult& r) { return r.name == name; });
    if (!present) summary.checks.push_back(make_check(name, false, "no verdict (run failed)"));
  }

  summary.ok = summary.failures.empty() &&
               std::all_of(summary.checks.begin(), summary.checks.end(),
                           [](const CheckResult& r) { return r.passed; });

  json j;
  j["name"] = config.name;
  j["kind"] = std::string(to_string(config.kind));
  j["config_digest"] = digest;
  j["seeds"] = seeds;
  j["ok"] = summary.ok;
  json checks = json::array();
  for (const auto& chk : summary.checks)
    checks.push_back({{"name", chk.name}, {"passed", chk.passed}, {"detail", chk.detail}});
  j["checks"] = checks;
  j["metrics"] = summary.metrics;
  j["failures"] = summary.failures;
  json files = json::array();
  for (const auto& f : summary.files) files.push_back(f.filename().string());
  j["files"] = files;
  const fs::path summary_file = dir / "summary.json";
  write_json(summary_file, j);
  summary.files.push_back(summary_file);
  return result;
}

// ---- sweep helpers -----------------------------------------------------------------------

void set_path(json& root, const std::string& dotted, const json& value) {
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("sweep.parameters." + dotted, "empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object())
      throw ConfigError("sweep.parameters." + dotted,
                        fmt::format("'{}' is not an object in the base config", key));
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::string csv_value(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

RunSummary run(const ExperimentConfig& config, const RunOptions& options) {
  if (config.kind == ExperimentKind::sweep) return sweep(config, options);
  return run_impl(config, options).summary;
}

RunSummary sweep(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  if (config.kind != ExperimentKind::sweep) throw ConfigError("kind", "expected kind 'sweep'");
  const fs::path dir = options.out_dir.empty() ? fs::path(config.output_dir) : options.out_dir;

  std::vector<std::string> names;
  std::vector<const std::vector<json>*> values;
  double count_real = 1.0;
  for (const auto& [path, vals] : config.sweep.parameters) {
    names.push_back(path);
    values.push_back(&vals);
    count_real *= static_cast<double>(vals.size());
  }
  if (count_real > static_cast<double>(config.sweep.max_runs))
    throw ConfigError("sweep.max_runs", fmt::format("sweep expands to {} runs, above the cap of {}",
                                                    count_real, config.sweep.max_runs));
  const auto count = static_cast<std::size_t>(count_real);

  // Expand the product; the last parameter varies fastest.
  std::vector<std::vector<std::size_t>> combos;
  std::vector<std::size_t> idx(names.size(), 0);
  for (std::size_t r = 0; r < count; ++r) {
    combos.push_back(idx);
    for (std::size_t p = names.size(); p-- > 0;) {
      if (++idx[p] < values[p]->size()) break;
      idx[p] = 0;
    }
  }

  const json base = to_json(*config.sweep_base);
  std::vector<ExperimentConfig> runs;
  for (const auto& combo : combos) {
    json j = base;
    for (std::size_t p = 0; p < names.size(); ++p) set_path(j, names[p], (*values[p])[combo[p]]);
    try {
      runs.push_back(parse_config(j));
    } catch (const ConfigError& e) {
      throw ConfigError(e.field().empty() ? "sweep.base" : "sweep.base." + e.field(), e.what());
    }
  }

  fs::create_directories(dir);
  std::vector<RunResult> results(runs.size());
  parallel_for(runs.size(), std::max<std::size_t>(1, options.workers), [&](std::size_t i) {
    RunOptions ro;
    ro.out_dir = dir / fmt::format("run_{:03d}", i);
    ro.workers = 1;
    ro.seed_override = options.seed_override;
    results[i] = run_impl(runs[i], ro);
  });

  RunSummary summary;
  std::string param_header;
  for (const auto& n : names) param_header += "," + n;
  auto param_cells = [&](std::size_t i) {
    std::string s;
    for (std::size_t p = 0; p < names.size(); ++p) s += "," + csv_value((*values[p])[combos[i][p]]);
    return s;
  };

  // Long format: one row per (run, seed, recorded step) for solver runs, one
  // row per (run, metric) otherwise.
  const bool solver = config.sweep_base->kind == ExperimentKind::solver;
  std::string long_csv = solver ? "run" + param_header + ",seed,k,deployments,samples,pr_est,dist_ps\n"
                                : "run" + param_header + ",metric,value\n";
  std::set<std::string> metric_names;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& rs = results[i].summary;
    for (const auto& [k, v] : rs.metrics) metric_names.insert(k);
    if (solver) {
      for (const auto& t : results[i].traces)
        for (const auto& r : t.records())
          long_csv += fmt::format("{}{},{},{},{},{},{},{}\n", i, param_cells(i), t.seed(), r.k,
                                  r.deployments, r.samples, format_real(r.pr_est),
                                  r.dist_ps ? format_real(*r.dist_ps) : "");
    } else {
      for (const auto& [k, v] : rs.metrics)
        long_csv += fmt::format("{}{},{},{}\n", i, param_cells(i), k, format_real(v));
    }
    for (const auto& chk : rs.checks)
      summary.checks.push_back({fmt::format("run_{:03d}.{}", i, chk.name), chk.passed, chk.detail});
    for (const auto& f : rs.failures) summary.failures.push_back(fmt::format("run_{:03d}: {}", i, f));
    summary.files.insert(summary.files.end(), rs.files.begin(), rs.files.end());
  }

  std::string summary_csv = "run" + param_header + ",ok";
  for (const auto& m : metric_names) summary_csv += "," + m;
  summary_csv += "\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& rs = results[i].summary;
    summary_csv += fmt::format("{}{},{}", i, param_cells(i), rs.ok ? 1 : 0);
    for (const auto& m : metric_names) {
      const auto it = rs.metrics.find(m);
      summary_csv += "," + (it == rs.metrics.end() ? std::string() : format_real(it->second));
    }
    summary_csv += "\n";
    for (const auto& [k, v] : rs.metrics) summary.metrics[fmt::format("run_{:03d}.{}", i, k)] = v;
  }
  write_text(dir / "sweep_long.csv", long_csv);
  write_text(dir / "sweep_summary.csv", summary_csv);
  summary.files.push_back(dir / "sweep_long.csv");
  summary.files.push_back(dir / "sweep_summary.csv");
  summary.ok = summary.failures.empty() &&
               std::all_of(summary.checks.begin(), summary.checks.end(),
                           [](const CheckResult& r) { return r.passed; });
  return summary;
}

// ---- deployment fit ------------------------------------------------------------------------

DeploymentFit fit_deployment_exponent(std::span<const Trace> traces, std::span<const double> deltas) {
  DeploymentFit fit;
  fit.deltas.assign(deltas.begin(), deltas.end());
  fit.deployments.assign(deltas.size(), 0);
  fit.slope = std::numeric_limits<double>::quiet_NaN();
  if (traces.empty()) return fit;

  std::size_t len = traces[0].size();
  for (const auto& t : traces) len = std::min(len, t.size());
  std::vector<double> mse(len, 0.0);
  std::vector<std::size_t> deployments(len, 0);
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0.0;
    for (const auto& t : traces) {
      const auto& r = t[i];
      if (!r.dist_ps) throw std::invalid_argument("fit_deployment_exponent: traces lack dist_ps");
      sum += *r.dist_ps * *r.dist_ps;
    }
    mse[i] = sum / static_cast<double>(traces.size());
    deployments[i] = traces[0][i].deployments;
  }

  std::vector<double> xs, ys;
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    for (std::size_t i = 0; i < len; ++i) {
      if (deployments[i] == 0 || mse[i] > deltas[j]) continue;
      fit.deployments[j] = deployments[i];
      xs.push_back(std::log(1.0 / deltas[j]));
      ys.push_back(std::log(static_cast<double>(deployments[i])));
      break;
    }
  }
  fit.points = xs.size();
  if (fit.points < 2) return fit;
  const double n = static_cast<double>(fit.points);
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx > 0.0) fit.slope = sxy / sxx;
  return fit;
}

}  // namespace perfpred::experiment
