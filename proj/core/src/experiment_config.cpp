#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "perfpred/experiment.hpp"

namespace perfpred::experiment {

using nlohmann::json;

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

std::string_view to_string(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::solver: return "solver";
    case ExperimentKind::bandit: return "bandit";
    case ExperimentKind::power: return "power";
    case ExperimentKind::collective: return "collective";
    case ExperimentKind::gms: return "gms";
    case ExperimentKind::sweep: return "sweep";
  }
  return "?";
}

namespace {

ExperimentKind kind_from_string(const std::string& s, const std::string& field) {
  for (auto k : {ExperimentKind::solver, ExperimentKind::bandit, ExperimentKind::power,
                 ExperimentKind::collective, ExperimentKind::gms, ExperimentKind::sweep})
    if (to_string(k) == s) return k;
  throw ConfigError(field, fmt::format("unknown experiment kind '{}'", s));
}

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

// Typed access to one JSON object; rejects unknown keys on finish().
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(join(path_, key), fmt::format("wrong type ({})", e.what()));
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(join(path_, k), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

CoordinateSpec parse_coordinate(const json& j, const std::string& path) {
  Reader r(j, path);
  CoordinateSpec c;
  r.get("dist", c.dist);
  r.get("a", c.a);
  r.get("b", c.b);
  r.finish();
  if (c.dist != "gaussian" && c.dist != "uniform" && c.dist != "point")
    throw ConfigError(join(path, "dist"), fmt::format("unknown distribution '{}'", c.dist));
  return c;
}

std::vector<CoordinateSpec> parse_coordinates(Reader& r, const std::string& key) {
  std::vector<CoordinateSpec> out;
  if (!r.has(key)) {
    r.child(key);  // marks it; throws below
  }
  const json& arr = r.child(key);
  if (!arr.is_array()) throw ConfigError(r.path(key), "expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(parse_coordinate(arr[i], fmt::format("{}[{}]", r.path(key), i)));
  return out;
}

json coordinate_json(const CoordinateSpec& c) { return {{"dist", c.dist}, {"a", c.a}, {"b", c.b}}; }

json coordinates_json(const std::vector<CoordinateSpec>& cs) {
  json a = json::array();
  for (const auto& c : cs) a.push_back(coordinate_json(c));
  return a;
}

MapSpec parse_map(const json& j, const std::string& path) {
  Reader r(j, path);
  std::string type = "qb1";
  r.get("type", type);
  if (type == "qb1") {
    Qb1MapSpec m;
    r.get("a", m.a);
    r.get("b", m.b);
    r.get("s", m.s);
    r.get("noise", m.noise);
    r.finish();
    if (m.noise != "gaussian" && m.noise != "uniform")
      throw ConfigError(join(path, "noise"), "expected 'gaussian' or 'uniform'");
    return m;
  }
  if (type == "location_scale") {
    LocationScaleMapSpec m;
    if (!r.has("base")) throw ConfigError(join(path, "base"), "missing");
    m.base = parse_coordinates(r, "base");
    r.get("mu", m.mu);
    r.finish();
    return m;
  }
  if (type == "mixture") {
    MixtureMapSpec m;
    if (!r.has("components")) throw ConfigError(join(path, "components"), "missing");
    const json& arr = r.child("components");
    if (!arr.is_array()) throw ConfigError(join(path, "components"), "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader c(arr[i], fmt::format("{}.components[{}]", path, i));
      MixtureComponentSpec comp;
      c.get("weight", comp.weight);
      c.get("offset", comp.offset);
      c.get("shift", comp.shift);
      c.get("std_dev", comp.std_dev);
      c.finish();
      m.components.push_back(std::move(comp));
    }
    r.finish();
    return m;
  }
  if (type == "strategic") {
    StrategicMapSpec m;
    if (!r.has("base_x")) throw ConfigError(join(path, "base_x"), "missing");
    m.base_x = parse_coordinates(r, "base_x");
    r.get("eta", m.eta);
    r.get("label_weights", m.label_weights);
    r.get("label_threshold", m.label_threshold);
    r.finish();
    return m;
  }
  if (type == "outcome") {
    OutcomeMapSpec m;
    if (!r.has("base_x")) throw ConfigError(join(path, "base_x"), "missing");
    m.base_x = parse_coordinates(r, "base_x");
    r.get("outcome_weights", m.outcome_weights);
    r.get("kappa", m.kappa);
    r.get("noise_sd", m.noise_sd);
    r.finish();
    return m;
  }
  throw ConfigError(join(path, "type"), fmt::format("unknown map type '{}'", type));
}

json map_json(const MapSpec& spec) {
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Qb1MapSpec>) {
          return {{"type", "qb1"}, {"a", m.a}, {"b", m.b}, {"s", m.s}, {"noise", m.noise}};
        } else if constexpr (std::is_same_v<T, LocationScaleMapSpec>) {
          return {{"type", "location_scale"}, {"base", coordinates_json(m.base)}, {"mu", m.mu}};
        } else if constexpr (std::is_same_v<T, MixtureMapSpec>) {
          json comps = json::array();
          for (const auto& c : m.components)
            comps.push_back({{"weight", c.weight},
                             {"offset", c.offset},
                             {"shift", c.shift},
                             {"std_dev", c.std_dev}});
          return {{"type", "mixture"}, {"components", comps}};
        } else if constexpr (std::is_same_v<T, StrategicMapSpec>) {
          return {{"type", "strategic"},
                  {"base_x", coordinates_json(m.base_x)},
                  {"eta", m.eta},
                  {"label_weights", m.label_weights},
                  {"label_threshold", m.label_threshold}};
        } else {
          return {{"type", "outcome"},
                  {"base_x", coordinates_json(m.base_x)},
                  {"outcome_weights", m.outcome_weights},
                  {"kappa", m.kappa},
                  {"noise_sd", m.noise_sd}};
        }
      },
      spec);
}

Index map_param_dim(const MapSpec& spec) {
  return std::visit(
      [](const auto& m) -> Index {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Qb1MapSpec>) {
          return 1;
        } else if constexpr (std::is_same_v<T, LocationScaleMapSpec>) {
          return m.mu.empty() ? 0 : static_cast<Index>(m.mu.front().size());
        } else if constexpr (std::is_same_v<T, MixtureMapSpec>) {
          return m.components.empty() || m.components.front().shift.empty()
                     ? 0
                     : static_cast<Index>(m.components.front().shift.front().size());
        } else {
          return static_cast<Index>(m.base_x.size());
        }
      },
      spec);
}

void parse_solver(const json& j, SolverSpec& s) {
  Reader r(j, "solver");
  r.get("kind", s.kind);
  r.get("max_steps", s.max_steps);
  r.get("stepsize", s.stepsize);
  r.get("step", s.step);
  r.get("lazy_alpha", s.lazy_alpha);
  r.get("lazy_scale", s.lazy_scale);
  r.get("inner_tol", s.inner_tol);
  r.get("inner_max_iter", s.inner_max_iter);
  r.get("strict", s.strict);
  r.get("batch_size", s.batch_size);
  r.get("pr_samples", s.pr_samples);
  r.get("record_every", s.record_every);
  r.get("max_samples", s.max_samples);
  r.get("zo_radius", s.zo_radius);
  r.get("delta_targets", s.delta_targets);
  r.finish();
}

json solver_json(const SolverSpec& s) {
  return {{"kind", s.kind},
          {"max_steps", s.max_steps},
          {"stepsize", s.stepsize},
          {"step", s.step},
          {"lazy_alpha", s.lazy_alpha},
          {"lazy_scale", s.lazy_scale},
          {"inner_tol", s.inner_tol},
          {"inner_max_iter", s.inner_max_iter},
          {"strict", s.strict},
          {"batch_size", s.batch_size},
          {"pr_samples", s.pr_samples},
          {"record_every", s.record_every},
          {"max_samples", s.max_samples},
          {"zo_radius", s.zo_radius},
          {"delta_targets", s.delta_targets}};
}

void parse_bandit(const json& j, BanditSpec& b) {
  Reader r(j, "bandit");
  r.get("spacing", b.spacing);
  r.get("horizon", b.horizon);
  r.get("batch_size", b.batch_size);
  r.get("delta_conf", b.delta_conf);
  r.get("pr_samples", b.pr_samples);
  r.finish();
}

json bandit_json(const BanditSpec& b) {
  return {{"spacing", b.spacing},
          {"horizon", b.horizon},
          {"batch_size", b.batch_size},
          {"delta_conf", b.delta_conf},
          {"pr_samples", b.pr_samples}};
}

void parse_power(const json& j, PowerSpec& p) {
  Reader r(j, "power");
  r.get("scores", p.scores);
  r.get("budget", p.budget);
  r.get("probes", p.probes);
  r.get("subpopulation_fractions", p.subpopulation_fractions);
  r.get("mc_draws", p.mc_draws);
  r.get("effect_first_pos", p.effect_first_pos);
  r.get("second_pos_discount", p.second_pos_discount);
  r.get("platform_share", p.platform_share);
  r.get("top_two_share", p.top_two_share);
  if (r.has("viewers")) {
    const json& arr = r.child("viewers");
    if (!arr.is_array()) throw ConfigError("power.viewers", "expected an array");
    p.viewers.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Reader v(arr[i], fmt::format("power.viewers[{}]", i));
      ViewerGroupSpec g;
      v.get("count", g.count);
      v.get("p1", g.p1);
      v.get("p2", g.p2);
      v.get("affinity", g.affinity);
      v.finish();
      p.viewers.push_back(std::move(g));
    }
  }
  r.finish();
  for (const auto& name : p.probes)
    if (name != "identity" && name != "swap" && name != "demote")
      throw ConfigError("power.probes", fmt::format("unknown probe action '{}'", name));
}

json power_json(const PowerSpec& p) {
  json viewers = json::array();
  for (const auto& g : p.viewers)
    viewers.push_back({{"count", g.count}, {"p1", g.p1}, {"p2", g.p2}, {"affinity", g.affinity}});
  return {{"scores", p.scores},
          {"viewers", viewers},
          {"budget", p.budget},
          {"probes", p.probes},
          {"subpopulation_fractions", p.subpopulation_fractions},
          {"mc_draws", p.mc_draws},
          {"effect_first_pos", p.effect_first_pos},
          {"second_pos_discount", p.second_pos_discount},
          {"platform_share", p.platform_share},
          {"top_two_share", p.top_two_share}};
}

void parse_collective(const json& j, CollectiveSpec& c) {
  Reader r(j, "collective");
  r.get("weights", c.weights);
  r.get("signal", c.signal);
  r.get("target_label", c.target_label);
  r.get("alphas", c.alphas);
  r.get("baseline", c.baseline);
  r.get("beta_perf", c.beta_perf);
  r.finish();
  for (std::size_t i = 0; i < c.alphas.size(); ++i) {
    try {
      parse_fraction(c.alphas[i]);
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("collective.alphas[{}]", i), e.what());
    }
  }
}

json collective_json(const CollectiveSpec& c) {
  return {{"weights", c.weights},       {"signal", c.signal},     {"target_label", c.target_label},
          {"alphas", c.alphas},         {"baseline", c.baseline}, {"beta_perf", c.beta_perf}};
}

void parse_gms(const json& j, GmsSpec& g) {
  Reader r(j, "gms");
  r.get("type", g.type);
  r.get("coefficients", g.coefficients);
  r.get("knots", g.knots);
  r.get("values", g.values);
  r.get("tol", g.tol);
  r.finish();
}

json gms_json(const GmsSpec& g) {
  return {{"type", g.type}, {"coefficients", g.coefficients}, {"knots", g.knots}, {"values", g.values},
          {"tol", g.tol}};
}

void parse_param_set(const json& j, ParamSetSpec& p) {
  Reader r(j, "theta_set");
  r.get("type", p.type);
  r.get("lo", p.lo);
  r.get("hi", p.hi);
  r.get("center", p.center);
  r.get("radius", p.radius);
  r.finish();
}

json param_set_json(const ParamSetSpec& p) {
  json j{{"type", p.type}};
  if (p.type == "box") {
    j["lo"] = p.lo;
    j["hi"] = p.hi;
  } else if (p.type == "ball") {
    j["center"] = p.center;
    j["radius"] = p.radius;
  }
  return j;
}

}  // namespace

// ---- parse / serialize ----------------------------------------------------------------

ExperimentConfig parse_config(const json& j) {
  Reader r(j, "");
  ExperimentConfig c;
  std::string kind = "solver";
  r.get("kind", kind);
  c.kind = kind_from_string(kind, "kind");
  r.get("name", c.name);
  r.get("seeds", c.seeds);
  r.get("output_dir", c.output_dir);
  r.get("workers", c.workers);
  r.get("checks", c.checks);
  r.get("theta0", c.theta0);
  if (r.has("map")) c.map = parse_map(r.child("map"), "map");
  if (r.has("loss")) {
    Reader l(r.child("loss"), "loss");
    l.get("type", c.loss.type);
    l.get("lambda", c.loss.lambda);
    l.finish();
  }
  if (r.has("theta_set")) parse_param_set(r.child("theta_set"), c.theta_set);
  if (r.has("solver")) parse_solver(r.child("solver"), c.solver);
  if (r.has("bandit")) parse_bandit(r.child("bandit"), c.bandit);
  if (r.has("power")) parse_power(r.child("power"), c.power);
  if (r.has("collective")) parse_collective(r.child("collective"), c.collective);
  if (r.has("gms")) parse_gms(r.child("gms"), c.gms);
  if (r.has("sweep")) {
    Reader s(r.child("sweep"), "sweep");
    if (s.has("base")) {
      try {
        c.sweep_base = std::make_shared<ExperimentConfig>(parse_config(s.child("base")));
      } catch (const ConfigError& e) {
        throw ConfigError(join("sweep.base", e.field()), e.what());
      }
    }
    if (s.has("parameters")) {
      const json& params = s.child("parameters");
      if (!params.is_object()) throw ConfigError("sweep.parameters", "expected an object");
      for (const auto& [path, values] : params.items()) {
        if (!values.is_array() || values.empty())
          throw ConfigError("sweep.parameters." + path, "expected a nonempty array of values");
        c.sweep.parameters[path] = values.get<std::vector<json>>();
      }
    }
    s.get("max_runs", c.sweep.max_runs);
    s.finish();
  }
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", fmt::format("cannot open config file '{}'", path.string()));
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("", fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = std::string(to_string(c.kind));
  j["name"] = c.name;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["checks"] = c.checks;
  switch (c.kind) {
    case ExperimentKind::solver:
      j["map"] = map_json(c.map);
      j["loss"] = {{"type", c.loss.type}, {"lambda", c.loss.lambda}};
      j["theta_set"] = param_set_json(c.theta_set);
      j["theta0"] = c.theta0;
      j["solver"] = solver_json(c.solver);
      break;
    case ExperimentKind::bandit:
      j["map"] = map_json(c.map);
      j["loss"] = {{"type", c.loss.type}, {"lambda", c.loss.lambda}};
      j["theta_set"] = param_set_json(c.theta_set);
      j["bandit"] = bandit_json(c.bandit);
      break;
    case ExperimentKind::power:
      j["power"] = power_json(c.power);
      break;
    case ExperimentKind::collective:
      j["collective"] = collective_json(c.collective);
      break;
    case ExperimentKind::gms:
      j["gms"] = gms_json(c.gms);
      break;
    case ExperimentKind::sweep: {
      json s;
      if (c.sweep_base) s["base"] = to_json(*c.sweep_base);
      json params = json::object();
      for (const auto& [path, values] : c.sweep.parameters) params[path] = values;
      s["parameters"] = params;
      s["max_runs"] = c.sweep.max_runs;
      j["sweep"] = s;
      break;
    }
  }
  return j;
}

std::string serialize(const ExperimentConfig& config) { return to_json(config).dump(2) + "\n"; }

std::string config_digest(const ExperimentConfig& config) { return digest_hex(to_json(config).dump()); }

// ---- validation ------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (workers < 1) throw ConfigError("workers", "must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

  static const std::map<ExperimentKind, std::set<std::string>> known = {
      {ExperimentKind::solver,
       {"rrm_ratio", "rrm_contraction", "rgd_bias", "rgd_angle", "sgd_bound", "lazy_slope",
        "divergence", "finite"}},
      {ExperimentKind::bandit, {"ucb_validity", "best_arm_kept", "elimination_sound", "regret_vs_uniform"}},
      {ExperimentKind::power, {"power_bound", "decomposition"}},
      {ExperimentKind::collective, {"success_bound", "revenue_identity", "half_beta", "bayes_optimal"}},
      {ExperimentKind::gms, {"residual"}},
      {ExperimentKind::sweep, {}},
  };
  for (std::size_t i = 0; i < checks.size(); ++i)
    if (!known.at(kind).count(checks[i]))
      throw ConfigError(fmt::format("checks[{}]", i),
                        fmt::format("'{}' is not a check for kind '{}'", checks[i], to_string(kind)));

  auto check_model = [&]() {
    const Index d = map_param_dim(map);
    if (d < 1) throw ConfigError("map", "cannot determine the parameter dimension");
    try {
      make_map(map);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("map", e.what());
    }
    try {
      make_loss(loss, d);
    } catch (const std::exception& e) {
      throw ConfigError("loss", e.what());
    }
    try {
      make_param_set(theta_set, d);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("theta_set", e.what());
    }
    return d;
  };

  switch (kind) {
    case ExperimentKind::solver: {
      const Index d = check_model();
      if (static_cast<Index>(theta0.size()) != d)
        throw ConfigError("theta0", fmt::format("expected {} coordinates, got {}", d, theta0.size()));
      if (solver.kind == "gms_bisect")
        throw ConfigError("solver.kind", "gms_bisect runs as kind 'gms'");
      try {
        make_solver_config(solver, make_param_set(theta_set, d), 0).validate();
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError("solver", e.what());
      }
      for (double dt : solver.delta_targets)
        if (!(dt > 0.0)) throw ConfigError("solver.delta_targets", "targets must be > 0");
      break;
    }
    case ExperimentKind::bandit: {
      check_model();
      if (theta_set.type != "box") throw ConfigError("theta_set.type", "bandit needs a box");
      if (!(bandit.spacing > 0.0)) throw ConfigError("bandit.spacing", "must be > 0");
      if (bandit.horizon < 1) throw ConfigError("bandit.horizon", "must be >= 1");
      if (!(bandit.delta_conf > 0.0 && bandit.delta_conf < 1.0))
        throw ConfigError("bandit.delta_conf", "must lie in (0, 1)");
      break;
    }
    case ExperimentKind::power:
      try {
        const auto platform = make_platform(power);
        for (const auto& name : power.probes)
          if (name == "demote") power::demote_first(platform);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError("power", e.what());
      }
      for (double f : power.subpopulation_fractions)
        if (!(f > 0.0 && f <= 1.0))
          throw ConfigError("power.subpopulation_fractions", "fractions must lie in (0, 1]");
      if (power.probes.empty()) throw ConfigError("power.probes", "probe set is empty");
      if (std::find(power.probes.begin(), power.probes.end(), "demote") != power.probes.end() &&
          power.scores.size() < 3)
        throw ConfigError("power.probes", "'demote' needs at least three items");
      break;
    case ExperimentKind::collective: {
      try {
        const auto pop = collective::TabularPopulation::from_weights(collective.weights);
        for (const auto& a : collective.alphas) {
          collective::SignalPlan plan{collective.signal, collective.target_label, parse_fraction(a)};
          plan.validate(pop.domain_size());
        }
      } catch (const std::exception& e) {
        throw ConfigError("collective", e.what());
      }
      if (!collective.baseline.empty() && collective.baseline.size() != collective.weights.size())
        throw ConfigError("collective.baseline", "needs one value per feature");
      break;
    }
    case ExperimentKind::gms:
      try {
        make_response(gms);
      } catch (const std::exception& e) {
        throw ConfigError("gms", e.what());
      }
      if (!(gms.tol > 0.0)) throw ConfigError("gms.tol", "must be > 0");
      break;
    case ExperimentKind::sweep: {
      if (!sweep_base) throw ConfigError("sweep.base", "missing base experiment");
      if (sweep_base->kind == ExperimentKind::sweep)
        throw ConfigError("sweep.base.kind", "nested sweeps are not supported");
      if (sweep.parameters.empty()) throw ConfigError("sweep.parameters", "no parameters to sweep");
      break;
    }
  }
}

// ---- instantiation -------------------------------------------------------------------------

namespace {

BaseCoordinate make_coordinate(const CoordinateSpec& c) {
  if (c.dist == "gaussian") return BaseCoordinate::gaussian(c.a, c.b);
  if (c.dist == "uniform") return BaseCoordinate::uniform(c.a, c.b);
  if (c.dist == "point") return BaseCoordinate::point(c.a);
  throw ConfigError("dist", fmt::format("unknown distribution '{}'", c.dist));
}

std::vector<BaseCoordinate> make_coordinates(const std::vector<CoordinateSpec>& cs) {
  std::vector<BaseCoordinate> out;
  for (const auto& c : cs) out.push_back(make_coordinate(c));
  return out;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows, const std::string& field) {
  if (rows.empty()) throw ConfigError(field, "matrix has no rows");
  const auto cols = rows.front().size();
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw ConfigError(field, "ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  }
  return m;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

std::unique_ptr<DistributionMap> make_map(const MapSpec& spec) {
  return std::visit(
      [](const auto& m) -> std::unique_ptr<DistributionMap> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Qb1MapSpec>) {
          if (!(m.s >= 0.0)) throw ConfigError("map.s", "must be >= 0");
          Matrix mu(2, 1);
          mu << 0.0, m.a;
          const BaseCoordinate noise = m.noise == "uniform" ? BaseCoordinate::uniform(m.b - m.s, m.b + m.s)
                                                            : BaseCoordinate::gaussian(m.b, m.s);
          return std::make_unique<LocationScaleMap>(
              std::vector<BaseCoordinate>{BaseCoordinate::point(1.0), noise}, mu);
        } else if constexpr (std::is_same_v<T, LocationScaleMapSpec>) {
          return std::make_unique<LocationScaleMap>(make_coordinates(m.base), to_matrix(m.mu, "map.mu"));
        } else if constexpr (std::is_same_v<T, MixtureMapSpec>) {
          std::vector<GaussianMixtureMeanShiftMap::Component> comps;
          for (const auto& c : m.components)
            comps.push_back({c.weight, to_vector(c.offset), to_matrix(c.shift, "map.components.shift"),
                             to_vector(c.std_dev)});
          return std::make_unique<GaussianMixtureMeanShiftMap>(std::move(comps));
        } else if constexpr (std::is_same_v<T, StrategicMapSpec>) {
          return std::make_unique<StrategicResponseMap>(make_coordinates(m.base_x), m.eta,
                                                        to_vector(m.label_weights), m.label_threshold);
        } else {
          return std::make_unique<OutcomePerformativityMap>(
              make_coordinates(m.base_x), to_vector(m.outcome_weights), m.kappa, m.noise_sd);
        }
      },
      spec);
}

std::unique_ptr<LossModel> make_loss(const LossSpec& spec, Index dim) {
  if (spec.type == "quadratic") return std::make_unique<QuadraticLoss>(spec.lambda, dim);
  if (spec.type == "logistic") return std::make_unique<LogisticLoss>(spec.lambda, dim);
  throw ConfigError("loss.type", fmt::format("unknown loss '{}'", spec.type));
}

ParamSet make_param_set(const ParamSetSpec& spec, Index dim) {
  if (spec.type == "unbounded") return ParamSet::unbounded(dim);
  if (spec.type == "box") {
    if (static_cast<Index>(spec.lo.size()) != dim || static_cast<Index>(spec.hi.size()) != dim)
      throw ConfigError("theta_set", fmt::format("box bounds need {} coordinates", dim));
    return ParamSet::box(to_vector(spec.lo), to_vector(spec.hi));
  }
  if (spec.type == "ball") {
    if (static_cast<Index>(spec.center.size()) != dim)
      throw ConfigError("theta_set.center", fmt::format("needs {} coordinates", dim));
    return ParamSet::ball(to_vector(spec.center), spec.radius);
  }
  throw ConfigError("theta_set.type", fmt::format("unknown parameter set '{}'", spec.type));
}

SolverConfig make_solver_config(const SolverSpec& s, const ParamSet& theta_set, std::uint64_t seed) {
  SolverConfig c;
  try {
    c.kind = solver_kind_from_string(s.kind);
  } catch (const std::exception& e) {
    throw ConfigError("solver.kind", e.what());
  }
  try {
    c.stepsize = stepsize_policy_from_string(s.stepsize);
  } catch (const std::exception& e) {
    throw ConfigError("solver.stepsize", e.what());
  }
  c.max_steps = s.max_steps;
  c.step = s.step;
  c.lazy_alpha = s.lazy_alpha;
  c.lazy_scale = s.lazy_scale;
  c.inner_tol = s.inner_tol;
  c.inner_max_iter = s.inner_max_iter;
  c.theta_set = theta_set;
  c.seed = seed;
  c.strict = s.strict;
  c.batch_size = s.batch_size;
  c.pr_samples = s.pr_samples;
  c.record_every = s.record_every;
  c.max_samples = s.max_samples;
  c.zo_radius = s.zo_radius;
  return c;
}

ScalarResponse make_response(const GmsSpec& spec) {
  if (spec.type == "affine") {
    if (spec.coefficients.size() != 2)
      throw ConfigError("gms.coefficients", "affine needs [intercept, slope]");
    return ScalarResponse::affine(spec.coefficients[0], spec.coefficients[1]);
  }
  if (spec.type == "polynomial") return ScalarResponse::polynomial(spec.coefficients);
  if (spec.type == "piecewise_linear") return ScalarResponse::piecewise_linear(spec.knots, spec.values);
  throw ConfigError("gms.type", fmt::format("unknown response family '{}'", spec.type));
}

power::Platform make_platform(const PowerSpec& spec) {
  std::vector<power::Viewer> viewers;
  for (const auto& g : spec.viewers)
    for (std::size_t i = 0; i < g.count; ++i) viewers.push_back({g.p1, g.p2, g.affinity});
  if (viewers.empty()) throw ConfigError("power.viewers", "population is empty");
  return power::Platform(spec.scores, std::move(viewers), spec.budget);
}

collective::Rational parse_fraction(const std::string& text) {
  using collective::Rational;
  using boost::multiprecision::cpp_int;
  auto parse_int = [&text](const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument(fmt::format("'{}' is not a fraction or decimal", text));
    return cpp_int(s.find_first_not_of('0') == std::string::npos ? "0" : s.substr(s.find_first_not_of('0')));
  };
  if (const auto slash = text.find('/'); slash != std::string::npos) {
    const cpp_int num = parse_int(text.substr(0, slash));
    const cpp_int den = parse_int(text.substr(slash + 1));
    if (den == 0) throw std::invalid_argument(fmt::format("'{}' has a zero denominator", text));
    return Rational(num, den);
  }
  const auto dot = text.find('.');
  if (dot == std::string::npos) return Rational(parse_int(text));
  const std::string whole = text.substr(0, dot);
  const std::string frac = text.substr(dot + 1);
  cpp_int scale = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
  return Rational(parse_int(whole.empty() ? "0" : whole) * scale + parse_int(frac.empty() ? "0" : frac),
                  scale);
}

}  // namespace perfpred::experiment
