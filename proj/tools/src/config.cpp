#include "config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <dynpred/error.hpp>

namespace dynpred::cli {

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": '" + key + "' has the wrong type");
  }
}

template <class T>
T require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  return get<T>(j, key, where, T{});
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  namespace fs = std::filesystem;
  const fs::path path(p);
  if (path.is_absolute() || base.empty()) return p;
  return (fs::path(base) / path).lexically_normal().string();
}

BasisSpec parse_basis(const json& j, const std::string& where) {
  check_keys(j, where, {"kind", "degree", "knots", "boundary"});
  const auto kind = parse_basis_kind(get<std::string>(j, "kind", where, "polynomial"));
  switch (kind) {
    case BasisKind::None: return BasisSpec::none();
    case BasisKind::Polynomial: return BasisSpec::polynomial(get<int>(j, "degree", where, 1));
    case BasisKind::NaturalSpline: {
      const auto knots = get<std::vector<double>>(j, "knots", where, {});
      const auto boundary = get<std::vector<double>>(j, "boundary", where, {});
      BasisSpec b;
      b.kind = BasisKind::NaturalSpline;
      b.interior_knots = knots;
      if (boundary.size() == 2) {
        b.boundary_lo = boundary[0];
        b.boundary_hi = boundary[1];
        b.validate();
      } else if (!boundary.empty()) {
        throw ConfigError(where + ": 'boundary' must hold two values");
      }
      return b;
    }
  }
  return BasisSpec::polynomial(1);
}

}  // namespace

MarkerConfig parse_marker(const json& j, double t_lm) {
  const std::string where = "marker '" + get<std::string>(j, "name", "marker", "?") + "'";
  check_keys(j, where,
             {"name", "nature", "fixed", "random", "time_origin", "knot_quantiles", "force_zero_random",
              "max_iterations", "summaries"});
  MarkerConfig m;
  m.name = require<std::string>(j, "name", "marker");
  m.nature = parse_marker_nature(get<std::string>(j, "nature", where, "continuous"));
  if (j.contains("fixed")) m.spec.fixed = parse_basis(j.at("fixed"), where + " fixed basis");
  if (j.contains("random")) m.spec.random = parse_basis(j.at("random"), where + " random basis");
  m.spec.time_origin = get<double>(j, "time_origin", where, t_lm);
  m.spec.force_zero_random = get<bool>(j, "force_zero_random", where, false);
  m.spec.max_iterations = get<int>(j, "max_iterations", where, 500);
  m.knot_quantiles = get<std::vector<double>>(j, "knot_quantiles", where, {});
  for (const BasisSpec* b : {&m.spec.fixed, &m.spec.random})
    if (b->kind == BasisKind::NaturalSpline && b->interior_knots.empty() && m.knot_quantiles.empty())
      throw ConfigError(where + ": a natural spline needs 'knots' and 'boundary' or 'knot_quantiles'");
  if (j.contains("summaries")) {
    const auto& s = j.at("summaries");
    check_keys(s, where + " summaries", {"random_effects", "level", "slope", "cumulative", "window"});
    m.summaries.random_effects = get<bool>(s, "random_effects", where, true);
    m.summaries.level = get<bool>(s, "level", where, true);
    m.summaries.slope = get<bool>(s, "slope", where, true);
    m.summaries.cumulative = get<bool>(s, "cumulative", where, true);
    if (s.contains("window")) {
      const double w = get<double>(s, "window", where, t_lm);
      if (!(w > 0.0)) throw ConfigError(where + ": summary window must be positive");
      m.summaries.window = w;
    }
  }
  return m;
}

MethodConfig parse_method(const json& j) {
  if (j.is_string()) return MethodConfig{j.get<std::string>(), json::object()};
  if (!j.is_object() || !j.contains("name") || !j.at("name").is_string())
    throw ConfigError("each method must be a name or an object with a 'name'");
  MethodConfig m{j.at("name").get<std::string>(), json::object()};
  for (const auto& [k, v] : j.items())
    if (k != "name") m.params[k] = v;
  if (!is_registered_method(m.name)) throw ConfigError("unknown method '" + m.name + "'");
  if (m.name == "superlearner" && !m.params.empty()) throw ConfigError("the superlearner takes no parameters");
  if (m.name != "superlearner") (void)make_learner(m, 0);  // validates the parameter block
  return m;
}

ScenarioSpec parse_scenario(const json& j, double t_lm, double t_hor, std::uint64_t seed) {
  const std::string where = "simulation";
  check_keys(j, where,
             {"n_subjects", "n_active", "link", "weibull_shape", "weibull_scale", "null_event_fraction", "eta_sd",
              "covariate_effect", "censoring_fraction", "noise_sd", "visit_sd", "design_seed", "replicates"});
  ScenarioSpec s;
  s.t_lm = t_lm;
  s.t_hor = t_hor;
  s.seed = seed;
  s.n_subjects = get<int>(j, "n_subjects", where, s.n_subjects);
  s.n_active = get<int>(j, "n_active", where, s.n_active);
  s.link = parse_link_form(get<std::string>(j, "link", where, "linear"));
  s.weibull_shape = get<double>(j, "weibull_shape", where, s.weibull_shape);
  s.weibull_scale = get<double>(j, "weibull_scale", where, s.weibull_scale);
  s.null_event_fraction = get<double>(j, "null_event_fraction", where, s.null_event_fraction);
  s.eta_sd = get<double>(j, "eta_sd", where, s.eta_sd);
  s.covariate_effect = get<double>(j, "covariate_effect", where, s.covariate_effect);
  s.censoring_fraction = get<double>(j, "censoring_fraction", where, s.censoring_fraction);
  s.noise_sd = get<double>(j, "noise_sd", where, s.noise_sd);
  s.visit_sd = get<double>(j, "visit_sd", where, s.visit_sd);
  s.design_seed = get<std::uint64_t>(j, "design_seed", where, s.design_seed);
  s.validate();
  return s;
}

RunConfig parse_run_config(json doc, const std::string& base_dir, const Overrides& ov) {
  check_keys(doc, "config",
             {"survival", "longitudinal", "truth", "output_dir", "t_lm", "t_hor", "markers", "marker_defaults",
              "methods", "cv", "seed", "simulation", "require_all_markers"});
  if (ov.survival) doc["survival"] = *ov.survival;
  if (ov.longitudinal) doc["longitudinal"] = *ov.longitudinal;
  if (ov.truth) doc["truth"] = *ov.truth;
  if (ov.output_dir) doc["output_dir"] = *ov.output_dir;
  if (ov.seed) doc["seed"] = *ov.seed;

  RunConfig rc;
  rc.source = doc;
  const std::string where = "config";
  rc.survival = resolve(base_dir, get<std::string>(doc, "survival", where, ""));
  rc.longitudinal = resolve(base_dir, get<std::string>(doc, "longitudinal", where, ""));
  rc.truth = resolve(base_dir, get<std::string>(doc, "truth", where, ""));
  rc.output_dir = resolve(base_dir, get<std::string>(doc, "output_dir", where, rc.output_dir));
  auto& p = rc.pipeline;
  p.t_lm = require<double>(doc, "t_lm", where);
  p.t_hor = require<double>(doc, "t_hor", where);
  if (!(p.t_lm > 0.0)) throw ConfigError("t_lm must be positive");
  if (!(p.t_hor > 0.0)) throw ConfigError("t_hor must be positive");
  p.seed = get<std::uint64_t>(doc, "seed", where, 1);
  rc.landmark.require_all_markers = get<bool>(doc, "require_all_markers", where, true);

  if (doc.contains("simulation")) {
    rc.simulation = parse_scenario(doc.at("simulation"), p.t_lm, p.t_hor, p.seed);
    rc.replicates = get<int>(doc.at("simulation"), "replicates", "simulation", 1);
    if (rc.replicates < 1) throw ConfigError("simulation replicates must be at least 1");
  }

  if (doc.contains("markers")) {
    const auto& mj = doc.at("markers");
    if (mj.is_string() && mj.get<std::string>() == "simulation") {
      if (!rc.simulation) throw ConfigError("markers: \"simulation\" needs a simulation block");
      p.markers = simulation_marker_configs(make_scenario_design(*rc.simulation), p.t_lm);
    } else if (mj.is_array()) {
      for (const auto& m : mj) p.markers.push_back(parse_marker(m, p.t_lm));
      if (p.markers.empty()) throw ConfigError("markers list is empty");
    } else {
      throw ConfigError("markers must be a list or \"simulation\"");
    }
  } else {
    rc.markers_from_data = true;
  }
  rc.marker_defaults = get<json>(doc, "marker_defaults", where, json::object());
  if (!rc.marker_defaults.is_object()) throw ConfigError("marker_defaults must be an object");

  const json methods = get<json>(doc, "methods", where, json::array({"cox-all"}));
  if (!methods.is_array() || methods.empty()) throw ConfigError("methods must be a non-empty list");
  for (const auto& m : methods) p.methods.push_back(parse_method(m));

  if (doc.contains("cv")) {
    const auto& cv = doc.at("cv");
    check_keys(cv, "cv", {"outer_folds", "inner_folds", "replicates", "refit_longitudinal"});
    p.n_outer = get<int>(cv, "outer_folds", "cv", p.n_outer);
    p.n_inner = get<int>(cv, "inner_folds", "cv", p.n_inner);
    p.refit_longitudinal = get<bool>(cv, "refit_longitudinal", "cv", true);
    if (!rc.simulation) rc.replicates = get<int>(cv, "replicates", "cv", 1);
    else if (cv.contains("replicates")) throw ConfigError("with a simulation block, set replicates there");
    if (rc.replicates < 1) throw ConfigError("cv replicates must be at least 1");
  }
  if (p.n_outer < 1) throw ConfigError("outer_folds must be at least 1");
  if (p.has_superlearner() && p.n_inner < 2) throw ConfigError("the superlearner needs inner_folds >= 2");
  return rc;
}

RunConfig load_run_config(const std::string& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(std::move(doc), std::filesystem::path(path).parent_path().string(), overrides);
}

// The output directory does not affect results, so it is left out.
std::string config_hash(const json& doc) {
  json d = doc;
  if (d.is_object()) d.erase("output_dir");
  const std::string s = d.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dynpred::cli
