#include "dynpred/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "dynpred/csv.hpp"
#include "dynpred/error.hpp"
#include "dynpred/quadrature.hpp"
#include "dynpred/serialize.hpp"

namespace dynpred {

std::string to_string(LinkForm form) {
  switch (form) {
    case LinkForm::Linear: return "linear";
    case LinkForm::Interactions: return "interactions";
    case LinkForm::Nonlinear: return "nonlinear";
  }
  return "linear";
}

LinkForm parse_link_form(const std::string& s) {
  if (s == "linear") return LinkForm::Linear;
  if (s == "interactions") return LinkForm::Interactions;
  if (s == "nonlinear") return LinkForm::Nonlinear;
  throw ConfigError("unknown scenario link '" + s + "' (expected linear, interactions or nonlinear)");
}

std::string to_string(Transform t) {
  switch (t) {
    case Transform::Identity: return "identity";
    case Transform::Square: return "square";
    case Transform::Cube: return "cube";
    case Transform::Indicator: return "indicator";
  }
  return "identity";
}

void ScenarioSpec::validate() const {
  if (n_subjects < 1) throw ConfigError("simulation needs at least one subject");
  if (n_active < 0 || n_active > 92) throw ConfigError("n_active must be in [0, 92]");
  if (!(t_lm > 0.0) || !(t_hor > 0.0)) throw ConfigError("simulation landmark and horizon must be positive");
  if (!(weibull_shape > 0.0)) throw ConfigError("Weibull shape must be positive");
  if (weibull_scale < 0.0) throw ConfigError("Weibull scale must be positive (or 0 to calibrate)");
  if (!(null_event_fraction > 0.0 && null_event_fraction < 1.0))
    throw ConfigError("null_event_fraction must be in (0, 1)");
  if (!(censoring_fraction >= 0.0 && censoring_fraction < 1.0))
    throw ConfigError("censoring_fraction must be in [0, 1)");
  if (eta_sd < 0.0 || noise_sd < 0.0 || visit_sd < 0.0) throw ConfigError("simulation SDs must be non-negative");
}

namespace {

constexpr int kDegrees[17] = {0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3};
constexpr double kReSd[4] = {1.0, 0.3, 0.08, 0.02};
constexpr double kBetaRange[4] = {2.0, 0.5, 0.1, 0.02};
constexpr int kCovariates = 10;

// Row j of the returned matrix maps a marker's coefficient vector (beta + b)
// to its j-th summary: random effects, level, slope, cumulative level.
Eigen::MatrixXd summary_map(int degree, double window) {
  const int q = degree + 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(q + 3, q);
  for (int j = 0; j < q; ++j) a(j, j) = 1.0;
  a(q, 0) = 1.0;
  if (q > 1) a(q + 1, 1) = 1.0;
  for (int j = 0; j < q; ++j) a(q + 2, j) = std::pow(-1.0, j) * std::pow(window, j + 1) / (j + 1);
  return a;
}

double apply_transform(Transform t, double z) {
  switch (t) {
    case Transform::Identity: return z;
    case Transform::Square: return (z * z - 1.0) / std::sqrt(2.0);
    case Transform::Cube: return z * z * z / std::sqrt(15.0);
    case Transform::Indicator: return z > 0.0 ? 1.0 : -1.0;
  }
  return z;
}

std::vector<Eigen::VectorXd> draw_random_effects(const ScenarioDesign& d, std::mt19937_64& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  std::vector<Eigen::VectorXd> b;
  for (const auto& m : d.markers) {
    Eigen::VectorXd v(m.degree + 1);
    for (int j = 0; j <= m.degree; ++j) v[j] = m.re_sd[j] * norm(rng);
    b.push_back(v);
  }
  return b;
}

// Active terms after standardization and transform.
Eigen::VectorXd active_terms(const ScenarioDesign& d, const Eigen::Ref<const Eigen::VectorXd>& gamma0,
                             LinkForm form) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(d.active.size()));
  for (std::size_t a = 0; a < d.active.size(); ++a) {
    const int c = d.active[a];
    const double z = (gamma0[c] - d.summary_mean[c]) / d.summary_sd[c];
    t[static_cast<Eigen::Index>(a)] = form == LinkForm::Nonlinear ? apply_transform(d.transforms[a], z) : z;
  }
  return t;
}

double summary_part(const ScenarioDesign& d, const Eigen::VectorXd& terms, LinkForm form) {
  double eta = d.nu.size() ? terms.dot(d.nu) : 0.0;
  if (form == LinkForm::Interactions)
    for (std::size_t k = 0; k < d.interactions.size(); ++k)
      eta += d.interaction_coef[static_cast<Eigen::Index>(k)] * terms[d.interactions[k].first] *
             terms[d.interactions[k].second];
  return eta;
}

double stddev(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

ScenarioDesign make_scenario_design(const ScenarioSpec& spec) {
  spec.validate();
  ScenarioDesign d;
  std::mt19937_64 rng(spec.design_seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const double window = spec.t_lm;

  std::vector<double> mean, sd;
  for (int k = 0; k < 17; ++k) {
    MarkerDesign m;
    m.name = "y" + std::to_string(k + 1);
    m.degree = kDegrees[k];
    m.beta.resize(m.degree + 1);
    m.re_sd.resize(m.degree + 1);
    for (int j = 0; j <= m.degree; ++j) {
      m.beta[j] = kBetaRange[j] * unif(rng);
      m.re_sd[j] = kReSd[j];
    }
    const Eigen::MatrixXd a = summary_map(m.degree, window);
    const Eigen::VectorXd mu = a * m.beta;
    const Eigen::MatrixXd cov = a * m.re_sd.cwiseAbs2().asDiagonal() * a.transpose();
    for (int j = 0; j <= m.degree; ++j) d.summary_names.push_back(m.name + ".b" + std::to_string(j));
    d.summary_names.push_back(m.name + ".level");
    d.summary_names.push_back(m.name + ".slope");
    d.summary_names.push_back(m.name + ".cumulative");
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      mean.push_back(mu[r]);
      sd.push_back(std::sqrt(std::max(0.0, cov(r, r))));
    }
    d.markers.push_back(std::move(m));
  }
  d.summary_mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  d.summary_sd = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  for (int c = 1; c <= kCovariates; ++c) d.covariate_names.push_back("x" + std::to_string(c));

  // Active set among the non-degenerate summaries, in draw order.
  std::vector<int> pool;
  for (Eigen::Index c = 0; c < d.summary_sd.size(); ++c)
    if (d.summary_sd[c] > 0.0) pool.push_back(static_cast<int>(c));
  std::shuffle(pool.begin(), pool.end(), rng);
  const int n_active = std::min<int>(spec.n_active, static_cast<int>(pool.size()));
  d.active.assign(pool.begin(), pool.begin() + n_active);
  std::uniform_int_distribution<int> pick_transform(1, 3);
  std::bernoulli_distribution coin(0.5);
  d.nu.resize(n_active);
  for (int a = 0; a < n_active; ++a) {
    d.transforms.push_back(static_cast<Transform>(pick_transform(rng)));
    d.nu[a] = coin(rng) ? 1.0 : -1.0;
  }
  const int half = n_active / 2;
  for (int a = 0; a < half; ++a)
    for (int b = a + 1; b < half; ++b) d.interactions.emplace_back(a, b);
  d.interaction_coef.resize(static_cast<Eigen::Index>(d.interactions.size()));
  for (Eigen::Index k = 0; k < d.interaction_coef.size(); ++k) d.interaction_coef[k] = coin(rng) ? 1.0 : -1.0;

  // Scale coefficients so the summary part has SD eta_sd in the population
  // (and, with interactions, both parts contribute equal variance).
  if (n_active > 0 && spec.eta_sd > 0.0) {
    std::mt19937_64 cal(spec.design_seed ^ 0x9e3779b97f4a7c15ull);
    const int draws = 20000;
    std::vector<double> lin(draws), inter(draws);
    for (int i = 0; i < draws; ++i) {
      const auto b = draw_random_effects(d, cal);
      const Eigen::VectorXd terms = active_terms(d, true_summaries(d, b, spec.t_lm), spec.link);
      lin[static_cast<std::size_t>(i)] = terms.dot(d.nu);
      double x = 0.0;
      for (std::size_t k = 0; k < d.interactions.size(); ++k)
        x += d.interaction_coef[static_cast<Eigen::Index>(k)] * terms[d.interactions[k].first] *
             terms[d.interactions[k].second];
      inter[static_cast<std::size_t>(i)] = x;
    }
    const bool with_inter = spec.link == LinkForm::Interactions && !d.interactions.empty();
    const double share = with_inter ? spec.eta_sd / std::sqrt(2.0) : spec.eta_sd;
    d.nu *= share / stddev(lin);
    if (with_inter)
      d.interaction_coef *= share / stddev(inter);
    else
      d.interaction_coef.setZero();
  } else {
    d.nu.setZero();
    d.interaction_coef.setZero();
  }
  d.xi = Eigen::VectorXd::Zero(kCovariates);
  d.xi[0] = spec.covariate_effect;
  d.xi[5] = spec.covariate_effect;

  d.weibull_scale = spec.weibull_scale;
  if (d.weibull_scale == 0.0) {
    const double k = spec.weibull_shape;
    const double delta = -std::log(1.0 - spec.null_event_fraction);
    d.weibull_scale = std::pow((std::pow(spec.t_lm + spec.t_hor, k) - std::pow(spec.t_lm, k)) / delta, 1.0 / k);
  }
  return d;
}

Eigen::VectorXd true_summaries(const ScenarioDesign& design, const std::vector<Eigen::VectorXd>& b, double t_lm) {
  if (b.size() != design.markers.size()) throw std::invalid_argument("true_summaries: one vector per marker");
  Eigen::VectorXd out(static_cast<Eigen::Index>(design.summary_names.size()));
  Eigen::Index c = 0;
  for (std::size_t k = 0; k < design.markers.size(); ++k) {
    const auto& m = design.markers[k];
    const Eigen::MatrixXd a = summary_map(m.degree, t_lm);
    const Eigen::VectorXd beta_b = m.beta + b[k];
    // Random effects enter as deviations; the trajectory summaries use beta + b.
    for (int j = 0; j <= m.degree; ++j) out[c++] = b[k][j];
    const Eigen::VectorXd s = a.bottomRows(3) * beta_b;
    for (Eigen::Index r = 0; r < 3; ++r) out[c++] = s[r];
  }
  return out;
}

double scenario_link(const ScenarioDesign& design, const Eigen::Ref<const Eigen::VectorXd>& gamma0,
                     const Eigen::Ref<const Eigen::VectorXd>& x0, LinkForm form) {
  double eta = summary_part(design, active_terms(design, gamma0, form), form);
  for (Eigen::Index j = 0; j < x0.size() && j < design.xi.size(); ++j) {
    if (design.xi[j] == 0.0) continue;
    // x1..x5 are standard normal, x6..x10 Bernoulli(1/2); both enter standardized.
    const double z = j < 5 ? x0[j] : (x0[j] - 0.5) / 0.5;
    eta += design.xi[j] * z;
  }
  return eta;
}

double true_probability(double eta, double t_lm, double t_hor, double shape, double scale) {
  const double h = std::pow((t_lm + t_hor) / scale, shape) - std::pow(t_lm / scale, shape);
  return -std::expm1(-std::exp(eta) * h);
}

double true_probability(const ScenarioSpec& spec, const ScenarioDesign& design, double eta) {
  return true_probability(eta, spec.t_lm, spec.t_hor, spec.weibull_shape, design.weibull_scale);
}

GeneratedCohort simulate_cohort(const ScenarioSpec& spec) { return simulate_cohort(spec, make_scenario_design(spec)); }

GeneratedCohort simulate_cohort(const ScenarioSpec& spec, const ScenarioDesign& design) {
  spec.validate();
  const int n = spec.n_subjects;
  const double k = spec.weibull_shape, s = design.weibull_scale;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution bern(0.5);

  GeneratedCohort g;
  g.gamma0.resize(n, static_cast<Eigen::Index>(design.summary_names.size()));
  g.x0.resize(n, kCovariates);
  g.longitudinal.marker_names.clear();
  for (const auto& m : design.markers) {
    g.longitudinal.marker_names.push_back(m.name);
    g.longitudinal.natures.push_back(MarkerNature::Continuous);
  }
  g.survival.covariate_names = design.covariate_names;
  std::vector<double> censor_u(static_cast<std::size_t>(n));
  const int width = std::max(4, static_cast<int>(std::to_string(n).size()));

  for (int i = 0; i < n; ++i) {
    std::string id = std::to_string(i + 1);
    id = "s" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    g.subject_ids.push_back(id);

    const auto b = draw_random_effects(design, rng);
    std::vector<MarkerSeries> series(design.markers.size());
    for (std::size_t mk = 0; mk < design.markers.size(); ++mk) {
      const auto& m = design.markers[mk];
      const Eigen::VectorXd coef = m.beta + b[mk];
      for (int v = -4; v <= 0; ++v) {
        const double t = spec.t_lm + v + spec.visit_sd * norm(rng);
        const double noise = spec.noise_sd * norm(rng);
        if (t > spec.t_lm) continue;
        const double u = t - spec.t_lm;
        double y = 0.0, p = 1.0;
        for (int j = 0; j <= m.degree; ++j, p *= u) y += coef[j] * p;
        series[mk].push_back({t, y + noise});
      }
      std::sort(series[mk].begin(), series[mk].end(),
                [](const Observation& a, const Observation& c) { return a.time < c.time; });
    }
    g.longitudinal.series[id] = std::move(series);

    Eigen::VectorXd x(kCovariates);
    for (int j = 0; j < 5; ++j) x[j] = norm(rng);
    for (int j = 5; j < kCovariates; ++j) x[j] = bern(rng) ? 1.0 : 0.0;
    g.x0.row(i) = x.transpose();
    const Eigen::VectorXd gam = true_summaries(design, b, spec.t_lm);
    g.gamma0.row(i) = gam.transpose();
    const double eta = scenario_link(design, gam, x, spec.link);
    g.eta.push_back(eta);
    g.pi0.push_back(true_probability(spec, design, eta));

    // Residual event time by inverting the conditional Weibull survival.
    const double uu = std::max(unif(rng), 1e-300);
    const double tk = std::pow(spec.t_lm / s, k) - std::log(uu) * std::exp(-eta);
    g.event_times.push_back(s * std::pow(tk, 1.0 / k) - spec.t_lm);
    censor_u[static_cast<std::size_t>(i)] = unif(rng);
  }

  // Uniform censoring on (0, c_max): bisection so the expected share censored
  // before min(T, t_hor) matches the target.
  auto censored_share = [&](double c) {
    double total = 0.0;
    const double upper = std::min(spec.t_hor, c);
    for (double eta : g.eta) {
      auto surv = [&](double u) {
        return std::exp(-std::exp(eta) * (std::pow((spec.t_lm + u) / s, k) - std::pow(spec.t_lm / s, k)));
      };
      total += integrate(surv, 0.0, upper, {}, 32) / c;
    }
    return total / static_cast<double>(g.eta.size());
  };
  double c_max = std::numeric_limits<double>::infinity();
  if (spec.censoring_fraction > 0.0) {
    double lo = std::log(1e-3), hi = std::log(1e6);
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (censored_share(std::exp(mid)) > spec.censoring_fraction ? lo : hi) = mid;
    }
    c_max = std::exp(0.5 * (lo + hi));
  }
  g.censoring_max = c_max;

  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double c = std::isfinite(c_max) ? censor_u[ui] * c_max : std::numeric_limits<double>::infinity();
    g.censoring_times.push_back(c);
    SurvivalRecord r;
    r.subject_id = g.subject_ids[ui];
    const double t = g.event_times[ui];
    r.event = t <= c ? 1 : 0;
    r.t_obs = spec.t_lm + std::min(t, c);
    for (int j = 0; j < kCovariates; ++j) r.covariates.push_back(g.x0(i, j));
    g.survival.records.push_back(std::move(r));
  }
  return g;
}

std::vector<MarkerConfig> simulation_marker_configs(const ScenarioDesign& design, double t_lm) {
  std::vector<MarkerConfig> out;
  for (const auto& m : design.markers) {
    MarkerConfig c;
    c.name = m.name;
    c.nature = MarkerNature::Continuous;
    c.spec.fixed = BasisSpec::polynomial(m.degree);
    c.spec.random = BasisSpec::polynomial(m.degree);
    c.spec.time_origin = t_lm;
    out.push_back(std::move(c));
  }
  return out;
}

void write_generated_cohort(const GeneratedCohort& cohort, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(directory) / name);
    if (!f) throw DataError("cannot write " + (fs::path(directory) / name).string());
    return f;
  };
  {
    auto f = open("survival.csv");
    f << "id,time,event";
    for (const auto& c : cohort.survival.covariate_names) f << ',' << c;
    f << '\n';
    for (const auto& r : cohort.survival.records) {
      f << r.subject_id << ',' << csv::format_double(r.t_obs) << ',' << r.event;
      for (double v : r.covariates) f << ',' << csv::format_double(v);
      f << '\n';
    }
  }
  {
    auto f = open("longitudinal.csv");
    f << "id,marker,time,value\n";
    for (const auto& id : cohort.subject_ids) {
      const auto& series = cohort.longitudinal.series.at(id);
      for (std::size_t k = 0; k < series.size(); ++k)
        for (const auto& o : series[k])
          f << id << ',' << cohort.longitudinal.marker_names[k] << ',' << csv::format_double(o.time) << ','
            << csv::format_double(o.value) << '\n';
    }
  }
  {
    auto f = open("truth.csv");
    f << "subject,eta,pi0\n";
    for (std::size_t i = 0; i < cohort.subject_ids.size(); ++i)
      f << cohort.subject_ids[i] << ',' << csv::format_double(cohort.eta[i]) << ','
        << csv::format_double(cohort.pi0[i]) << '\n';
  }
}

json scenario_manifest(const ScenarioSpec& spec, const ScenarioDesign& design) {
  json markers = json::array();
  for (const auto& m : design.markers)
    markers.push_back(json{{"name", m.name},
                           {"degree", m.degree},
                           {"beta", vector_to_json(m.beta)},
                           {"random_effect_sd", vector_to_json(m.re_sd)}});
  json active = json::array();
  for (std::size_t a = 0; a < design.active.size(); ++a)
    active.push_back(json{{"summary", design.summary_names[static_cast<std::size_t>(design.active[a])]},
                          {"coefficient", design.nu[static_cast<Eigen::Index>(a)]},
                          {"transform", spec.link == LinkForm::Nonlinear ? to_string(design.transforms[a])
                                                                         : std::string("identity")}});
  json inter = json::array();
  for (std::size_t k = 0; k < design.interactions.size(); ++k)
    if (design.interaction_coef[static_cast<Eigen::Index>(k)] != 0.0)
      inter.push_back(json{{"terms", {design.interactions[k].first, design.interactions[k].second}},
                           {"coefficient", design.interaction_coef[static_cast<Eigen::Index>(k)]}});
  return json{{"generator", "dynpred.simulate"},
              {"reconstructed_defaults", true},
              {"n_subjects", spec.n_subjects},
              {"n_active", spec.n_active},
              {"link", to_string(spec.link)},
              {"t_lm", spec.t_lm},
              {"t_hor", spec.t_hor},
              {"weibull_shape", spec.weibull_shape},
              {"weibull_scale", design.weibull_scale},
              {"null_event_fraction", spec.null_event_fraction},
              {"eta_sd", spec.eta_sd},
              {"covariate_coefficients", vector_to_json(design.xi)},
              {"censoring_fraction", spec.censoring_fraction},
              {"noise_sd", spec.noise_sd},
              {"visit_sd", spec.visit_sd},
              {"design_seed", spec.design_seed},
              {"seed", spec.seed},
              {"markers", markers},
              {"active", active},
              {"interactions", inter}};
}

}  // namespace dynpred
