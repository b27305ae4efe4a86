#include "dynpred/summaries.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dynpred/error.hpp"
#include "dynpred/quadrature.hpp"

namespace dynpred {

double level_at(const MixedModelFit& fit, const Eigen::VectorXd& b, double u) { return fit.linear_predictor(u, b, 0); }

double slope_at(const MixedModelFit& fit, const Eigen::VectorXd& b, double u) { return fit.linear_predictor(u, b, 1); }

double cumulative_level(const MixedModelFit& fit, const Eigen::VectorXd& b, double t_lm, double window) {
  if (!(window > 0.0)) throw ConfigError("cumulative level window must be positive");
  const double a = t_lm - window - fit.time_origin;
  const double c = t_lm - fit.time_origin;
  std::vector<double> breaks = basis_breakpoints(fit.basis_fixed, a, c);
  for (double x : basis_breakpoints(fit.basis_random, a, c)) breaks.push_back(x);
  for (double& x : breaks) x += fit.time_origin;
  return integrate([&](double u) { return level_at(fit, b, u); }, t_lm - window, t_lm, breaks);
}

std::string to_string(SummaryKind kind) {
  switch (kind) {
    case SummaryKind::RandomEffect: return "random-effect";
    case SummaryKind::Level: return "level";
    case SummaryKind::Slope: return "slope";
    case SummaryKind::Cumulative: return "cumulative";
    case SummaryKind::Custom: return "custom";
    case SummaryKind::Covariate: return "covariate";
  }
  return "covariate";
}

Eigen::Index DesignMatrix::find_column(const std::string& name) const {
  for (std::size_t j = 0; j < column_names.size(); ++j)
    if (column_names[j] == name) return static_cast<Eigen::Index>(j);
  return -1;
}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> rows) const {
  DesignMatrix out;
  out.column_names = column_names;
  out.provenance = provenance;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.subject_ids.push_back(subject_ids[rows[i]]);
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(rows[i]));
  }
  out.recompute_moments();
  return out;
}

DesignMatrix DesignMatrix::select_columns(std::span<const std::string> names) const {
  DesignMatrix out;
  out.subject_ids = subject_ids;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto src = find_column(names[j]);
    if (src < 0) throw DataError("design matrix has no column '" + names[j] + "'");
    out.column_names.push_back(names[j]);
    out.provenance.push_back(provenance[static_cast<std::size_t>(src)]);
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(src);
  }
  out.recompute_moments();
  return out;
}

void DesignMatrix::recompute_moments() {
  const Eigen::Index n = values.rows();
  means = n > 0 ? Eigen::VectorXd(values.colwise().mean().transpose()) : Eigen::VectorXd::Zero(values.cols());
  sds.resize(values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const double ss = n > 1 ? (values.col(j).array() - means[j]).square().sum() / static_cast<double>(n - 1) : 0.0;
    sds[j] = std::sqrt(ss);
  }
}

DesignMatrix assemble_design(const LandmarkCohort& cohort, std::span<const MixedModelFit> fits,
                             std::span<const SummaryConfig> configs) {
  const std::size_t k_markers = cohort.marker_names.size();
  if (fits.size() != k_markers || configs.size() != k_markers)
    throw ConfigError("assemble_design: one fit and one summary config per marker are required");

  DesignMatrix d;
  for (std::size_t k = 0; k < k_markers; ++k) {
    const auto& name = cohort.marker_names[k];
    const auto& cfg = configs[k];
    if (cfg.random_effects)
      for (std::size_t j = 0; j < fits[k].n_random(); ++j) {
        d.column_names.push_back(name + ".b" + std::to_string(j));
        d.provenance.push_back({name, SummaryKind::RandomEffect, static_cast<int>(j), false});
      }
    if (cfg.level) {
      d.column_names.push_back(name + ".level");
      d.provenance.push_back({name, SummaryKind::Level, -1, false});
    }
    if (cfg.slope) {
      d.column_names.push_back(name + ".slope");
      d.provenance.push_back({name, SummaryKind::Slope, -1, false});
    }
    if (cfg.cumulative) {
      d.column_names.push_back(name + ".cumulative");
      d.provenance.push_back({name, SummaryKind::Cumulative, -1, false});
    }
    for (const auto& c : cfg.custom) {
      d.column_names.push_back(name + "." + c.name);
      d.provenance.push_back({name, SummaryKind::Custom, -1, false});
    }
  }
  const std::size_t n_summary = d.column_names.size();
  for (std::size_t c = 0; c < cohort.covariate_names.size(); ++c) {
    bool binary = true;
    for (const auto& s : cohort.subjects)
      if (s.covariates[c] != 0.0 && s.covariates[c] != 1.0) binary = false;
    d.column_names.push_back(cohort.covariate_names[c]);
    d.provenance.push_back({cohort.covariate_names[c], SummaryKind::Covariate, -1, binary});
  }
  std::set<std::string> unique(d.column_names.begin(), d.column_names.end());
  if (unique.size() != d.column_names.size()) throw DataError("design matrix has duplicate column names");

  const auto n = static_cast<Eigen::Index>(cohort.subjects.size());
  d.values.resize(n, static_cast<Eigen::Index>(d.column_names.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = cohort.subjects[static_cast<std::size_t>(i)];
    d.subject_ids.push_back(s.subject_id);
    Eigen::Index col = 0;
    for (std::size_t k = 0; k < k_markers; ++k) {
      const auto& fit = fits[k];
      const auto& cfg = configs[k];
      const double window = cfg.window.value_or(cohort.t_lm);
      const Eigen::VectorXd b = predict_random_effects(fit, s.markers[k]);
      if (cfg.random_effects)
        for (Eigen::Index j = 0; j < b.size(); ++j) d.values(i, col++) = b[j];
      if (cfg.level) d.values(i, col++) = level_at(fit, b, cohort.t_lm);
      if (cfg.slope) d.values(i, col++) = slope_at(fit, b, cohort.t_lm);
      if (cfg.cumulative) d.values(i, col++) = cumulative_level(fit, b, cohort.t_lm, window);
      for (const auto& c : cfg.custom) d.values(i, col++) = c.compute(fit, b, cohort.t_lm, window);
    }
    for (std::size_t c = 0; c < cohort.covariate_names.size(); ++c) d.values(i, col++) = s.covariates[c];
    (void)n_summary;
  }
  d.recompute_moments();
  return d;
}

void write_design_csv(const DesignMatrix& design, const std::string& csv_path, const std::string& provenance_path) {
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write " + csv_path);
  out << "id";
  for (const auto& c : design.column_names) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    out << design.subject_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < design.cols(); ++j) out << ',' << csv::format_double(design.values(i, j));
    out << '\n';
  }

  nlohmann::json prov = nlohmann::json::array();
  for (std::size_t j = 0; j < design.column_names.size(); ++j) {
    const auto& p = design.provenance[j];
    nlohmann::json e{{"column", design.column_names[j]}, {"kind", to_string(p.kind)}};
    if (p.kind == SummaryKind::Covariate) {
      e["covariate"] = p.source;
      e["binary"] = p.binary;
    } else {
      e["marker"] = p.source;
    }
    if (p.index >= 0) e["component"] = p.index;
    prov.push_back(std::move(e));
  }
  std::ofstream pj(provenance_path);
  if (!pj) throw DataError("cannot write " + provenance_path);
  pj << nlohmann::json{{"format", "dynpred.design-provenance"}, {"version", 1}, {"columns", prov}}.dump(2) << '\n';
}

}  // namespace dynpred
