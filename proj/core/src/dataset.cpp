#include "dynpred/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "dynpred/error.hpp"

namespace dynpred {

namespace {

std::string where(const std::string& source, std::size_t line) {
  return source + ": row at line " + std::to_string(line);
}

std::size_t require_column(const csv::Table& t, const std::string& name, const std::string& source) {
  const auto j = t.column(name);
  if (j == std::string::npos) throw DataError(source + ": missing required column '" + name + "'");
  return j;
}

double parse_number(const std::string& s, const std::string& column, const std::string& source,
                    std::size_t line) {
  double v = 0.0;
  if (!csv::parse_double(s, v) || !std::isfinite(v))
    throw DataError(where(source, line) + ": non-numeric " + column + " '" + s + "'");
  return v;
}

SurvivalTable parse_survival_impl(const csv::Table& t, const std::string& source, bool require_outcome) {
  const auto id_col = require_column(t, "id", source);
  const auto time_col = t.column("time");
  const auto event_col = t.column("event");
  if (require_outcome) {
    require_column(t, "time", source);
    require_column(t, "event", source);
  }

  std::set<std::string> seen_names;
  for (const auto& h : t.header)
    if (!seen_names.insert(h).second) throw DataError(source + ": duplicate column name '" + h + "'");

  // Covariates: every remaining column whose cells all parse as numbers.
  SurvivalTable out;
  std::vector<std::size_t> cov_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j == id_col || j == time_col || j == event_col) continue;
    bool numeric = true;
    for (const auto& row : t.rows) {
      double v;
      if (!csv::parse_double(row[j], v) || !std::isfinite(v)) {
        numeric = false;
        break;
      }
    }
    if (numeric) {
      cov_cols.push_back(j);
      out.covariate_names.push_back(t.header[j]);
    }
  }

  std::set<std::string> ids;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    SurvivalRecord rec;
    rec.subject_id = row[id_col];
    if (rec.subject_id.empty()) throw DataError(where(source, line) + ": empty id");
    if (!ids.insert(rec.subject_id).second)
      throw DataError(where(source, line) + ": duplicate subject id '" + rec.subject_id + "'");
    if (time_col != std::string::npos) {
      rec.t_obs = parse_number(row[time_col], "time", source, line);
      if (require_outcome && !(rec.t_obs > 0.0))
        throw DataError(where(source, line) + ": time must be positive");
    } else {
      rec.t_obs = std::numeric_limits<double>::infinity();
    }
    if (event_col != std::string::npos) {
      const double e = parse_number(row[event_col], "event", source, line);
      if (e != 0.0 && e != 1.0)
        throw DataError(where(source, line) + ": event must be 0 or 1, got '" + row[event_col] + "'");
      rec.event = static_cast<int>(e);
    }
    for (auto j : cov_cols) rec.covariates.push_back(parse_number(row[j], t.header[j], source, line));
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

MarkerNature parse_marker_nature(const std::string& s) {
  if (s == "continuous") return MarkerNature::Continuous;
  if (s == "binary") return MarkerNature::Binary;
  throw ConfigError("unknown marker nature '" + s + "' (expected continuous or binary)");
}

std::string to_string(MarkerNature nature) {
  return nature == MarkerNature::Binary ? "binary" : "continuous";
}

std::size_t LongitudinalTable::marker_index(const std::string& name) const {
  for (std::size_t k = 0; k < marker_names.size(); ++k)
    if (marker_names[k] == name) return k;
  throw DataError("marker '" + name + "' not present in longitudinal data");
}

std::vector<double> LandmarkCohort::residual_times() const {
  std::vector<double> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) out.push_back(s.t_obs - t_lm);
  return out;
}

std::vector<int> LandmarkCohort::events() const {
  std::vector<int> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) out.push_back(s.event);
  return out;
}

SurvivalTable parse_survival(const csv::Table& table, const std::string& source_name) {
  return parse_survival_impl(table, source_name, true);
}

SurvivalTable load_survival(const std::string& path) { return parse_survival(csv::read_file(path), path); }

SurvivalTable parse_covariates(const csv::Table& table, const std::string& source_name) {
  return parse_survival_impl(table, source_name, false);
}

SurvivalTable load_covariates(const std::string& path) {
  return parse_covariates(csv::read_file(path), path);
}

LongitudinalTable parse_longitudinal(const csv::Table& t, const std::string& source,
                                     const std::map<std::string, MarkerNature>& natures) {
  const auto id_col = require_column(t, "id", source);
  const auto marker_col = require_column(t, "marker", source);
  const auto time_col = require_column(t, "time", source);
  const auto value_col = require_column(t, "value", source);

  LongitudinalTable out;
  std::map<std::string, std::size_t> marker_pos;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    const auto& marker = row[marker_col];
    if (marker.empty()) throw DataError(where(source, line) + ": empty marker id");
    auto it = marker_pos.find(marker);
    if (it == marker_pos.end()) {
      it = marker_pos.emplace(marker, out.marker_names.size()).first;
      out.marker_names.push_back(marker);
      const auto nat = natures.find(marker);
      out.natures.push_back(nat == natures.end() ? MarkerNature::Continuous : nat->second);
    }
    const std::size_t k = it->second;
    Observation obs{parse_number(row[time_col], "time", source, line),
                    parse_number(row[value_col], "value", source, line)};
    if (out.natures[k] == MarkerNature::Binary && obs.value != 0.0 && obs.value != 1.0)
      throw DataError(where(source, line) + ": binary marker '" + marker + "' has value '" +
                      row[value_col] + "' (expected 0 or 1)");
    auto& per_marker = out.series[row[id_col]];
    per_marker.resize(out.marker_names.size());
    per_marker[k].push_back(obs);
  }

  for (auto& [id, per_marker] : out.series) {
    per_marker.resize(out.marker_names.size());
    for (std::size_t k = 0; k < per_marker.size(); ++k) {
      auto& s = per_marker[k];
      std::stable_sort(s.begin(), s.end(), [](const Observation& a, const Observation& b) { return a.time < b.time; });
      for (std::size_t j = 1; j < s.size(); ++j)
        if (s[j].time == s[j - 1].time)
          throw DataError(source + ": duplicate measurement for subject '" + id + "', marker '" +
                          out.marker_names[k] + "' at time " + csv::format_double(s[j].time));
    }
  }
  return out;
}

LongitudinalTable load_longitudinal(const std::string& path, const std::map<std::string, MarkerNature>& natures) {
  return parse_longitudinal(csv::read_file(path), path, natures);
}

LandmarkCohort landmark_filter(const SurvivalTable& surv, const LongitudinalTable& longit, double t_lm,
                               double t_hor, const LandmarkOptions& options) {
  if (!(t_lm > 0.0)) throw ConfigError("landmark time must be positive");
  if (!(t_hor > 0.0)) throw ConfigError("horizon must be positive");

  LandmarkCohort cohort;
  cohort.t_lm = t_lm;
  cohort.t_hor = t_hor;
  cohort.covariate_names = surv.covariate_names;
  cohort.marker_names = longit.marker_names;
  cohort.natures = longit.natures;
  cohort.n_input = surv.records.size();

  const std::size_t k_markers = longit.marker_names.size();
  for (const auto& rec : surv.records) {
    if (!(rec.t_obs > t_lm)) {
      ++cohort.n_dropped;
      continue;
    }
    CohortSubject s;
    s.subject_id = rec.subject_id;
    s.t_obs = rec.t_obs;
    s.event = (rec.event == 1 && rec.t_obs < t_lm + t_hor) ? 1 : 0;
    s.covariates = rec.covariates;
    s.markers.assign(k_markers, {});
    if (auto it = longit.series.find(rec.subject_id); it != longit.series.end()) {
      for (std::size_t k = 0; k < k_markers && k < it->second.size(); ++k)
        for (const auto& o : it->second[k])
          if (o.time <= t_lm) s.markers[k].push_back(o);
    }
    if (options.require_all_markers &&
        std::any_of(s.markers.begin(), s.markers.end(), [](const MarkerSeries& m) { return m.empty(); })) {
      ++cohort.n_dropped;
      continue;
    }
    cohort.subjects.push_back(std::move(s));
  }
  if (cohort.subjects.empty())
    throw DataError("landmark cohort is empty: no subject at risk at t_lm = " + csv::format_double(t_lm));
  return cohort;
}

LandmarkCohort prediction_cohort(const SurvivalTable& covariates, const LongitudinalTable& longit, double t_lm,
                                 double t_hor, const std::vector<std::string>& marker_names) {
  LandmarkCohort cohort;
  cohort.t_lm = t_lm;
  cohort.t_hor = t_hor;
  cohort.covariate_names = covariates.covariate_names;
  cohort.marker_names = marker_names;
  std::vector<std::size_t> src;
  for (const auto& name : marker_names) {
    src.push_back(longit.marker_index(name));
    cohort.natures.push_back(longit.natures[src.back()]);
  }
  cohort.n_input = covariates.records.size();
  for (const auto& rec : covariates.records) {
    CohortSubject s;
    s.subject_id = rec.subject_id;
    s.t_obs = rec.t_obs;
    s.event = (rec.event == 1 && rec.t_obs < t_lm + t_hor) ? 1 : 0;
    s.covariates = rec.covariates;
    s.markers.assign(marker_names.size(), {});
    if (auto it = longit.series.find(rec.subject_id); it != longit.series.end())
      for (std::size_t k = 0; k < src.size(); ++k)
        for (const auto& o : it->second[src[k]])
          if (o.time <= t_lm) s.markers[k].push_back(o);
    cohort.subjects.push_back(std::move(s));
  }
  if (cohort.subjects.empty()) throw DataError("no subjects to predict");
  return cohort;
}

SurvivalTable to_survival_table(const LandmarkCohort& cohort) {
  SurvivalTable t;
  t.covariate_names = cohort.covariate_names;
  for (const auto& s : cohort.subjects) t.records.push_back({s.subject_id, s.t_obs, s.event, s.covariates});
  return t;
}

LongitudinalTable to_longitudinal_table(const LandmarkCohort& cohort) {
  LongitudinalTable t;
  t.marker_names = cohort.marker_names;
  t.natures = cohort.natures;
  for (const auto& s : cohort.subjects) t.series[s.subject_id] = s.markers;
  return t;
}

}  // namespace dynpred
