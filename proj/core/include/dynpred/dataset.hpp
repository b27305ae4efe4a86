#pragma once

#include <map>
#include <string>
#include <vector>

#include "dynpred/csv.hpp"

namespace dynpred {

enum class MarkerNature { Continuous, Binary };

MarkerNature parse_marker_nature(const std::string& s);
std::string to_string(MarkerNature nature);

struct SurvivalRecord {
  std::string subject_id;
  double t_obs = 0.0;
  int event = 0;
  std::vector<double> covariates;
};

struct SurvivalTable {
  std::vector<std::string> covariate_names;
  std::vector<SurvivalRecord> records;
};

struct Observation {
  double time = 0.0;
  double value = 0.0;
  friend bool operator==(const Observation&, const Observation&) = default;
};

using MarkerSeries = std::vector<Observation>;

struct LongitudinalTable {
  std::vector<std::string> marker_names;
  std::vector<MarkerNature> natures;
  // subject id -> one time-sorted series per marker (index aligned with marker_names)
  std::map<std::string, std::vector<MarkerSeries>> series;

  std::size_t marker_index(const std::string& name) const;  // throws DataError when absent
};

struct CohortSubject {
  std::string subject_id;
  double t_obs = 0.0;       // study time
  int event = 0;            // horizon-capped indicator
  std::vector<double> covariates;
  std::vector<MarkerSeries> markers;

  friend bool operator==(const CohortSubject&, const CohortSubject&) = default;
};

struct LandmarkCohort {
  double t_lm = 0.0;
  double t_hor = 0.0;
  std::vector<std::string> covariate_names;
  std::vector<std::string> marker_names;
  std::vector<MarkerNature> natures;
  std::vector<CohortSubject> subjects;
  std::size_t n_input = 0;
  std::size_t n_dropped = 0;

  std::size_t size() const noexcept { return subjects.size(); }
  // Observed times on the landmark clock, T* - t_lm.
  std::vector<double> residual_times() const;
  std::vector<int> events() const;

  friend bool operator==(const LandmarkCohort&, const LandmarkCohort&) = default;
};

struct LandmarkOptions {
  bool require_all_markers = true;
};

// Required columns id,time,event; every other all-numeric column becomes a covariate.
SurvivalTable parse_survival(const csv::Table& table, const std::string& source_name);
SurvivalTable load_survival(const std::string& path);

// Like load_survival but time/event are optional; used for new subjects at prediction time.
SurvivalTable parse_covariates(const csv::Table& table, const std::string& source_name);
SurvivalTable load_covariates(const std::string& path);

// Columns id,marker,time,value. Markers missing from `natures` are continuous.
LongitudinalTable parse_longitudinal(const csv::Table& table, const std::string& source_name,
                                     const std::map<std::string, MarkerNature>& natures);
LongitudinalTable load_longitudinal(const std::string& path,
                                    const std::map<std::string, MarkerNature>& natures = {});

// Keeps subjects with t_obs > t_lm, truncates histories at t_lm, and sets
// event = 1 only when the event was observed with t_obs < t_lm + t_hor.
LandmarkCohort landmark_filter(const SurvivalTable& surv, const LongitudinalTable& longit, double t_lm,
                               double t_hor, const LandmarkOptions& options = {});

// Builds a cohort of new subjects (no at-risk check) with histories truncated at t_lm.
// `marker_names` fixes the marker order; a marker absent from the data is an error.
LandmarkCohort prediction_cohort(const SurvivalTable& covariates, const LongitudinalTable& longit,
                                 double t_lm, double t_hor, const std::vector<std::string>& marker_names);

SurvivalTable to_survival_table(const LandmarkCohort& cohort);
LongitudinalTable to_longitudinal_table(const LandmarkCohort& cohort);

}  // namespace dynpred
