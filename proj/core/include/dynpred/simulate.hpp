#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynpred/dataset.hpp"
#include "dynpred/pipeline.hpp"

namespace dynpred {

enum class LinkForm { Linear, Interactions, Nonlinear };
std::string to_string(LinkForm form);
LinkForm parse_link_form(const std::string& s);

// Generator defaults below are reconstructions (trajectory shapes, effect
// sizes, Weibull parameters); the manifest records every value used.
struct ScenarioSpec {
  int n_subjects = 500;
  int n_active = 18;                 // summaries entering the risk score
  LinkForm link = LinkForm::Linear;
  double t_lm = 4.0;
  double t_hor = 3.0;
  double weibull_shape = 1.5;
  double weibull_scale = 0.0;        // 0: calibrated to null_event_fraction
  double null_event_fraction = 0.35; // P(event within horizon) when eta = 0
  double eta_sd = 1.0;               // target SD of the summary part of the risk score (0: null link)
  double covariate_effect = 0.3;     // coefficient on x1 and x6
  double censoring_fraction = 0.30;  // target share censored before the horizon
  double noise_sd = 0.5;
  double visit_sd = 0.15;
  std::uint64_t design_seed = 2021;  // markers, active set, coefficients, transforms
  std::uint64_t seed = 1;            // subjects

  void validate() const;  // throws ConfigError
};

enum class Transform { Identity, Square, Cube, Indicator };
std::string to_string(Transform t);

struct MarkerDesign {
  std::string name;
  int degree = 0;              // polynomial in (t - t_lm)
  Eigen::VectorXd beta;        // fixed effects
  Eigen::VectorXd re_sd;       // independent random-effect SDs
};

// Everything fixed by (spec, design_seed): the same for all replicates.
struct ScenarioDesign {
  std::vector<MarkerDesign> markers;
  std::vector<std::string> summary_names;   // 92 Gamma0 columns, design-matrix naming
  std::vector<std::string> covariate_names; // x1..x10
  Eigen::VectorXd summary_mean;             // population moments of Gamma0
  Eigen::VectorXd summary_sd;
  std::vector<int> active;                  // indices into summary_names
  std::vector<Transform> transforms;        // per active term
  Eigen::VectorXd nu;                       // coefficient per active term
  std::vector<std::pair<int, int>> interactions;  // pairs of active-term positions
  Eigen::VectorXd interaction_coef;
  Eigen::VectorXd xi;                       // covariate coefficients
  double weibull_scale = 0.0;
};

ScenarioDesign make_scenario_design(const ScenarioSpec& spec);

// Linear predictor from true summaries and covariates.
double scenario_link(const ScenarioDesign& design, const Eigen::Ref<const Eigen::VectorXd>& gamma0,
                     const Eigen::Ref<const Eigen::VectorXd>& x0, LinkForm form);

// 1 - S(t_lm + t_hor | eta) / S(t_lm | eta) under the Weibull proportional hazards model.
double true_probability(double eta, double t_lm, double t_hor, double shape, double scale);
double true_probability(const ScenarioSpec& spec, const ScenarioDesign& design, double eta);

// Gamma0 row from a marker's true random effects, in closed form.
Eigen::VectorXd true_summaries(const ScenarioDesign& design, const std::vector<Eigen::VectorXd>& b, double t_lm);

struct GeneratedCohort {
  SurvivalTable survival;
  LongitudinalTable longitudinal;
  std::vector<std::string> subject_ids;
  Eigen::MatrixXd gamma0;  // n x 92
  Eigen::MatrixXd x0;      // n x 10
  std::vector<double> eta;
  std::vector<double> pi0;
  std::vector<double> event_times;      // residual (landmark clock), uncensored
  std::vector<double> censoring_times;  // residual (landmark clock)
  double censoring_max = 0.0;           // uniform censoring upper bound on the landmark clock
};

GeneratedCohort simulate_cohort(const ScenarioSpec& spec);
GeneratedCohort simulate_cohort(const ScenarioSpec& spec, const ScenarioDesign& design);

// Mixed-model configuration matching the generating trajectories.
std::vector<MarkerConfig> simulation_marker_configs(const ScenarioDesign& design, double t_lm);

// survival.csv, longitudinal.csv and truth.csv in `directory` (created if needed).
void write_generated_cohort(const GeneratedCohort& cohort, const std::string& directory);

json scenario_manifest(const ScenarioSpec& spec, const ScenarioDesign& design);

}  // namespace dynpred
