#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dynpred/dataset.hpp"
#include "dynpred/learners.hpp"
#include "dynpred/metrics.hpp"
#include "dynpred/mixed_model.hpp"
#include "dynpred/summaries.hpp"
#include "dynpred/superlearner.hpp"

namespace dynpred {

struct MarkerConfig {
  std::string name;
  MarkerNature nature = MarkerNature::Continuous;
  MixedModelSpec spec;
  // Natural-spline bases with no interior knots get knots at these quantiles
  // of the training observation times (boundaries at their range).
  std::vector<double> knot_quantiles;
  SummaryConfig summaries;
};

struct PipelineConfig {
  double t_lm = 0.0;
  double t_hor = 0.0;
  std::vector<MarkerConfig> markers;
  std::vector<MethodConfig> methods;  // may include "superlearner"
  int n_outer = 10;
  int n_inner = 9;                    // superlearner weight folds
  std::uint64_t seed = 1;
  bool refit_longitudinal = true;     // false: mixed models fitted once on the whole cohort

  std::vector<std::string> base_methods() const;
  bool has_superlearner() const;
  // Base methods followed by "superlearner" when requested.
  std::vector<std::string> output_methods() const;
  void validate() const;  // throws ConfigError
};

// Cohort restricted to the named markers, in that order.
LandmarkCohort select_markers(const LandmarkCohort& cohort, const std::vector<std::string>& names);

// Step 1: one mixed model per marker, then the summary design.
struct LongitudinalStage {
  double t_lm = 0.0;
  std::vector<std::string> marker_names;
  std::vector<MixedModelFit> fits;
  std::vector<SummaryConfig> summaries;

  static LongitudinalStage fit(const LandmarkCohort& training, const std::vector<MarkerConfig>& markers);
  DesignMatrix design(const LandmarkCohort& cohort) const;
};

struct FoldPlan {
  int n_outer = 1;
  int n_inner = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> subject_ids;  // sorted
  std::vector<int> outer;                // per subject
  // inner[k][j]: inner fold of the j-th training subject (id order) of outer fold k.
  std::vector<std::vector<int>> inner;

  // With one outer fold, training and test sets are both the whole cohort.
  std::vector<std::size_t> train_indices(int k) const;
  std::vector<std::size_t> test_indices(int k) const;
};

FoldPlan make_fold_plan(const LandmarkCohort& cohort, int n_outer, int n_inner, std::uint64_t seed);

// Cohort with subjects sorted by id.
LandmarkCohort canonical_order(const LandmarkCohort& cohort);

struct FoldResult {
  int fold = 0;
  std::vector<std::size_t> test;  // indices into the canonical cohort
  std::vector<std::string> methods;
  Eigen::MatrixXd predictions;    // test subjects x methods
  std::optional<SuperLearnerWeights> weights;
  // Internal-CV predictions the weights were fitted on: training subjects (train_indices order) x base methods.
  Eigen::MatrixXd inner_predictions;
  json hyperparameters = json::object();
};

// Trains everything on the training part of fold k and predicts its test part.
// `cohort` must be in canonical order and match the plan.
FoldResult run_fold(const LandmarkCohort& cohort, const PipelineConfig& config, const FoldPlan& plan, int k);

struct CvResult {
  std::vector<std::string> subject_ids;    // canonical order
  std::vector<int> fold;
  std::vector<std::string> methods;
  Eigen::MatrixXd predictions;             // out-of-fold, subjects x methods
  std::vector<MetricReport> metrics;       // per method, on pooled out-of-fold predictions
  std::vector<FoldResult> folds;
};

// `truth` maps subject id to the true probability (simulations), for MSEP.
CvResult run_pipeline_cv(const LandmarkCohort& cohort, const PipelineConfig& config, const FoldPlan& plan,
                         const std::map<std::string, double>& truth = {});

// Full-cohort fit for later prediction on new subjects.
struct TrainedPipeline {
  double t_lm = 0.0;
  double t_hor = 0.0;
  LongitudinalStage stage;
  std::vector<std::unique_ptr<Learner>> learners;
  std::optional<SuperLearnerWeights> weights;
  std::vector<std::string> methods() const;
};

TrainedPipeline fit_pipeline(const LandmarkCohort& cohort, const PipelineConfig& config);
// Subjects x methods (base methods, then the superlearner if trained).
Eigen::MatrixXd predict_pipeline(const TrainedPipeline& model, const LandmarkCohort& cohort);

json save_pipeline(const TrainedPipeline& model);
TrainedPipeline load_pipeline(const json& doc);

}  // namespace dynpred
