#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynpred/dataset.hpp"
#include "dynpred/mixed_model.hpp"

namespace dynpred {

// Error-free trajectory summaries on the linear-predictor scale (log-odds for
// logit-link markers).
double level_at(const MixedModelFit& fit, const Eigen::VectorXd& b, double u);
double slope_at(const MixedModelFit& fit, const Eigen::VectorXd& b, double u);
// Integral of level_at over [t_lm - window, t_lm]: 64-point Gauss-Legendre on
// each knot-free piece, which is exact for the piecewise-cubic trajectories.
double cumulative_level(const MixedModelFit& fit, const Eigen::VectorXd& b, double t_lm, double window);

enum class SummaryKind { RandomEffect, Level, Slope, Cumulative, Custom, Covariate };
std::string to_string(SummaryKind kind);

// A user-supplied function of the error-free trajectory.
struct CustomSummary {
  std::string name;
  std::function<double(const MixedModelFit& fit, const Eigen::VectorXd& b, double t_lm, double window)> compute;
};

struct SummaryConfig {
  bool random_effects = true;
  bool level = true;
  bool slope = true;
  bool cumulative = true;
  std::optional<double> window;  // defaults to t_lm
  std::vector<CustomSummary> custom;
};

struct ColumnProvenance {
  std::string source;  // marker name, or covariate name
  SummaryKind kind = SummaryKind::Covariate;
  int index = -1;      // random-effect component, else -1
  bool binary = false; // 0/1-valued column (covariates only)
};

struct DesignMatrix {
  std::vector<std::string> subject_ids;
  std::vector<std::string> column_names;
  std::vector<ColumnProvenance> provenance;
  Eigen::MatrixXd values;  // subjects x columns
  Eigen::VectorXd means;
  Eigen::VectorXd sds;     // sample standard deviations

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  // Column index by name, or -1.
  Eigen::Index find_column(const std::string& name) const;
  DesignMatrix select_rows(std::span<const std::size_t> rows) const;
  DesignMatrix select_columns(std::span<const std::string> names) const;  // throws DataError when absent
  void recompute_moments();
};

// Summary columns per marker followed by the baseline covariates.
// `fits` and `configs` are aligned with cohort.marker_names.
DesignMatrix assemble_design(const LandmarkCohort& cohort, std::span<const MixedModelFit> fits,
                             std::span<const SummaryConfig> configs);

// CSV with an `id` column followed by the design columns, plus a JSON sidecar
// mapping every column to its marker and summary kind.
void write_design_csv(const DesignMatrix& design, const std::string& csv_path, const std::string& provenance_path);

}  // namespace dynpred
