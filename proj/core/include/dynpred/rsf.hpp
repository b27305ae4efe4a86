#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dynpred/step_function.hpp"
#include "dynpred/summaries.hpp"

namespace dynpred {

// A row of a column-major matrix or a contiguous row vector.
using RowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// |standardized log-rank statistic| between members with in_left true and the rest.
// Zero-variance comparisons score 0.
double logrank_split_score(std::span<const double> times, std::span<const int> events,
                           std::span<const char> in_left);

struct TreeNode {
  int column = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;    // rows with x[column] <= threshold
  int right = -1;
  int leaf = -1;    // index into SurvivalTree::leaf_chf
};

struct SurvivalTree {
  std::vector<TreeNode> nodes;           // nodes[0] is the root
  std::vector<StepFunction> leaf_chf;    // Nelson-Aalen over in-bag leaf members
  std::vector<double> leaf_mortality;    // sum of leaf CHF over the forest's event-time grid
  std::vector<std::size_t> leaf_size;    // in-bag members (with multiplicity)
  std::vector<int> inbag_count;          // per training subject
  std::vector<char> uses_column;         // per column

  int leaf_index(RowRef row) const;
  // Routing with one column's value replaced.
  int leaf_index(RowRef row, int column, double value) const;
};

struct TreeOptions {
  int mtry = 1;
  int nodesize = 15;
  int max_candidates = 32;  // random midpoints when a column has more than max_candidates + 1 unique values
};

// Grows one tree on training rows `sample` (a bootstrap multiset of row indices).
SurvivalTree grow_tree(const Eigen::MatrixXd& x, std::span<const double> times, std::span<const int> events,
                       std::span<const std::size_t> sample, const TreeOptions& options, std::mt19937_64& rng);

struct RsfOptions {
  int n_trees = 500;
  int mtry = 0;        // 0: ceil(sqrt(p))
  int nodesize = 15;
  int max_candidates = 32;
  std::uint64_t seed = 1;
};

struct Forest {
  std::vector<std::string> columns;
  std::vector<SurvivalTree> trees;
  int mtry = 1;
  int nodesize = 15;
  std::uint64_t seed = 1;
  std::vector<double> event_grid;    // distinct training event times
  // Training data, kept for OOB error and VIMP.
  Eigen::MatrixXd x;
  std::vector<double> times;
  std::vector<int> events;
  std::vector<double> oob_mortality; // NaN when a subject is in-bag in every tree
  double oob_error = 0.5;

  std::size_t n_trees() const { return trees.size(); }
  // Ensemble cumulative hazard (1/B) sum_b Lambda_b(t) for one row in `columns` order.
  double chf(RowRef row, double t) const;
};

Forest fit_rsf(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
               const RsfOptions& options = {});

std::vector<double> predict_rsf_probability(const Forest& forest, const DesignMatrix& design, double t_hor);
double predict_rsf_probability(const Forest& forest, RowRef row, double t_hor);

// 1 - Harrell C of OOB mortality over subjects with an OOB prediction.
double oob_error(const Forest& forest);

// Mean over trees of (tree-wise OOB error after permuting the column) - (tree-wise OOB error).
// Trees that never split on the column contribute exactly 0.
double vimp(const Forest& forest, std::size_t column, std::uint64_t seed);
std::vector<double> vimp_all(const Forest& forest, std::uint64_t seed);

struct RsfTuning {
  int mtry = 1;
  int nodesize = 15;
  std::vector<int> mtry_grid;
  std::vector<int> nodesize_grid;
  std::vector<std::vector<double>> oob_errors;  // [mtry][nodesize]
};

std::vector<int> default_mtry_grid(std::size_t p);
std::vector<int> default_nodesize_grid();

// Exhaustive grid search on OOB error; ties go to smaller mtry, then larger nodesize.
RsfTuning tune_rsf(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                   std::vector<int> mtry_grid, std::vector<int> nodesize_grid, const RsfOptions& options = {});

// Columns with positive VIMP; all columns (with a warning) when none qualify.
std::vector<std::string> select_vars_rsf(const Forest& forest, std::uint64_t seed);

}  // namespace dynpred
