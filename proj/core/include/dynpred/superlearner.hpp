#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dynpred {

struct SuperLearnerWeights {
  std::vector<std::string> methods;
  Eigen::VectorXd omega;      // on the probability simplex
  double objective = 0.0;     // IPCW Brier of the combination on the fitting data
  int iterations = 0;
};

// Minimizes the IPCW Brier score of predictions * omega over the simplex.
// `predictions` is subjects x methods (internal-CV predictions).
SuperLearnerWeights superlearner_weights(const Eigen::MatrixXd& predictions, std::span<const double> times,
                                         std::span<const int> events, double t_hor,
                                         std::vector<std::string> methods = {});

std::vector<double> superlearner_predict(const SuperLearnerWeights& weights, const Eigen::MatrixXd& predictions);

// Euclidean projection onto {w >= 0, sum w = 1}.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

}  // namespace dynpred
