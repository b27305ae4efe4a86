#pragma once

#include <string>

#include "config.hpp"

namespace dynpred::cli {

struct PredictArgs {
  std::string model;
  std::string covariates;
  std::string longitudinal;
  std::string output;  // CSV; empty: stdout
};

struct EvaluateArgs {
  std::string predictions;
  std::string survival;
  std::string truth;   // optional
  double t_lm = 0.0;
  double t_hor = 0.0;
  std::string output;  // JSON; empty: stdout
};

void cmd_simulate(const RunConfig& config);
void cmd_fit(const RunConfig& config);
void cmd_cv(const RunConfig& config);
void cmd_predict(const PredictArgs& args);
void cmd_evaluate(const EvaluateArgs& args);

}  // namespace dynpred::cli
