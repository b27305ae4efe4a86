#pragma once

#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "dynpred/cox.hpp"
#include "dynpred/mixed_model.hpp"
#include "dynpred/rsf.hpp"
#include "dynpred/spls.hpp"
#include "dynpred/superlearner.hpp"

namespace dynpred {

using json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

// {"format": "dynpred.model", "version": 1, "kind": kind, "payload": payload}
json wrap_model(const std::string& kind, json payload);
// Checks format, version and kind; returns the payload. Throws DataError on mismatch.
const json& unwrap_model(const json& doc, const std::string& kind);

json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

json to_json(const StepFunction& f);
StepFunction step_function_from_json(const json& j);
json to_json(const BasisSpec& b);
BasisSpec basis_from_json(const json& j);
json to_json(const MixedModelFit& f);
MixedModelFit mixed_model_from_json(const json& j);
json to_json(const CoxFit& f);
CoxFit cox_from_json(const json& j);
json to_json(const SplsDrFit& f);
SplsDrFit spls_from_json(const json& j);
// Trees only: the training copy kept for OOB statistics is not written.
json to_json(const Forest& f);
Forest forest_from_json(const json& j);
json to_json(const SuperLearnerWeights& w);
SuperLearnerWeights weights_from_json(const json& j);

}  // namespace dynpred
