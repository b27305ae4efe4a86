#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dynpred/serialize.hpp"
#include "dynpred/summaries.hpp"

namespace dynpred {

// One entry of the method list; `params` holds the method's hyperparameter block.
struct MethodConfig {
  std::string name;
  json params = json::object();
};

// Every registered method name, superlearner last.
const std::vector<std::string>& method_registry();
bool is_registered_method(const std::string& name);

// A survival learner mapping a design matrix to P(event within the horizon).
class Learner {
 public:
  virtual ~Learner() = default;
  const std::string& name() const { return name_; }

  // Trains, running the method's own tuning on this data only.
  virtual void fit(const DesignMatrix& design, std::span<const double> times, std::span<const int> events) = 0;
  // An untrained copy whose hyperparameters are fixed to those tuned by the last fit().
  virtual std::unique_ptr<Learner> with_tuned_hyperparameters() const = 0;
  virtual std::vector<double> predict(const DesignMatrix& design, double t_hor) const = 0;
  // Tuned hyperparameters, for reports.
  virtual json hyperparameters() const = 0;
  // Fitted model payload; restored by load_learner.
  virtual json model_json() const = 0;
  virtual void restore_model(const json& model) = 0;

 protected:
  explicit Learner(std::string name) : name_(std::move(name)) {}

 private:
  std::string name_;
};

// Throws ConfigError for unknown names, the superlearner, or bad parameters.
std::unique_ptr<Learner> make_learner(const MethodConfig& config, std::uint64_t seed);

json save_learner(const Learner& learner);
std::unique_ptr<Learner> load_learner(const json& doc);

}  // namespace dynpred
