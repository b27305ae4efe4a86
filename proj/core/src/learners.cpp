#include "dynpred/learners.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include "dynpred/cox.hpp"
#include "dynpred/coxnet.hpp"
#include "dynpred/error.hpp"
#include "dynpred/parallel.hpp"
#include "dynpred/rsf.hpp"
#include "dynpred/spls.hpp"

namespace dynpred {

namespace {

// Reads a method's hyperparameter block, rejecting unknown keys.
class Params {
 public:
  Params(const MethodConfig& c, std::set<std::string> allowed) : name_(c.name), j_(c.params) {
    if (j_.is_null()) j_ = json::object();
    if (!j_.is_object()) throw ConfigError("method '" + name_ + "': parameters must be a JSON object");
    for (const auto& [k, v] : j_.items())
      if (!allowed.count(k)) throw ConfigError("method '" + name_ + "': unknown parameter '" + k + "'");
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    auto it = j_.find(key);
    if (it == j_.end()) return fallback;
    try {
      return it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("method '" + name_ + "': parameter '" + key + "' has the wrong type");
    }
  }

  template <class T>
  std::optional<T> optional(const std::string& key) const {
    if (!j_.contains(key)) return std::nullopt;
    return get<T>(key, T{});
  }

  int positive_int(const std::string& key, int fallback, int minimum = 1) const {
    const int v = get<int>(key, fallback);
    if (v < minimum)
      throw ConfigError("method '" + name_ + "': parameter '" + key + "' must be at least " + std::to_string(minimum));
    return v;
  }

 private:
  std::string name_;
  json j_;
};

void require_fitted(bool fitted, const std::string& name) {
  if (!fitted) throw std::logic_error("learner '" + name + "' used before fit");
}

// ---------------------------------------------------------------- Cox

class CoxLearner final : public Learner {
 public:
  enum class Mode { All, Select, Fixed };

  CoxLearner(std::string name, Mode mode, std::vector<std::string> fixed = {})
      : Learner(std::move(name)), mode_(mode), fixed_(std::move(fixed)) {}

  void fit(const DesignMatrix& design, std::span<const double> times, std::span<const int> events) override {
    switch (mode_) {
      case Mode::All: {
        const auto cols = independent_columns(design);
        fit_ = fit_cox(design.select_columns(cols), times, events);
        break;
      }
      case Mode::Select: fit_ = backward_select_cox(design, times, events); break;
      case Mode::Fixed: fit_ = fit_cox(design.select_columns(fixed_), times, events); break;
    }
    fitted_ = true;
  }

  std::unique_ptr<Learner> with_tuned_hyperparameters() const override {
    require_fitted(fitted_, name());
    if (mode_ == Mode::All) return std::make_unique<CoxLearner>(name(), Mode::All);
    return std::make_unique<CoxLearner>(name(), Mode::Fixed, fit_.columns);
  }

  std::vector<double> predict(const DesignMatrix& design, double t_hor) const override {
    require_fitted(fitted_, name());
    return predict_cox_probability(fit_, design, t_hor);
  }

  json hyperparameters() const override { return json{{"columns", fit_.columns}}; }
  json model_json() const override { return to_json(fit_); }
  void restore_model(const json& model) override {
    fit_ = cox_from_json(model);
    fitted_ = true;
  }

 private:
  Mode mode_;
  std::vector<std::string> fixed_;
  CoxFit fit_;
  bool fitted_ = false;
};

// ---------------------------------------------------------------- elastic net

class CoxnetLearner final : public Learner {
 public:
  CoxnetLearner(std::string name, CoxnetOptions options) : Learner(std::move(name)), options_(options) {}

  void fit(const DesignMatrix& design, std::span<const double> times, std::span<const int> events) override {
    const auto path = fit_coxnet(design, times, events, options_);
    fit_ = path.fit;
    lambda_ = path.lambda_selected;
    fitted_ = true;
  }

  std::unique_ptr<Learner> with_tuned_hyperparameters() const override {
    require_fitted(fitted_, name());
    CoxnetOptions o = options_;
    o.fixed_lambda = lambda_;
    return std::make_unique<CoxnetLearner>(name(), o);
  }

  std::vector<double> predict(const DesignMatrix& design, double t_hor) const override {
    require_fitted(fitted_, name());
    return predict_cox_probability(fit_, design, t_hor);
  }

  json hyperparameters() const override {
    int nonzero = 0;
    for (Eigen::Index j = 0; j < fit_.coef.size(); ++j) nonzero += fit_.coef[j] != 0.0;
    return json{{"alpha", options_.alpha}, {"lambda", lambda_}, {"nonzero", nonzero}};
  }
  json model_json() const override { return json{{"lambda", lambda_}, {"cox", to_json(fit_)}}; }
  void restore_model(const json& model) override {
    lambda_ = model.at("lambda").get<double>();
    fit_ = cox_from_json(model.at("cox"));
    fitted_ = true;
  }

 private:
  CoxnetOptions options_;
  CoxFit fit_;
  double lambda_ = 0.0;
  bool fitted_ = false;
};

// ---------------------------------------------------------------- sPLS-DR

class SplsLearner final : public Learner {
 public:
  SplsLearner(std::string name, SplsOptions options) : Learner(std::move(name)), options_(std::move(options)) {}

  void fit(const DesignMatrix& design, std::span<const double> times, std::span<const int> events) override {
    fit_ = fit_spls_dr(design, times, events, options_);
    fitted_ = true;
  }

  std::unique_ptr<Learner> with_tuned_hyperparameters() const override {
    require_fitted(fitted_, name());
    SplsOptions o = options_;
    o.fixed_components = fit_.n_components();
    o.fixed_eta = fit_.eta;
    return std::make_unique<SplsLearner>(name(), o);
  }

  std::vector<double> predict(const DesignMatrix& design, double t_hor) const override {
    require_fitted(fitted_, name());
    return predict_spls_probability(fit_, design, t_hor);
  }

  json hyperparameters() const override {
    return json{{"components", fit_.n_components()}, {"eta", fit_.eta}};
  }
  json model_json() const override { return to_json(fit_); }
  void restore_model(const json& model) override {
    fit_ = spls_from_json(model);
    fitted_ = true;
  }

 private:
  SplsOptions options_;
  SplsDrFit fit_;
  bool fitted_ = false;
};

// ---------------------------------------------------------------- RSF

class RsfLearner final : public Learner {
 public:
  enum class Mode { Default, Optimize, Select, Fixed };

  struct Settings {
    RsfOptions forest;
    int tuning_trees = 0;  // 0: forest.n_trees
    std::vector<int> mtry_grid;
    std::vector<int> nodesize_grid;
    std::vector<std::string> columns;  // Fixed mode with a column subset
  };

  RsfLearner(std::string name, Mode mode, Settings s) : Learner(std::move(name)), mode_(mode), s_(std::move(s)) {}

  void fit(const DesignMatrix& design, std::span<const double> times, std::span<const int> events) override {
    RsfOptions o = s_.forest;
    columns_ = design.column_names;
    switch (mode_) {
      case Mode::Default: break;
      case Mode::Fixed:
        if (!s_.columns.empty()) columns_ = s_.columns;
        break;
      case Mode::Optimize: {
        RsfOptions t = o;
        if (s_.tuning_trees > 0) t.n_trees = s_.tuning_trees;
        const auto tuned = tune_rsf(design, times, events, s_.mtry_grid, s_.nodesize_grid, t);
        o.mtry = tuned.mtry;
        o.nodesize = tuned.nodesize;
        break;
      }
      case Mode::Select: {
        RsfOptions t = o;
        if (s_.tuning_trees > 0) t.n_trees = s_.tuning_trees;
        const Forest base = fit_rsf(design, times, events, t);
        columns_ = select_vars_rsf(base, derive_seed(o.seed, 0x5e1ec7));
        o.mtry = 0;  // default for the reduced column count
        break;
      }
    }
    forest_ = fit_rsf(design.select_columns(columns_), times, events, o);
    forest_.x.resize(0, 0);  // training copy not needed once OOB error is known
    forest_.times.clear();
    forest_.events.clear();
    fitted_ = true;
  }

  std::unique_ptr<Learner> with_tuned_hyperparameters() const override {
    require_fitted(fitted_, name());
    Settings s = s_;
    s.forest.mtry = forest_.mtry;
    s.forest.nodesize = forest_.nodesize;
    s.columns = columns_;
    return std::make_unique<RsfLearner>(name(), Mode::Fixed, s);
  }

  std::vector<double> predict(const DesignMatrix& design, double t_hor) const override {
    require_fitted(fitted_, name());
    return predict_rsf_probability(forest_, design, t_hor);
  }

  json hyperparameters() const override {
    return json{{"mtry", forest_.mtry}, {"nodesize", forest_.nodesize}, {"n_trees", forest_.n_trees()},
                {"n_columns", forest_.columns.size()}, {"oob_error", forest_.oob_error}};
  }
  json model_json() const override { return to_json(forest_); }
  void restore_model(const json& model) override {
    forest_ = forest_from_json(model);
    columns_ = forest_.columns;
    fitted_ = true;
  }

 private:
  Mode mode_;
  Settings s_;
  std::vector<std::string> columns_;
  Forest forest_;
  bool fitted_ = false;
};

}  // namespace

const std::vector<std::string>& method_registry() {
  static const std::vector<std::string> names = {
      "cox-all",       "cox-select",     "coxnet-lasso",  "coxnet-ridge", "coxnet-elastic", "spls-nosparse",
      "spls-maxsparse", "spls-optimize", "rsf-default",   "rsf-optimize", "rsf-select",     "superlearner"};
  return names;
}

bool is_registered_method(const std::string& name) {
  const auto& r = method_registry();
  return std::find(r.begin(), r.end(), name) != r.end();
}

std::unique_ptr<Learner> make_learner(const MethodConfig& c, std::uint64_t seed) {
  const std::string& n = c.name;
  if (n == "cox-all" || n == "cox-select") {
    Params p(c, {});
    return std::make_unique<CoxLearner>(n, n == "cox-all" ? CoxLearner::Mode::All : CoxLearner::Mode::Select);
  }
  if (n == "coxnet-lasso" || n == "coxnet-ridge" || n == "coxnet-elastic") {
    Params p(c, {"alpha", "n_lambda", "lambda_min_ratio", "n_folds", "standardize"});
    CoxnetOptions o;
    o.alpha = n == "coxnet-lasso" ? 1.0 : n == "coxnet-ridge" ? 0.0 : 0.5;
    if (n == "coxnet-elastic") o.alpha = p.get<double>("alpha", 0.5);
    else if (p.optional<double>("alpha")) throw ConfigError("method '" + n + "': alpha is fixed by the method");
    if (!(o.alpha >= 0.0 && o.alpha <= 1.0)) throw ConfigError("method '" + n + "': alpha must be in [0, 1]");
    o.n_lambda = p.positive_int("n_lambda", 100, 2);
    o.lambda_min_ratio = p.get<double>("lambda_min_ratio", 1e-3);
    if (!(o.lambda_min_ratio > 0.0 && o.lambda_min_ratio < 1.0))
      throw ConfigError("method '" + n + "': lambda_min_ratio must be in (0, 1)");
    o.n_folds = p.positive_int("n_folds", 10, 2);
    o.standardize = p.get<bool>("standardize", true);
    o.seed = seed;
    return std::make_unique<CoxnetLearner>(n, o);
  }
  if (n == "spls-nosparse" || n == "spls-maxsparse" || n == "spls-optimize") {
    Params p(c, {"max_components", "n_folds", "eta_grid"});
    SplsOptions o;
    o.mode = n == "spls-nosparse" ? SparsityMode::None : n == "spls-maxsparse" ? SparsityMode::Max : SparsityMode::Grid;
    o.max_components = p.positive_int("max_components", 6);
    o.n_folds = p.positive_int("n_folds", 10, 2);
    o.eta_grid = p.get<std::vector<double>>("eta_grid", o.eta_grid);
    if (o.eta_grid.empty()) throw ConfigError("method '" + n + "': eta_grid is empty");
    for (double e : o.eta_grid)
      if (!(e >= 0.0 && e < 1.0)) throw ConfigError("method '" + n + "': eta_grid values must be in [0, 1)");
    o.seed = seed;
    return std::make_unique<SplsLearner>(n, o);
  }
  if (n == "rsf-default" || n == "rsf-optimize" || n == "rsf-select") {
    Params p(c, {"n_trees", "tuning_trees", "mtry", "nodesize", "mtry_grid", "nodesize_grid", "max_candidates"});
    RsfLearner::Settings s;
    s.forest.n_trees = p.positive_int("n_trees", 500);
    s.forest.mtry = p.positive_int("mtry", 0, 0);
    s.forest.nodesize = p.positive_int("nodesize", 15);
    s.forest.max_candidates = p.positive_int("max_candidates", 32);
    s.forest.seed = seed;
    s.tuning_trees = p.positive_int("tuning_trees", 0, 0);
    s.mtry_grid = p.get<std::vector<int>>("mtry_grid", {});
    s.nodesize_grid = p.get<std::vector<int>>("nodesize_grid", {});
    for (int v : s.mtry_grid)
      if (v < 1) throw ConfigError("method '" + n + "': mtry_grid values must be positive");
    for (int v : s.nodesize_grid)
      if (v < 1) throw ConfigError("method '" + n + "': nodesize_grid values must be positive");
    const auto mode = n == "rsf-default"    ? RsfLearner::Mode::Default
                      : n == "rsf-optimize" ? RsfLearner::Mode::Optimize
                                            : RsfLearner::Mode::Select;
    return std::make_unique<RsfLearner>(n, mode, s);
  }
  if (n == "superlearner") throw ConfigError("the superlearner is assembled from the other methods, not built alone");
  throw ConfigError("unknown method '" + n + "'");
}

json save_learner(const Learner& learner) {
  return wrap_model("learner", json{{"name", learner.name()},
                                    {"hyperparameters", learner.hyperparameters()},
                                    {"model", learner.model_json()}});
}

std::unique_ptr<Learner> load_learner(const json& doc) {
  const json& payload = unwrap_model(doc, "learner");
  try {
    auto l = make_learner(MethodConfig{payload.at("name").get<std::string>(), json::object()}, 0);
    l->restore_model(payload.at("model"));
    return l;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed learner document: ") + e.what());
  }
}

}  // namespace dynpred
