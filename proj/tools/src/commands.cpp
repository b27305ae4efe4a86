#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>

#include <dynpred/csv.hpp>
#include <dynpred/error.hpp>
#include <dynpred/log.hpp>
#include <dynpred/parallel.hpp>

namespace dynpred::cli {

namespace fs = std::filesystem;

namespace {

// Collects warnings for the manifest while still echoing them to stderr.
class WarningLog {
 public:
  WarningLog() {
    set_warning_sink([this](const std::string& m) {
      std::lock_guard lock(mutex_);
      messages_.push_back(m);
      std::cerr << "warning: " << m << '\n';
    });
  }
  ~WarningLog() { set_warning_sink({}); }
  WarningLog(const WarningLog&) = delete;
  WarningLog& operator=(const WarningLog&) = delete;

  json to_json() const {
    std::lock_guard lock(mutex_);
    return messages_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> messages_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json manifest(const std::string& command, const RunConfig& rc, const WarningLog& log, json files) {
  return json{{"command", command},
              {"config_hash", config_hash(rc.source)},
              {"config", rc.source},
              {"files", std::move(files)},
              {"warnings", log.to_json()},
              {"threads", thread_count()}};
}

std::map<std::string, MarkerNature> declared_natures(const RunConfig& rc) {
  std::map<std::string, MarkerNature> out;
  for (const auto& m : rc.pipeline.markers) out[m.name] = m.nature;
  return out;
}

// Fills in the marker list from the data when the config omits it.
PipelineConfig resolved_pipeline(const RunConfig& rc, const LandmarkCohort& cohort) {
  PipelineConfig p = rc.pipeline;
  if (rc.markers_from_data) {
    p.markers.clear();
    for (std::size_t k = 0; k < cohort.marker_names.size(); ++k) {
      json m = rc.marker_defaults;
      m["name"] = cohort.marker_names[k];
      m["nature"] = to_string(cohort.natures[k]);
      p.markers.push_back(parse_marker(m, p.t_lm));
    }
  }
  p.validate();
  return p;
}

struct LoadedData {
  LandmarkCohort cohort;
  std::map<std::string, double> truth;
};

std::map<std::string, double> load_truth(const std::string& path) {
  std::map<std::string, double> truth;
  if (path.empty()) return truth;
  const auto t = csv::read_file(path);
  const auto sc = t.column("subject"), pc = t.column("pi0");
  if (sc == std::string::npos || pc == std::string::npos)
    throw DataError(path + ": truth file needs 'subject' and 'pi0' columns");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    double v = 0.0;
    if (!csv::parse_double(t.rows[r][pc], v))
      throw DataError(path + ":" + std::to_string(t.line_numbers[r]) + ": pi0 is not a number");
    truth[t.rows[r][sc]] = v;
  }
  return truth;
}

LoadedData load_data(const RunConfig& rc) {
  if (rc.survival.empty() || rc.longitudinal.empty())
    throw ConfigError("config needs 'survival' and 'longitudinal' paths (or a simulation block)");
  const auto surv = load_survival(rc.survival);
  const auto longit = load_longitudinal(rc.longitudinal, declared_natures(rc));
  LoadedData d;
  d.cohort = landmark_filter(surv, longit, rc.pipeline.t_lm, rc.pipeline.t_hor, rc.landmark);
  d.truth = load_truth(rc.truth);
  return d;
}

LoadedData simulated_data(const RunConfig& rc, int replicate) {
  ScenarioSpec spec = *rc.simulation;
  spec.seed = rc.replicates == 1 ? rc.pipeline.seed : derive_seed(rc.pipeline.seed, static_cast<std::uint64_t>(replicate) + 1);
  const auto g = simulate_cohort(spec);
  LoadedData d;
  d.cohort = landmark_filter(g.survival, g.longitudinal, spec.t_lm, spec.t_hor);
  for (std::size_t i = 0; i < g.subject_ids.size(); ++i) d.truth[g.subject_ids[i]] = g.pi0[i];
  return d;
}

std::string rep_dir(int r) { return "rep" + std::to_string(r + 1); }

json summarize(const std::vector<double>& values) {
  json j{{"values", values}};
  if (values.empty()) {
    j["mean"] = nullptr;
    j["sd"] = nullptr;
    return j;
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  j["mean"] = mean;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    j["sd"] = std::sqrt(ss / static_cast<double>(values.size() - 1));
  } else {
    j["sd"] = nullptr;
  }
  return j;
}

}  // namespace

void cmd_simulate(const RunConfig& rc) {
  if (!rc.simulation) throw ConfigError("simulate needs a 'simulation' block in the config");
  WarningLog log;
  const ScenarioDesign design = make_scenario_design(*rc.simulation);
  json files = json::array(), seeds = json::array();
  for (int r = 0; r < rc.replicates; ++r) {
    ScenarioSpec spec = *rc.simulation;
    spec.seed = rc.replicates == 1 ? rc.pipeline.seed : derive_seed(rc.pipeline.seed, static_cast<std::uint64_t>(r) + 1);
    const auto g = simulate_cohort(spec, design);
    const fs::path dir = rc.replicates == 1 ? fs::path(rc.output_dir) : fs::path(rc.output_dir) / rep_dir(r);
    write_generated_cohort(g, dir.string());
    for (const char* f : {"survival.csv", "longitudinal.csv", "truth.csv"}) files.push_back((dir / f).string());
    seeds.push_back(spec.seed);
  }
  json m = manifest("simulate", rc, log, files);
  m["scenario"] = scenario_manifest(*rc.simulation, design);
  m["replicate_seeds"] = seeds;
  write_json(fs::path(rc.output_dir) / "manifest.json", m);
}

void cmd_cv(const RunConfig& rc) {
  WarningLog log;
  const std::string hash = config_hash(rc.source);
  std::optional<LoadedData> shared;
  const bool simulate = rc.simulation && rc.survival.empty();
  if (!simulate) shared = load_data(rc);

  std::vector<std::string> methods;
  std::map<std::string, std::vector<double>> brier, auc, msep;
  json weights = json::array(), hyper = json::array(), files = json::array();
  for (int r = 0; r < rc.replicates; ++r) {
    const LoadedData data = simulate ? simulated_data(rc, r) : *shared;
    const PipelineConfig p = resolved_pipeline(rc, data.cohort);
    const std::uint64_t plan_seed = rc.replicates == 1 ? p.seed : derive_seed(p.seed, static_cast<std::uint64_t>(r) + 1);
    const FoldPlan plan = make_fold_plan(data.cohort, p.n_outer, p.has_superlearner() ? p.n_inner : 0, plan_seed);
    const CvResult res = run_pipeline_cv(data.cohort, p, plan, data.truth);
    methods = res.methods;

    std::string out = "subject,fold,method,prediction\n";
    for (std::size_t i = 0; i < res.subject_ids.size(); ++i)
      for (std::size_t m = 0; m < res.methods.size(); ++m)
        out += res.subject_ids[i] + ',' + std::to_string(res.fold[i]) + ',' + res.methods[m] + ',' +
               csv::format_double(res.predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m))) + '\n';
    const fs::path pred_path = rc.replicates == 1 ? fs::path(rc.output_dir) / "predictions.csv"
                                                  : fs::path(rc.output_dir) / rep_dir(r) / "predictions.csv";
    write_text(pred_path, out);
    files.push_back(pred_path.string());

    json wr = json::array(), hr = json::array();
    for (const auto& f : res.folds) {
      if (f.weights) wr.push_back(json{{"fold", f.fold}, {"methods", f.weights->methods},
                                       {"omega", vector_to_json(f.weights->omega)},
                                       {"objective", f.weights->objective}});
      hr.push_back(json{{"fold", f.fold}, {"methods", f.hyperparameters}});
    }
    weights.push_back(json{{"replicate", r + 1}, {"folds", wr}});
    hyper.push_back(json{{"replicate", r + 1}, {"folds", hr}});
    for (std::size_t m = 0; m < res.methods.size(); ++m) {
      const auto& rep = res.metrics[m];
      brier[res.methods[m]].push_back(rep.brier);
      if (rep.auc) auc[res.methods[m]].push_back(*rep.auc);
      if (rep.msep) msep[res.methods[m]].push_back(*rep.msep);
    }
  }

  json mj = json::object();
  for (const auto& m : methods) {
    json e{{"brier", summarize(brier[m])}, {"auc", summarize(auc[m])}};
    if (!msep[m].empty()) e["msep"] = summarize(msep[m]);
    mj[m] = e;
  }
  const fs::path out(rc.output_dir);
  write_json(out / "metrics.json", json{{"config_hash", hash},
                                        {"t_lm", rc.pipeline.t_lm},
                                        {"t_hor", rc.pipeline.t_hor},
                                        {"replicates", rc.replicates},
                                        {"methods", mj}});
  write_json(out / "weights.json", json{{"config_hash", hash}, {"replicates", weights}});
  write_json(out / "hyperparameters.json", json{{"config_hash", hash}, {"replicates", hyper}});
  for (const char* f : {"metrics.json", "weights.json", "hyperparameters.json"}) files.push_back((out / f).string());
  write_json(out / "manifest.json", manifest("cv", rc, log, files));
}

void cmd_fit(const RunConfig& rc) {
  WarningLog log;
  const LoadedData data = rc.simulation && rc.survival.empty() ? simulated_data(rc, 0) : load_data(rc);
  const PipelineConfig p = resolved_pipeline(rc, data.cohort);
  const TrainedPipeline model = fit_pipeline(data.cohort, p);
  json doc = save_pipeline(model);
  doc["config_hash"] = config_hash(rc.source);
  json natures = json::object();
  for (const auto& m : p.markers) natures[m.name] = to_string(m.nature);
  doc["marker_natures"] = natures;
  const fs::path out(rc.output_dir);
  write_json(out / "model.json", doc);
  write_json(out / "manifest.json", manifest("fit", rc, log, json::array({(out / "model.json").string()})));
}

void cmd_predict(const PredictArgs& a) {
  std::ifstream in(a.model);
  if (!in) throw DataError("cannot open model file '" + a.model + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("model file '" + a.model + "' is not valid JSON: " + e.what());
  }
  const TrainedPipeline model = load_pipeline(doc);
  std::map<std::string, MarkerNature> natures;
  if (doc.contains("marker_natures"))
    for (const auto& [k, v] : doc.at("marker_natures").items()) natures[k] = parse_marker_nature(v.get<std::string>());
  const auto cov = load_covariates(a.covariates);
  const auto longit = load_longitudinal(a.longitudinal, natures);
  const LandmarkCohort cohort = prediction_cohort(cov, longit, model.t_lm, model.t_hor, model.stage.marker_names);
  const Eigen::MatrixXd p = predict_pipeline(model, cohort);
  const auto methods = model.methods();
  std::string out = "subject,method,prediction\n";
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
    for (std::size_t m = 0; m < methods.size(); ++m)
      out += cohort.subjects[i].subject_id + ',' + methods[m] + ',' +
             csv::format_double(p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m))) + '\n';
  if (a.output.empty())
    std::cout << out;
  else
    write_text(a.output, out);
}

void cmd_evaluate(const EvaluateArgs& a) {
  if (!(a.t_lm > 0.0) || !(a.t_hor > 0.0)) throw ConfigError("evaluate needs positive --t-lm and --t-hor");
  const auto surv = load_survival(a.survival);
  std::map<std::string, std::pair<double, int>> outcome;  // residual time, capped event
  for (const auto& r : surv.records)
    if (r.t_obs > a.t_lm)
      outcome[r.subject_id] = {r.t_obs - a.t_lm, r.event == 1 && r.t_obs < a.t_lm + a.t_hor ? 1 : 0};
  const auto truth = load_truth(a.truth);

  const auto t = csv::read_file(a.predictions);
  const auto sc = t.column("subject"), mc = t.column("method"), pc = t.column("prediction");
  if (sc == std::string::npos || mc == std::string::npos || pc == std::string::npos)
    throw DataError(a.predictions + ": needs 'subject', 'method' and 'prediction' columns");
  std::map<std::string, std::map<std::string, double>> by_method;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    double v = 0.0;
    if (!csv::parse_double(t.rows[r][pc], v) || !(v >= 0.0 && v <= 1.0))
      throw DataError(a.predictions + ":" + std::to_string(t.line_numbers[r]) + ": prediction must be in [0, 1]");
    if (!by_method[t.rows[r][mc]].emplace(t.rows[r][sc], v).second)
      throw DataError(a.predictions + ":" + std::to_string(t.line_numbers[r]) + ": duplicate prediction for subject '" +
                      t.rows[r][sc] + "'");
  }
  json methods = json::object();
  for (const auto& [name, preds] : by_method) {
    std::vector<double> p, times, tp;
    std::vector<int> events;
    for (const auto& [id, v] : preds) {
      auto it = outcome.find(id);
      if (it == outcome.end()) continue;
      p.push_back(v);
      times.push_back(it->second.first);
      events.push_back(it->second.second);
      if (!truth.empty()) {
        auto tt = truth.find(id);
        if (tt == truth.end()) throw DataError("no true probability for subject '" + id + "'");
        tp.push_back(tt->second);
      }
    }
    if (p.empty())
      throw DataError("method '" + name + "': no predicted subject is in the survival file at risk at the landmark");
    const auto rep = evaluate_predictions(p, times, events, a.t_hor, tp);
    json e{{"brier", rep.brier},         {"auc", rep.auc ? json(*rep.auc) : json(nullptr)},
           {"n_at_risk", rep.n_at_risk}, {"n_cases", rep.n_cases},
           {"n_controls", rep.n_controls}};
    if (rep.msep) e["msep"] = *rep.msep;
    methods[name] = e;
  }
  const json out{{"t_lm", a.t_lm}, {"t_hor", a.t_hor}, {"methods", methods}};
  if (a.output.empty())
    std::cout << out.dump(2) << '\n';
  else
    write_json(a.output, out);
}

}  // namespace dynpred::cli
