#include "dynpred/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "dynpred/error.hpp"
#include "dynpred/folds.hpp"
#include "dynpred/parallel.hpp"

namespace dynpred {

std::vector<std::string> PipelineConfig::base_methods() const {
  std::vector<std::string> out;
  for (const auto& m : methods)
    if (m.name != "superlearner") out.push_back(m.name);
  return out;
}

bool PipelineConfig::has_superlearner() const {
  return std::any_of(methods.begin(), methods.end(), [](const MethodConfig& m) { return m.name == "superlearner"; });
}

std::vector<std::string> PipelineConfig::output_methods() const {
  auto out = base_methods();
  if (has_superlearner()) out.push_back("superlearner");
  return out;
}

void PipelineConfig::validate() const {
  if (!(t_lm >= 0.0)) throw ConfigError("landmark time must be non-negative");
  if (!(t_hor > 0.0)) throw ConfigError("horizon must be positive");
  if (markers.empty()) throw ConfigError("no markers configured");
  std::set<std::string> seen;
  for (const auto& m : markers) {
    if (!seen.insert(m.name).second) throw ConfigError("marker '" + m.name + "' configured twice");
    m.spec.fixed.validate();
    m.spec.random.validate();
  }
  if (methods.empty()) throw ConfigError("no methods configured");
  seen.clear();
  for (const auto& m : methods) {
    if (!is_registered_method(m.name)) throw ConfigError("unknown method '" + m.name + "'");
    if (!seen.insert(m.name).second) throw ConfigError("method '" + m.name + "' listed twice");
  }
  if (base_methods().empty()) throw ConfigError("the superlearner needs at least one other method");
  if (n_outer < 1) throw ConfigError("outer fold count must be at least 1");
  if (has_superlearner() && n_inner < 2) throw ConfigError("the superlearner needs at least 2 inner folds");
}

LandmarkCohort select_markers(const LandmarkCohort& cohort, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto it = std::find(cohort.marker_names.begin(), cohort.marker_names.end(), n);
    if (it == cohort.marker_names.end()) throw DataError("marker '" + n + "' is absent from the longitudinal data");
    idx.push_back(static_cast<std::size_t>(it - cohort.marker_names.begin()));
  }
  LandmarkCohort out;
  out.t_lm = cohort.t_lm;
  out.t_hor = cohort.t_hor;
  out.covariate_names = cohort.covariate_names;
  out.n_input = cohort.n_input;
  out.n_dropped = cohort.n_dropped;
  for (auto k : idx) {
    out.marker_names.push_back(cohort.marker_names[k]);
    out.natures.push_back(cohort.natures[k]);
  }
  out.subjects.reserve(cohort.subjects.size());
  for (const auto& s : cohort.subjects) {
    CohortSubject t{s.subject_id, s.t_obs, s.event, s.covariates, {}};
    for (auto k : idx) t.markers.push_back(s.markers[k]);
    out.subjects.push_back(std::move(t));
  }
  return out;
}

LongitudinalStage LongitudinalStage::fit(const LandmarkCohort& training, const std::vector<MarkerConfig>& markers) {
  LongitudinalStage st;
  st.t_lm = training.t_lm;
  for (const auto& m : markers) {
    st.marker_names.push_back(m.name);
    st.summaries.push_back(m.summaries);
  }
  const LandmarkCohort sub = select_markers(training, st.marker_names);
  for (std::size_t k = 0; k < markers.size(); ++k)
    if (sub.natures[k] != markers[k].nature)
      throw ConfigError("marker '" + markers[k].name + "' is declared " + to_string(markers[k].nature) +
                        " but the data were loaded as " + to_string(sub.natures[k]));
  st.fits.resize(markers.size());
  parallel_for(markers.size(), [&](std::size_t k) {
    std::vector<MarkerSeries> series;
    series.reserve(sub.subjects.size());
    for (const auto& s : sub.subjects) series.push_back(s.markers[k]);
    MixedModelSpec spec = markers[k].spec;
    if (!markers[k].knot_quantiles.empty()) {
      std::vector<double> times;
      for (const auto& s : series)
        for (const auto& o : s) times.push_back(o.time - spec.time_origin);
      for (BasisSpec* b : {&spec.fixed, &spec.random})
        if (b->kind == BasisKind::NaturalSpline && b->interior_knots.empty())
          *b = BasisSpec::natural_spline_at_quantiles(times, markers[k].knot_quantiles);
    }
    st.fits[k] = fit_mixed_model(series, markers[k].nature, spec, markers[k].name);
  });
  return st;
}

DesignMatrix LongitudinalStage::design(const LandmarkCohort& cohort) const {
  return assemble_design(select_markers(cohort, marker_names), fits, summaries);
}

std::vector<std::size_t> FoldPlan::train_indices(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < outer.size(); ++i)
    if (n_outer == 1 || outer[i] != k) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::test_indices(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < outer.size(); ++i)
    if (n_outer == 1 || outer[i] == k) out.push_back(i);
  return out;
}

LandmarkCohort canonical_order(const LandmarkCohort& cohort) {
  LandmarkCohort out = cohort;
  std::sort(out.subjects.begin(), out.subjects.end(),
            [](const CohortSubject& a, const CohortSubject& b) { return a.subject_id < b.subject_id; });
  return out;
}

FoldPlan make_fold_plan(const LandmarkCohort& cohort, int n_outer, int n_inner, std::uint64_t seed) {
  if (n_outer < 1) throw ConfigError("outer fold count must be at least 1");
  if (n_inner < 0 || n_inner == 1) throw ConfigError("inner fold count must be 0 or at least 2");
  const LandmarkCohort c = canonical_order(cohort);
  FoldPlan plan;
  plan.n_outer = n_outer;
  plan.n_inner = n_inner;
  plan.seed = seed;
  std::vector<int> events;
  for (const auto& s : c.subjects) {
    plan.subject_ids.push_back(s.subject_id);
    events.push_back(s.event);
  }
  plan.outer = n_outer == 1 ? std::vector<int>(events.size(), 0) : event_stratified_folds(events, n_outer, seed);
  if (n_inner > 0)
    for (int k = 0; k < n_outer; ++k) {
      std::vector<int> ev;
      for (auto i : plan.train_indices(k)) ev.push_back(events[i]);
      plan.inner.push_back(event_stratified_folds(ev, n_inner, derive_seed(seed, static_cast<std::uint64_t>(k) + 1)));
    }
  return plan;
}

namespace {

LandmarkCohort subset(const LandmarkCohort& c, const std::vector<std::size_t>& idx) {
  LandmarkCohort out = c;
  out.subjects.clear();
  for (auto i : idx) out.subjects.push_back(c.subjects[i]);
  return out;
}

struct TrainedFold {
  LongitudinalStage stage;
  std::vector<std::unique_ptr<Learner>> learners;
  std::optional<SuperLearnerWeights> weights;
  Eigen::MatrixXd inner_predictions;
  json hyperparameters = json::object();
};

// Everything fitted on `train`: mixed models (unless a stage is supplied),
// every base learner, and the superlearner weights from `inner` folds.
TrainedFold train_fold(const LandmarkCohort& train, const PipelineConfig& config, const std::vector<int>& inner,
                       std::uint64_t fold_seed, const LongitudinalStage* fixed_stage) {
  const auto events = train.events();
  if (std::none_of(events.begin(), events.end(), [](int e) { return e != 0; }))
    throw DataError("a training fold has no events; reduce the fold count");
  TrainedFold tf;
  tf.stage = fixed_stage ? *fixed_stage : LongitudinalStage::fit(train, config.markers);
  const DesignMatrix x = tf.stage.design(train);
  const auto times = train.residual_times();

  std::vector<MethodConfig> base;
  for (const auto& m : config.methods)
    if (m.name != "superlearner") base.push_back(m);
  tf.learners.resize(base.size());
  parallel_for(base.size(), [&](std::size_t m) {
    auto l = make_learner(base[m], derive_seed(fold_seed, m + 1));
    l->fit(x, times, events);
    tf.learners[m] = std::move(l);
  });
  for (const auto& l : tf.learners) tf.hyperparameters[l->name()] = l->hyperparameters();

  if (config.has_superlearner()) {
    const int n_inner = inner.empty() ? 0 : *std::max_element(inner.begin(), inner.end()) + 1;
    if (n_inner < 2) throw ConfigError("the superlearner needs at least 2 inner folds");
    Eigen::MatrixXd z(x.rows(), static_cast<Eigen::Index>(base.size()));
    for (int j = 0; j < n_inner; ++j) {
      std::vector<std::size_t> in, out;
      for (std::size_t i = 0; i < inner.size(); ++i) (inner[i] == j ? out : in).push_back(i);
      std::vector<double> tin;
      std::vector<int> ein;
      for (auto i : in) {
        tin.push_back(times[i]);
        ein.push_back(events[i]);
      }
      if (std::none_of(ein.begin(), ein.end(), [](int e) { return e != 0; }))
        throw DataError("an inner training fold has no events; reduce the inner fold count");
      const DesignMatrix xin = x.select_rows(in), xout = x.select_rows(out);
      std::vector<std::vector<double>> preds(base.size());
      parallel_for(base.size(), [&](std::size_t m) {
        auto l = tf.learners[m]->with_tuned_hyperparameters();
        l->fit(xin, tin, ein);
        preds[m] = l->predict(xout, config.t_hor);
      });
      for (std::size_t m = 0; m < base.size(); ++m)
        for (std::size_t r = 0; r < out.size(); ++r)
          z(static_cast<Eigen::Index>(out[r]), static_cast<Eigen::Index>(m)) = preds[m][r];
    }
    tf.weights = superlearner_weights(z, times, events, config.t_hor, config.base_methods());
    tf.inner_predictions = std::move(z);
    tf.hyperparameters["superlearner"] = to_json(*tf.weights);
  }
  return tf;
}

Eigen::MatrixXd predict_trained(const LongitudinalStage& stage, const std::vector<std::unique_ptr<Learner>>& learners,
                                const std::optional<SuperLearnerWeights>& weights, const LandmarkCohort& cohort,
                                double t_hor) {
  const DesignMatrix x = stage.design(cohort);
  const auto m = static_cast<Eigen::Index>(learners.size());
  Eigen::MatrixXd p(x.rows(), m + (weights ? 1 : 0));
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto v = learners[static_cast<std::size_t>(k)]->predict(x, t_hor);
    for (Eigen::Index i = 0; i < x.rows(); ++i) p(i, k) = v[static_cast<std::size_t>(i)];
  }
  if (weights) {
    const auto sl = superlearner_predict(*weights, p.leftCols(m));
    for (Eigen::Index i = 0; i < x.rows(); ++i) p(i, m) = sl[static_cast<std::size_t>(i)];
  }
  return p;
}

void check_plan(const LandmarkCohort& cohort, const FoldPlan& plan) {
  if (cohort.subjects.size() != plan.subject_ids.size())
    throw ConfigError("fold plan and cohort differ in size");
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
    if (cohort.subjects[i].subject_id != plan.subject_ids[i])
      throw ConfigError("fold plan does not match the cohort (subject '" + cohort.subjects[i].subject_id + "')");
}

}  // namespace

FoldResult run_fold(const LandmarkCohort& cohort, const PipelineConfig& config, const FoldPlan& plan, int k) {
  check_plan(cohort, plan);
  if (k < 0 || k >= plan.n_outer) throw std::out_of_range("run_fold: fold index out of range");
  FoldResult r;
  r.fold = k;
  r.test = plan.test_indices(k);
  r.methods = config.output_methods();
  const LandmarkCohort train = subset(cohort, plan.train_indices(k));
  const LandmarkCohort test = subset(cohort, r.test);
  std::optional<LongitudinalStage> shared;
  if (!config.refit_longitudinal) shared = LongitudinalStage::fit(cohort, config.markers);
  static const std::vector<int> no_inner;
  const auto& inner = plan.inner.empty() ? no_inner : plan.inner[static_cast<std::size_t>(k)];
  TrainedFold tf = train_fold(train, config, inner, derive_seed(plan.seed, static_cast<std::uint64_t>(k) + 1),
                              shared ? &*shared : nullptr);
  r.predictions = predict_trained(tf.stage, tf.learners, tf.weights, test, config.t_hor);
  r.weights = tf.weights;
  r.inner_predictions = std::move(tf.inner_predictions);
  r.hyperparameters = std::move(tf.hyperparameters);
  return r;
}

CvResult run_pipeline_cv(const LandmarkCohort& cohort, const PipelineConfig& config, const FoldPlan& plan,
                         const std::map<std::string, double>& truth) {
  config.validate();
  if (config.has_superlearner() && plan.n_inner < 2)
    throw ConfigError("the superlearner needs a fold plan with inner folds");
  const LandmarkCohort c = canonical_order(cohort);
  check_plan(c, plan);

  CvResult res;
  res.subject_ids = plan.subject_ids;
  res.fold = plan.outer;
  res.methods = config.output_methods();
  res.folds.resize(static_cast<std::size_t>(plan.n_outer));
  parallel_for(res.folds.size(), [&](std::size_t k) { res.folds[k] = run_fold(c, config, plan, static_cast<int>(k)); });

  const auto n = static_cast<Eigen::Index>(c.subjects.size());
  res.predictions.setZero(n, static_cast<Eigen::Index>(res.methods.size()));
  for (const auto& f : res.folds)
    for (std::size_t r = 0; r < f.test.size(); ++r)
      res.predictions.row(static_cast<Eigen::Index>(f.test[r])) = f.predictions.row(static_cast<Eigen::Index>(r));

  const auto times = c.residual_times();
  const auto events = c.events();
  std::vector<double> true_p;
  if (!truth.empty())
    for (const auto& s : c.subjects) {
      auto it = truth.find(s.subject_id);
      if (it == truth.end()) throw DataError("no true probability for subject '" + s.subject_id + "'");
      true_p.push_back(it->second);
    }
  for (Eigen::Index m = 0; m < res.predictions.cols(); ++m) {
    std::vector<double> p(res.predictions.col(m).data(), res.predictions.col(m).data() + n);
    res.metrics.push_back(evaluate_predictions(p, times, events, config.t_hor, true_p));
  }
  return res;
}

std::vector<std::string> TrainedPipeline::methods() const {
  std::vector<std::string> out;
  for (const auto& l : learners) out.push_back(l->name());
  if (weights) out.push_back("superlearner");
  return out;
}

TrainedPipeline fit_pipeline(const LandmarkCohort& cohort, const PipelineConfig& config) {
  config.validate();
  const LandmarkCohort c = canonical_order(cohort);
  const FoldPlan plan = make_fold_plan(c, 1, config.has_superlearner() ? config.n_inner : 0, config.seed);
  TrainedFold tf = train_fold(c, config, plan.inner.empty() ? std::vector<int>{} : plan.inner[0],
                              derive_seed(plan.seed, 1), nullptr);
  TrainedPipeline tp;
  tp.t_lm = config.t_lm;
  tp.t_hor = config.t_hor;
  tp.stage = std::move(tf.stage);
  tp.learners = std::move(tf.learners);
  tp.weights = std::move(tf.weights);
  return tp;
}

Eigen::MatrixXd predict_pipeline(const TrainedPipeline& model, const LandmarkCohort& cohort) {
  return predict_trained(model.stage, model.learners, model.weights, cohort, model.t_hor);
}

json save_pipeline(const TrainedPipeline& model) {
  json markers = json::array();
  for (std::size_t k = 0; k < model.stage.fits.size(); ++k) {
    const auto& s = model.stage.summaries[k];
    if (!s.custom.empty())
      throw ConfigError("marker '" + model.stage.marker_names[k] + "': custom summaries cannot be saved");
    json sj{{"random_effects", s.random_effects}, {"level", s.level}, {"slope", s.slope}, {"cumulative", s.cumulative}};
    if (s.window) sj["window"] = *s.window;
    markers.push_back(json{{"name", model.stage.marker_names[k]},
                           {"mixed_model", to_json(model.stage.fits[k])},
                           {"summaries", sj}});
  }
  json learners = json::array();
  for (const auto& l : model.learners) learners.push_back(save_learner(*l));
  json payload{{"t_lm", model.t_lm}, {"t_hor", model.t_hor}, {"markers", markers}, {"learners", learners}};
  if (model.weights) payload["superlearner"] = to_json(*model.weights);
  return wrap_model("pipeline", payload);
}

TrainedPipeline load_pipeline(const json& doc) {
  const json& p = unwrap_model(doc, "pipeline");
  try {
    TrainedPipeline tp;
    tp.t_lm = p.at("t_lm").get<double>();
    tp.t_hor = p.at("t_hor").get<double>();
    tp.stage.t_lm = tp.t_lm;
    for (const auto& m : p.at("markers")) {
      tp.stage.marker_names.push_back(m.at("name").get<std::string>());
      tp.stage.fits.push_back(mixed_model_from_json(m.at("mixed_model")));
      const auto& sj = m.at("summaries");
      SummaryConfig s;
      s.random_effects = sj.at("random_effects").get<bool>();
      s.level = sj.at("level").get<bool>();
      s.slope = sj.at("slope").get<bool>();
      s.cumulative = sj.at("cumulative").get<bool>();
      if (sj.contains("window")) s.window = sj.at("window").get<double>();
      tp.stage.summaries.push_back(s);
    }
    for (const auto& l : p.at("learners")) tp.learners.push_back(load_learner(l));
    if (p.contains("superlearner")) {
      tp.weights = weights_from_json(p.at("superlearner"));
      if (tp.weights->methods.size() != tp.learners.size())
        throw DataError("superlearner weights do not match the saved learners");
    }
    return tp;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed pipeline document: ") + e.what());
  }
}

}  // namespace dynpred
