#include "dynpred/serialize.hpp"

#include "dynpred/error.hpp"

namespace dynpred {

namespace {

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("model document lacks field '") + key + "'");
  return *it;
}

template <class T>
std::vector<T> vec(const json& j, const char* key) {
  return field(j, key).get<std::vector<T>>();
}

}  // namespace

json wrap_model(const std::string& kind, json payload) {
  return json{{"format", "dynpred.model"}, {"version", kModelFormatVersion}, {"kind", kind},
              {"payload", std::move(payload)}};
}

const json& unwrap_model(const json& doc, const std::string& kind) {
  if (!doc.is_object() || doc.value("format", "") != "dynpred.model")
    throw DataError("not a dynpred model document");
  const int version = doc.value("version", -1);
  if (version != kModelFormatVersion)
    throw DataError("unsupported model format version " + std::to_string(version));
  if (doc.value("kind", "") != kind)
    throw DataError("model document holds '" + doc.value("kind", "") + "', expected '" + kind + "'");
  return field(doc, "payload");
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = field(j, "rows").get<Eigen::Index>();
  const auto cols = field(j, "cols").get<Eigen::Index>();
  const auto data = vec<double>(j, "data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("matrix data has the wrong length");
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

json to_json(const StepFunction& f) {
  return json{{"times", f.times()}, {"values", f.values()}, {"initial", f.initial()}};
}

StepFunction step_function_from_json(const json& j) {
  return StepFunction(vec<double>(j, "times"), vec<double>(j, "values"), field(j, "initial").get<double>());
}

json to_json(const BasisSpec& b) {
  return json{{"kind", to_string(b.kind)}, {"degree", b.degree}, {"interior_knots", b.interior_knots},
              {"boundary_lo", b.boundary_lo}, {"boundary_hi", b.boundary_hi}};
}

BasisSpec basis_from_json(const json& j) {
  BasisSpec b;
  b.kind = parse_basis_kind(field(j, "kind").get<std::string>());
  b.degree = field(j, "degree").get<int>();
  b.interior_knots = vec<double>(j, "interior_knots");
  b.boundary_lo = field(j, "boundary_lo").get<double>();
  b.boundary_hi = field(j, "boundary_hi").get<double>();
  b.validate();
  return b;
}

json to_json(const MixedModelFit& f) {
  return json{{"marker", f.marker},
              {"link", to_string(f.link)},
              {"beta", vector_to_json(f.beta)},
              {"chol_b", matrix_to_json(f.chol_b)},
              {"sigma2", f.sigma2},
              {"basis_fixed", to_json(f.basis_fixed)},
              {"basis_random", to_json(f.basis_random)},
              {"time_origin", f.time_origin},
              {"loglik", f.loglik},
              {"iterations", f.iterations}};
}

MixedModelFit mixed_model_from_json(const json& j) {
  MixedModelFit f;
  f.marker = field(j, "marker").get<std::string>();
  f.link = parse_link(field(j, "link").get<std::string>());
  f.beta = vector_from_json(field(j, "beta"));
  f.chol_b = matrix_from_json(field(j, "chol_b"));
  f.sigma2 = field(j, "sigma2").get<double>();
  f.basis_fixed = basis_from_json(field(j, "basis_fixed"));
  f.basis_random = basis_from_json(field(j, "basis_random"));
  f.time_origin = field(j, "time_origin").get<double>();
  f.loglik = field(j, "loglik").get<double>();
  f.iterations = field(j, "iterations").get<int>();
  if (static_cast<std::size_t>(f.beta.size()) != f.basis_fixed.size() ||
      static_cast<std::size_t>(f.chol_b.rows()) != f.basis_random.size())
    throw DataError("mixed model '" + f.marker + "': parameter sizes do not match its bases");
  return f;
}

json to_json(const CoxFit& f) {
  return json{{"columns", f.columns},
              {"coef", vector_to_json(f.coef)},
              {"means", vector_to_json(f.means)},
              {"sds", vector_to_json(f.sds)},
              {"baseline_chf", to_json(f.baseline_chf)},
              {"loglik_partial", f.loglik_partial},
              {"iterations", f.iterations}};
}

CoxFit cox_from_json(const json& j) {
  CoxFit f;
  f.columns = vec<std::string>(j, "columns");
  f.coef = vector_from_json(field(j, "coef"));
  f.means = vector_from_json(field(j, "means"));
  f.sds = vector_from_json(field(j, "sds"));
  f.baseline_chf = step_function_from_json(field(j, "baseline_chf"));
  f.loglik_partial = field(j, "loglik_partial").get<double>();
  f.iterations = field(j, "iterations").get<int>();
  if (static_cast<std::size_t>(f.coef.size()) != f.columns.size() || f.means.size() != f.coef.size())
    throw DataError("Cox model: coefficient and column counts differ");
  return f;
}

json to_json(const SplsDrFit& f) {
  return json{{"columns", f.columns},
              {"means", vector_to_json(f.means)},
              {"sds", vector_to_json(f.sds)},
              {"eta", f.eta},
              {"weights", matrix_to_json(f.components.weights)},
              {"loadings", matrix_to_json(f.components.loadings)},
              {"rotation", matrix_to_json(f.components.rotation)},
              {"inner", to_json(f.inner)}};
}

SplsDrFit spls_from_json(const json& j) {
  SplsDrFit f;
  f.columns = vec<std::string>(j, "columns");
  f.means = vector_from_json(field(j, "means"));
  f.sds = vector_from_json(field(j, "sds"));
  f.eta = field(j, "eta").get<double>();
  f.components.weights = matrix_from_json(field(j, "weights"));
  f.components.loadings = matrix_from_json(field(j, "loadings"));
  f.components.rotation = matrix_from_json(field(j, "rotation"));
  f.inner = cox_from_json(field(j, "inner"));
  if (static_cast<std::size_t>(f.components.rotation.rows()) != f.columns.size())
    throw DataError("sPLS-DR model: rotation rows do not match the columns");
  return f;
}

json to_json(const Forest& f) {
  json trees = json::array();
  for (const auto& t : f.trees) {
    std::vector<int> column, left, right, leaf;
    std::vector<double> threshold;
    for (const auto& n : t.nodes) {
      column.push_back(n.column);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      leaf.push_back(n.leaf);
    }
    json leaves = json::array();
    for (const auto& l : t.leaf_chf) leaves.push_back(to_json(l));
    trees.push_back(json{{"column", column}, {"threshold", threshold}, {"left", left}, {"right", right},
                         {"leaf", leaf}, {"leaves", leaves}, {"leaf_size", t.leaf_size}});
  }
  return json{{"columns", f.columns}, {"mtry", f.mtry},         {"nodesize", f.nodesize},
              {"seed", f.seed},       {"event_grid", f.event_grid}, {"oob_error", f.oob_error},
              {"trees", trees}};
}

Forest forest_from_json(const json& j) {
  Forest f;
  f.columns = vec<std::string>(j, "columns");
  f.mtry = field(j, "mtry").get<int>();
  f.nodesize = field(j, "nodesize").get<int>();
  f.seed = field(j, "seed").get<std::uint64_t>();
  f.event_grid = vec<double>(j, "event_grid");
  f.oob_error = field(j, "oob_error").get<double>();
  const int p = static_cast<int>(f.columns.size());
  for (const auto& tj : field(j, "trees")) {
    SurvivalTree t;
    const auto column = vec<int>(tj, "column");
    const auto threshold = vec<double>(tj, "threshold");
    const auto left = vec<int>(tj, "left");
    const auto right = vec<int>(tj, "right");
    const auto leaf = vec<int>(tj, "leaf");
    const std::size_t nn = column.size();
    if (threshold.size() != nn || left.size() != nn || right.size() != nn || leaf.size() != nn || nn == 0)
      throw DataError("forest document: malformed node arrays");
    for (const auto& l : field(tj, "leaves")) t.leaf_chf.push_back(step_function_from_json(l));
    t.leaf_size = vec<std::size_t>(tj, "leaf_size");
    t.uses_column.assign(static_cast<std::size_t>(p), 0);
    for (std::size_t k = 0; k < nn; ++k) {
      TreeNode n{column[k], threshold[k], left[k], right[k], leaf[k]};
      const int nodes = static_cast<int>(nn);
      if (n.column >= p || (n.column >= 0 && (n.left <= 0 || n.left >= nodes || n.right <= 0 || n.right >= nodes)) ||
          (n.column < 0 && (n.leaf < 0 || n.leaf >= static_cast<int>(t.leaf_chf.size()))))
        throw DataError("forest document: node references out of range");
      if (n.column >= 0) t.uses_column[static_cast<std::size_t>(n.column)] = 1;
      t.nodes.push_back(n);
    }
    for (const auto& l : t.leaf_chf) {
      double s = 0.0;
      for (double g : f.event_grid) s += l(g);
      t.leaf_mortality.push_back(s);
    }
    f.trees.push_back(std::move(t));
  }
  return f;
}

json to_json(const SuperLearnerWeights& w) {
  return json{{"methods", w.methods}, {"omega", vector_to_json(w.omega)}, {"objective", w.objective},
              {"iterations", w.iterations}};
}

SuperLearnerWeights weights_from_json(const json& j) {
  SuperLearnerWeights w;
  w.methods = vec<std::string>(j, "methods");
  w.omega = vector_from_json(field(j, "omega"));
  w.objective = field(j, "objective").get<double>();
  w.iterations = field(j, "iterations").get<int>();
  if (static_cast<std::size_t>(w.omega.size()) != w.methods.size())
    throw DataError("superlearner weights: method and weight counts differ");
  return w;
}

}  // namespace dynpred
