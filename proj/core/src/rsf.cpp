#include "dynpred/rsf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynpred/cox.hpp"
#include "dynpred/error.hpp"
#include "dynpred/log.hpp"
#include "dynpred/metrics.hpp"
#include "dynpred/parallel.hpp"

namespace dynpred {

namespace {

// Members sorted by decreasing time; groups of tied times are contiguous.
struct SortedMembers {
  std::vector<double> time;
  std::vector<int> event;
  std::vector<std::size_t> row;  // training row (or position for the public scorer)
};

double logrank_sorted(const SortedMembers& m, std::span<const char> left) {
  double y = 0.0, y1 = 0.0, num = 0.0, var = 0.0;
  const std::size_t n = m.time.size();
  std::size_t k = 0;
  while (k < n) {
    std::size_t e = k;
    double d = 0.0, d1 = 0.0, g = 0.0, g1 = 0.0;
    while (e < n && m.time[e] == m.time[k]) {
      g += 1.0;
      if (left[e]) g1 += 1.0;
      if (m.event[e]) {
        d += 1.0;
        if (left[e]) d1 += 1.0;
      }
      ++e;
    }
    y += g;
    y1 += g1;
    if (d > 0.0) {
      num += d1 - y1 * d / y;
      if (y > 1.0) {
        const double f = y1 / y;
        var += f * (1.0 - f) * (y - d) / (y - 1.0) * d;
      }
    }
    k = e;
  }
  if (!(var > 1e-14)) return 0.0;
  return std::abs(num) / std::sqrt(var);
}

SortedMembers sort_members(std::span<const std::size_t> rows, std::span<const double> times,
                           std::span<const int> events) {
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return times[rows[a]] > times[rows[b]]; });
  SortedMembers m;
  for (auto i : idx) {
    m.time.push_back(times[rows[i]]);
    m.event.push_back(events[rows[i]]);
    m.row.push_back(rows[i]);
  }
  return m;
}

// Concordance of scores over precomputed comparable pairs (i had the event first).
double pair_concordance(const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                        const std::vector<double>& score) {
  if (pairs.empty()) return 0.5;
  double c = 0.0;
  for (const auto& [i, j] : pairs) {
    if (score[i] > score[j])
      c += 1.0;
    else if (score[i] == score[j])
      c += 0.5;
  }
  return c / static_cast<double>(pairs.size());
}

std::vector<std::pair<std::size_t, std::size_t>> comparable_pairs(std::span<const std::size_t> subjects,
                                                                  std::span<const double> times,
                                                                  std::span<const int> events) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < subjects.size(); ++a) {
    if (!events[subjects[a]]) continue;
    for (std::size_t b = 0; b < subjects.size(); ++b)
      if (a != b && times[subjects[b]] > times[subjects[a]]) pairs.emplace_back(a, b);
  }
  return pairs;
}

double sum_over_grid(const StepFunction& f, const std::vector<double>& grid) {
  double s = 0.0;
  for (double t : grid) s += f(t);
  return s;
}

}  // namespace

double logrank_split_score(std::span<const double> times, std::span<const int> events,
                           std::span<const char> in_left) {
  if (times.size() != events.size() || times.size() != in_left.size())
    throw std::invalid_argument("logrank_split_score: inputs differ in length");
  std::vector<std::size_t> rows(times.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto m = sort_members(rows, times, events);
  std::vector<char> left(m.row.size());
  for (std::size_t k = 0; k < m.row.size(); ++k) left[k] = in_left[m.row[k]];
  return logrank_sorted(m, left);
}

int SurvivalTree::leaf_index(RowRef row) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].column >= 0) {
    const auto& nd = nodes[static_cast<std::size_t>(k)];
    k = row[nd.column] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(k)].leaf;
}

int SurvivalTree::leaf_index(RowRef row, int column, double value) const {
  int k = 0;
  while (nodes[static_cast<std::size_t>(k)].column >= 0) {
    const auto& nd = nodes[static_cast<std::size_t>(k)];
    const double v = nd.column == column ? value : row[nd.column];
    k = v <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[static_cast<std::size_t>(k)].leaf;
}

SurvivalTree grow_tree(const Eigen::MatrixXd& x, std::span<const double> times, std::span<const int> events,
                       std::span<const std::size_t> sample, const TreeOptions& options, std::mt19937_64& rng) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const int p = static_cast<int>(x.cols());
  const int mtry = std::clamp(options.mtry, p > 0 ? 1 : 0, p);
  const int s_min = std::max(1, options.nodesize);
  const std::size_t min_split = static_cast<std::size_t>(std::max(2 * s_min, s_min + 1));

  SurvivalTree tree;
  tree.inbag_count.assign(n, 0);
  tree.uses_column.assign(static_cast<std::size_t>(p), 0);
  for (auto i : sample) ++tree.inbag_count[i];

  std::vector<int> stamp_l(n, -1), stamp_r(n, -1);
  int stamp = 0;
  std::vector<int> cols(static_cast<std::size_t>(p));
  std::iota(cols.begin(), cols.end(), 0);

  struct Pending {
    int node;
    std::vector<std::size_t> rows;
  };
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::vector<std::size_t>(sample.begin(), sample.end())});

  auto make_leaf = [&](int node, const std::vector<std::size_t>& rows) {
    std::vector<double> t;
    std::vector<int> e;
    for (auto r : rows) {
      t.push_back(times[r]);
      e.push_back(events[r]);
    }
    tree.nodes[static_cast<std::size_t>(node)].leaf = static_cast<int>(tree.leaf_chf.size());
    tree.leaf_chf.push_back(nelson_aalen(t, e));
    tree.leaf_size.push_back(rows.size());
  };

  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const auto& rows = cur.rows;
    const bool has_event = std::any_of(rows.begin(), rows.end(), [&](std::size_t r) { return events[r] != 0; });
    if (rows.size() < min_split || !has_event || mtry == 0) {
      make_leaf(cur.node, rows);
      continue;
    }
    const SortedMembers m = sort_members(rows, times, events);

    // Draw mtry distinct columns, scanned in increasing index order.
    for (int k = 0; k < mtry; ++k) {
      std::uniform_int_distribution<int> pick(k, p - 1);
      std::swap(cols[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<int> chosen(cols.begin(), cols.begin() + mtry);
    std::sort(chosen.begin(), chosen.end());

    double best_score = 0.0;
    int best_col = -1;
    double best_thr = 0.0;
    std::vector<char> left(m.row.size());
    std::vector<double> vals;
    for (int c : chosen) {
      vals.clear();
      for (auto r : m.row) vals.push_back(x(static_cast<Eigen::Index>(r), c));
      std::vector<double> uniq = vals;
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      if (uniq.size() < 2) continue;
      std::vector<double> thr;
      for (std::size_t k = 0; k + 1 < uniq.size(); ++k) thr.push_back(0.5 * (uniq[k] + uniq[k + 1]));
      if (uniq.size() > static_cast<std::size_t>(options.max_candidates) + 1) {
        for (int k = 0; k < options.max_candidates; ++k) {
          std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), thr.size() - 1);
          std::swap(thr[static_cast<std::size_t>(k)], thr[pick(rng)]);
        }
        thr.resize(static_cast<std::size_t>(options.max_candidates));
        std::sort(thr.begin(), thr.end());
      }
      for (double th : thr) {
        ++stamp;
        int ul = 0, ur = 0;
        for (std::size_t k = 0; k < m.row.size(); ++k) {
          left[k] = vals[k] <= th;
          const std::size_t r = m.row[k];
          if (left[k]) {
            if (stamp_l[r] != stamp) {
              stamp_l[r] = stamp;
              ++ul;
            }
          } else if (stamp_r[r] != stamp) {
            stamp_r[r] = stamp;
            ++ur;
          }
        }
        if (ul < s_min || ur < s_min) continue;
        const double score = logrank_sorted(m, left);
        if (score > best_score) {
          best_score = score;
          best_col = c;
          best_thr = th;
        }
      }
    }
    if (best_col < 0) {
      make_leaf(cur.node, rows);
      continue;
    }
    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) (x(static_cast<Eigen::Index>(r), best_col) <= best_thr ? lrows : rrows).push_back(r);
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int ri = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    auto& nd = tree.nodes[static_cast<std::size_t>(cur.node)];
    nd.column = best_col;
    nd.threshold = best_thr;
    nd.left = li;
    nd.right = ri;
    tree.uses_column[static_cast<std::size_t>(best_col)] = 1;
    // Right pushed first so the left subtree is grown first.
    stack.push_back({ri, std::move(rrows)});
    stack.push_back({li, std::move(lrows)});
  }
  return tree;
}

double Forest::chf(RowRef row, double t) const {
  double s = 0.0;
  for (const auto& tr : trees) s += tr.leaf_chf[static_cast<std::size_t>(tr.leaf_index(row))](t);
  return trees.empty() ? 0.0 : s / static_cast<double>(trees.size());
}

Forest fit_rsf(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
               const RsfOptions& options) {
  if (options.n_trees < 1) throw ConfigError("random survival forest needs at least one tree");
  if (options.nodesize < 1) throw ConfigError("nodesize must be at least 1");
  const std::size_t n = times.size();
  if (static_cast<std::size_t>(design.rows()) != n || events.size() != n)
    throw std::invalid_argument("fit_rsf: design rows, times and events differ in length");
  if (std::none_of(events.begin(), events.end(), [](int e) { return e != 0; }))
    throw DataError("random survival forest needs at least one event");

  Forest f;
  f.columns = design.column_names;
  f.x = design.values;
  f.times.assign(times.begin(), times.end());
  f.events.assign(events.begin(), events.end());
  f.seed = options.seed;
  f.nodesize = options.nodesize;
  const auto p = static_cast<int>(design.cols());
  f.mtry = options.mtry > 0 ? std::min(options.mtry, p) : static_cast<int>(std::ceil(std::sqrt(p)));
  for (std::size_t i = 0; i < n; ++i)
    if (events[i]) f.event_grid.push_back(times[i]);
  std::sort(f.event_grid.begin(), f.event_grid.end());
  f.event_grid.erase(std::unique(f.event_grid.begin(), f.event_grid.end()), f.event_grid.end());

  const TreeOptions topt{f.mtry, options.nodesize, options.max_candidates};
  f.trees.resize(static_cast<std::size_t>(options.n_trees));
  parallel_for(f.trees.size(), [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(options.seed, b));
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    std::vector<std::size_t> sample(n);
    for (auto& s : sample) s = draw(rng);
    auto tree = grow_tree(f.x, f.times, f.events, sample, topt, rng);
    for (const auto& leaf : tree.leaf_chf) tree.leaf_mortality.push_back(sum_over_grid(leaf, f.event_grid));
    f.trees[b] = std::move(tree);
  });

  f.oob_mortality.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (const auto& tr : f.trees)
    for (std::size_t i = 0; i < n; ++i)
      if (tr.inbag_count[i] == 0) {
        sum[i] += tr.leaf_mortality[static_cast<std::size_t>(tr.leaf_index(f.x.row(static_cast<Eigen::Index>(i))))];
        ++count[i];
      }
  for (std::size_t i = 0; i < n; ++i)
    if (count[i] > 0) f.oob_mortality[i] = sum[i] / count[i];
  f.oob_error = oob_error(f);
  return f;
}

double oob_error(const Forest& forest) {
  std::vector<double> risk, t;
  std::vector<int> e;
  for (std::size_t i = 0; i < forest.oob_mortality.size(); ++i) {
    if (std::isnan(forest.oob_mortality[i])) continue;
    risk.push_back(forest.oob_mortality[i]);
    t.push_back(forest.times[i]);
    e.push_back(forest.events[i]);
  }
  return 1.0 - harrell_concordance(risk, t, e);
}

std::vector<double> predict_rsf_probability(const Forest& forest, const DesignMatrix& design, double t_hor) {
  const Eigen::MatrixXd x = gather_columns(design, forest.columns);
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  parallel_for(out.size(), [&](std::size_t i) {
    out[i] = predict_rsf_probability(forest, x.row(static_cast<Eigen::Index>(i)), t_hor);
  });
  return out;
}

double predict_rsf_probability(const Forest& forest, RowRef row,
                               double t_hor) {
  return std::clamp(1.0 - std::exp(-forest.chf(row, t_hor)), 0.0, 1.0);
}

namespace {

// Per-tree VIMP contributions for the requested columns (0 where the tree ignores a column).
std::vector<double> tree_vimp(const Forest& f, std::size_t b, std::span<const std::size_t> columns,
                              std::uint64_t seed) {
  const auto& tr = f.trees[b];
  std::vector<double> out(columns.size(), 0.0);
  std::vector<std::size_t> oob;
  for (std::size_t i = 0; i < f.times.size(); ++i)
    if (tr.inbag_count[i] == 0) oob.push_back(i);
  if (oob.size() < 2) return out;
  const auto pairs = comparable_pairs(oob, f.times, f.events);
  if (pairs.empty()) return out;
  std::vector<double> score(oob.size());
  for (std::size_t k = 0; k < oob.size(); ++k)
    score[k] =
        tr.leaf_mortality[static_cast<std::size_t>(tr.leaf_index(f.x.row(static_cast<Eigen::Index>(oob[k]))))];
  const double c0 = pair_concordance(pairs, score);
  std::vector<double> perm(oob.size()), pscore(oob.size());
  for (std::size_t q = 0; q < columns.size(); ++q) {
    const std::size_t col = columns[q];
    if (!tr.uses_column[col]) continue;
    for (std::size_t k = 0; k < oob.size(); ++k) perm[k] = f.x(static_cast<Eigen::Index>(oob[k]), static_cast<Eigen::Index>(col));
    std::mt19937_64 rng(derive_seed(derive_seed(seed, b), col));
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < oob.size(); ++k)
      pscore[k] = tr.leaf_mortality[static_cast<std::size_t>(
          tr.leaf_index(f.x.row(static_cast<Eigen::Index>(oob[k])), static_cast<int>(col), perm[k]))];
    out[q] = c0 - pair_concordance(pairs, pscore);
  }
  return out;
}

std::vector<double> vimp_columns(const Forest& f, std::span<const std::size_t> columns, std::uint64_t seed) {
  std::vector<std::vector<double>> per_tree(f.trees.size());
  parallel_for(f.trees.size(), [&](std::size_t b) { per_tree[b] = tree_vimp(f, b, columns, seed); });
  std::vector<double> out(columns.size(), 0.0);
  for (const auto& v : per_tree)
    for (std::size_t q = 0; q < columns.size(); ++q) out[q] += v[q];
  for (auto& v : out) v /= static_cast<double>(std::max<std::size_t>(1, f.trees.size()));
  return out;
}

}  // namespace

double vimp(const Forest& forest, std::size_t column, std::uint64_t seed) {
  if (column >= forest.columns.size()) throw std::out_of_range("vimp: column index out of range");
  const std::size_t cols[] = {column};
  return vimp_columns(forest, cols, seed)[0];
}

std::vector<double> vimp_all(const Forest& forest, std::uint64_t seed) {
  std::vector<std::size_t> cols(forest.columns.size());
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return vimp_columns(forest, cols, seed);
}

std::vector<int> default_mtry_grid(std::size_t p) {
  const double pd = static_cast<double>(std::max<std::size_t>(p, 1));
  std::vector<int> g = {static_cast<int>(std::ceil(std::sqrt(pd))), static_cast<int>(std::ceil(pd / 3.0)),
                        static_cast<int>(std::ceil(pd / 2.0)), static_cast<int>(pd)};
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

std::vector<int> default_nodesize_grid() { return {5, 15, 30, 50}; }

RsfTuning tune_rsf(const DesignMatrix& design, std::span<const double> times, std::span<const int> events,
                   std::vector<int> mtry_grid, std::vector<int> nodesize_grid, const RsfOptions& options) {
  if (mtry_grid.empty()) mtry_grid = default_mtry_grid(static_cast<std::size_t>(design.cols()));
  if (nodesize_grid.empty()) nodesize_grid = default_nodesize_grid();
  std::sort(mtry_grid.begin(), mtry_grid.end());
  mtry_grid.erase(std::unique(mtry_grid.begin(), mtry_grid.end()), mtry_grid.end());
  std::sort(nodesize_grid.begin(), nodesize_grid.end(), std::greater<>());
  nodesize_grid.erase(std::unique(nodesize_grid.begin(), nodesize_grid.end()), nodesize_grid.end());

  RsfTuning t;
  t.mtry_grid = mtry_grid;
  t.nodesize_grid = nodesize_grid;
  t.oob_errors.assign(mtry_grid.size(), std::vector<double>(nodesize_grid.size(), 0.0));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < mtry_grid.size(); ++a)
    for (std::size_t b = 0; b < nodesize_grid.size(); ++b) {
      RsfOptions o = options;
      o.mtry = mtry_grid[a];
      o.nodesize = nodesize_grid[b];
      const double err = fit_rsf(design, times, events, o).oob_error;
      t.oob_errors[a][b] = err;
      if (err < best) {
        best = err;
        t.mtry = mtry_grid[a];
        t.nodesize = nodesize_grid[b];
      }
    }
  return t;
}

std::vector<std::string> select_vars_rsf(const Forest& forest, std::uint64_t seed) {
  const auto v = vimp_all(forest, seed);
  std::vector<std::string> keep;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (v[j] > 0.0) keep.push_back(forest.columns[j]);
  if (keep.empty()) {
    warn("RSF variable selection kept no column; using all columns");
    keep = forest.columns;
  }
  return keep;
}

}  // namespace dynpred
