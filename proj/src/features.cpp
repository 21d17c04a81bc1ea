#include "dyhgn/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "dyhgn/errors.hpp"
#include "dyhgn/metrics.hpp"
#include "dyhgn/optim.hpp"

namespace dyhgn {

namespace {

// Event weeks of one linker, sorted, plus its distinct weeks.
struct LinkerHistory {
  std::vector<int> weeks;
  std::vector<int> distinct;

  long count_until(int week) const {
    return std::upper_bound(weeks.begin(), weeks.end(), week) - weeks.begin();
  }
  long distinct_until(int week) const {
    return std::upper_bound(distinct.begin(), distinct.end(), week) - distinct.begin();
  }
};

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::vector<double>> standardize(const LinearModel& m, const std::vector<std::vector<double>>& x) {
  std::vector<std::vector<double>> out(x.size(), std::vector<double>(m.kept.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t k = 0; k < m.kept.size(); ++k) out[i][k] = (x[i][m.kept[k]] - m.mean[k]) / m.scale[k];
  return out;
}

void check_xy(const std::vector<std::vector<double>>& x, const std::vector<int>& y, std::size_t width) {
  if (x.size() != y.size())
    throw DimensionError("feature rows (" + std::to_string(x.size()) + ") and labels (" + std::to_string(y.size()) +
                         ") differ in length");
  for (const auto& row : x)
    if (row.size() != width)
      throw DimensionError("feature row has " + std::to_string(row.size()) + " columns, expected " +
                           std::to_string(width));
  for (auto v : y)
    if (v != 0 && v != 1) throw ValidationError("labels must be 0 or 1");
}

std::vector<double> standardized_gradient(const std::vector<double>& w, double b, double l2,
                                          const std::vector<std::vector<double>>& z, const std::vector<int>& y,
                                          bool include_l2) {
  std::vector<double> g(w.size() + 1, 0.0);
  const double n = static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double s = b;
    for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * z[i][k];
    const double r = (sigmoid(s) - y[i]) / n;
    for (std::size_t k = 0; k < w.size(); ++k) g[k] += r * z[i][k];
    g.back() += r;
  }
  if (include_l2)
    for (std::size_t k = 0; k < w.size(); ++k) g[k] += l2 * w[k];
  return g;
}

}  // namespace

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "global") return FeatureMode::global;
  if (s == "incremental") return FeatureMode::incremental;
  throw ConfigError("unknown feature mode '" + std::string(s) + "' (expected global or incremental)");
}

std::string to_string(FeatureMode m) { return m == FeatureMode::global ? "global" : "incremental"; }

std::vector<double> FeatureRow::values() const {
  std::vector<double> v{static_cast<double>(day), static_cast<double>(week)};
  for (auto r : relations) v.push_back(static_cast<double>(r));
  for (auto s : snapshots) v.push_back(static_cast<double>(s));
  return v;
}

std::vector<std::string> feature_names(const Schema& schema) {
  if (schema.relation_count() != 4) throw ConfigError("feature extraction expects four relations");
  std::vector<std::string> names{"day", "week"};
  for (std::uint32_t r = 0; r < 4; ++r) names.push_back("relations_" + schema.node_types[schema.linker_type(r)]);
  for (std::uint32_t r = 0; r < 4; ++r) names.push_back("snapshots_" + schema.node_types[schema.linker_type(r)]);
  return names;
}

FeatureExtraction extract_features(const std::vector<EventRecord>& events, const std::vector<TargetNode>& targets,
                                   FeatureMode mode, const Schema& schema) {
  if (schema.relation_count() != 4) throw ConfigError("feature extraction expects four relations");
  std::map<EntityRef, LinkerHistory> history;
  std::map<EntityRef, std::array<std::set<EntityRef>, 4>> linkers_of;
  for (const auto& e : events) {
    if (e.relation >= 4) throw ValidationError("relation code out of range: " + std::to_string(e.relation));
    history[e.linker].weeks.push_back(e.week);
    linkers_of[e.target][e.relation].insert(e.linker);
  }
  for (auto& [ref, h] : history) {
    std::sort(h.weeks.begin(), h.weeks.end());
    h.distinct = h.weeks;
    h.distinct.erase(std::unique(h.distinct.begin(), h.distinct.end()), h.distinct.end());
  }

  FeatureExtraction out;
  out.rows.reserve(targets.size());
  for (const auto& t : targets) {
    auto found = linkers_of.find(t.entity);
    if (found == linkers_of.end())
      throw ValidationError("target " + schema.node_types.at(t.entity.type) + ":" + std::to_string(t.entity.id) +
                            " has no events");
    FeatureRow row;
    row.target = t.entity;
    row.day = t.day;
    row.week = t.week;
    row.label = t.binary;
    const int horizon = mode == FeatureMode::global ? std::numeric_limits<int>::max() : t.week;
    bool multi = false;
    for (std::size_t r = 0; r < 4; ++r) {
      const auto& set = found->second[r];
      if (set.size() > 1) multi = true;
      long best = -1;
      long best_snapshots = 0;
      for (const auto& l : set) {  // ascending id, so ties keep the smallest
        const auto& h = history.at(l);
        const long c = h.count_until(horizon);
        if (c > best) {
          best = c;
          best_snapshots = h.distinct_until(horizon);
        }
      }
      row.relations[r] = std::max(best, 0L);
      row.snapshots[r] = best_snapshots;
    }
    if (multi) ++out.multi_linker_targets;
    out.rows.push_back(row);
  }
  return out;
}

double LinearModel::decision(std::span<const double> row) const {
  if (row.size() != names.size())
    throw DimensionError("feature row has " + std::to_string(row.size()) + " columns, expected " +
                         std::to_string(names.size()));
  double s = bias;
  for (std::size_t k = 0; k < kept.size(); ++k) s += weights[k] * (row[kept[k]] - mean[k]) / scale[k];
  return s;
}

std::vector<double> LinearModel::decisions(const std::vector<std::vector<double>>& rows) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(decision(r));
  return out;
}

double LinearModel::weight_of(std::size_t column) const {
  for (std::size_t k = 0; k < kept.size(); ++k)
    if (kept[k] == column) return weights[k];
  return 0.0;
}

LinearModel fit_linear(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       const std::vector<std::string>& names, const FitOptions& options,
                       std::vector<std::string>* warnings) {
  if (x.empty()) throw ValidationError("cannot fit a linear model on zero rows");
  if (!(options.l2 >= 0) || !(options.lr > 0) || options.epochs == 0)
    throw ConfigError("fit options need l2 >= 0, lr > 0 and epochs > 0");
  check_xy(x, y, names.size());

  LinearModel m;
  m.names = names;
  m.l2 = options.l2;
  const double n = static_cast<double>(x.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    double mu = 0.0;
    for (const auto& r : x) mu += r[j];
    mu /= n;
    double var = 0.0;
    for (const auto& r : x) var += (r[j] - mu) * (r[j] - mu);
    const double sd = std::sqrt(var / n);
    if (!(sd > 0)) {
      if (warnings) warnings->push_back("dropped zero-variance feature " + names[j]);
      continue;
    }
    m.kept.push_back(j);
    m.mean.push_back(mu);
    m.scale.push_back(sd);
  }
  m.weights.assign(m.kept.size(), 0.0);

  const auto z = standardize(m, x);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto g = standardized_gradient(m.weights, m.bias, m.l2, z, y, false);
    for (std::size_t k = 0; k < m.weights.size(); ++k)
      m.weights[k] = (m.weights[k] - options.lr * g[k]) / (1.0 + options.lr * options.l2);
    m.bias -= options.lr * g.back();
  }
  return m;
}

std::vector<double> linear_gradient(const LinearModel& model, const std::vector<std::vector<double>>& x,
                                    const std::vector<int>& y) {
  check_xy(x, y, model.names.size());
  return standardized_gradient(model.weights, model.bias, model.l2, standardize(model, x), y, true);
}

std::vector<Importance> permutation_importance(const LinearModel& model, const std::vector<std::vector<double>>& x,
                                               const std::vector<int>& y, std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) throw ConfigError("permutation importance needs at least one repeat");
  check_xy(x, y, model.names.size());
  const double base = average_precision(model.decisions(x), y);

  std::vector<std::vector<std::size_t>> perms(repeats);
  for (std::size_t k = 0; k < repeats; ++k) {
    perms[k].resize(x.size());
    std::iota(perms[k].begin(), perms[k].end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, {k}));
    std::shuffle(perms[k].begin(), perms[k].end(), rng);
  }

  std::vector<Importance> out;
  auto shuffled = x;
  for (std::size_t j = 0; j < model.names.size(); ++j) {
    std::vector<double> drops;
    for (const auto& p : perms) {
      for (std::size_t i = 0; i < x.size(); ++i) shuffled[i][j] = x[p[i]][j];
      drops.push_back(base - average_precision(model.decisions(shuffled), y));
    }
    for (std::size_t i = 0; i < x.size(); ++i) shuffled[i][j] = x[i][j];
    const double mean = std::accumulate(drops.begin(), drops.end(), 0.0) / static_cast<double>(drops.size());
    double var = 0.0;
    for (auto d : drops) var += (d - mean) * (d - mean);
    out.push_back({model.names[j], mean, drops.size() > 1 ? std::sqrt(var / static_cast<double>(drops.size() - 1)) : 0.0});
  }
  return out;
}

BaselineResult run_baseline(const UnrolledGraph& graph, FeatureMode mode, SplitPolicy split, std::uint64_t seed,
                            const FitOptions& options) {
  const auto names = feature_names(graph.schema);
  const auto features = extract_features(graph.events, graph.targets, mode, graph.schema);
  const auto parts = make_split(graph.targets, split, seed);

  std::vector<std::vector<double>> x_fit, x_test;
  std::vector<int> y_fit, y_test;
  for (const auto* part : {&parts.train, &parts.val})
    for (auto p : *part) {
      x_fit.push_back(features.rows[p].values());
      y_fit.push_back(features.rows[p].label);
    }
  for (auto p : parts.test) {
    x_test.push_back(features.rows[p].values());
    y_test.push_back(features.rows[p].label);
  }

  BaselineResult r;
  r.mode = mode;
  r.split = split;
  if (features.multi_linker_targets > 0)
    r.warnings.push_back(std::to_string(features.multi_linker_targets) +
                         " targets had several linkers of one type; the busiest was used");
  r.model = fit_linear(x_fit, y_fit, names, options, &r.warnings);
  const auto scores = r.model.decisions(x_test);
  r.test_prevalence = prevalence(y_test);
  r.test_ap = average_precision(scores, y_test);
  r.test_auc = roc_auc(scores, y_test);
  return r;
}

nlohmann::json to_json(const BaselineResult& r) {
  nlohmann::json weights = nlohmann::json::object();
  for (std::size_t j = 0; j < r.model.names.size(); ++j) weights[r.model.names[j]] = r.model.weight_of(j);
  return {{"mode", to_string(r.mode)},       {"split_policy", to_string(r.split)},
          {"test_ap", r.test_ap},            {"test_auc", r.test_auc},
          {"test_prevalence", r.test_prevalence}, {"weights", weights},
          {"bias", r.model.bias},            {"warnings", r.warnings}};
}

}  // namespace dyhgn
