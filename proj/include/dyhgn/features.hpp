#pragma once

// Graph-derived per-target features, a logistic-regression baseline and
// permutation feature importance.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dyhgn/data.hpp"
#include "dyhgn/graph.hpp"

namespace dyhgn {

enum class FeatureMode { global, incremental };
FeatureMode parse_feature_mode(std::string_view s);
std::string to_string(FeatureMode m);

// One row per target. Linker slots follow the schema's relation order.
struct FeatureRow {
  EntityRef target;
  int day = 0;
  int week = 0;
  std::array<long, 4> relations{};  // event count of the target's linker
  std::array<long, 4> snapshots{};  // distinct weeks of those events
  int label = 0;

  // (day, week, relations..., snapshots...)
  std::vector<double> values() const;
};

// day, week, relations_<linker>..., snapshots_<linker>...
std::vector<std::string> feature_names(const Schema& schema);

struct FeatureExtraction {
  std::vector<FeatureRow> rows;
  // Targets that had several linkers of one type (the busiest one is used).
  std::size_t multi_linker_targets = 0;
};

// Global mode counts events over the whole log; incremental mode only events
// with week <= the target's creation week.
FeatureExtraction extract_features(const std::vector<EventRecord>& events, const std::vector<TargetNode>& targets,
                                   FeatureMode mode, const Schema& schema);

struct FitOptions {
  double l2 = 1e-3;
  double lr = 0.5;
  std::size_t epochs = 400;
};

struct LinearModel {
  std::vector<std::string> names;  // all input columns
  std::vector<std::size_t> kept;   // columns with nonzero training variance
  std::vector<double> mean;        // per kept column
  std::vector<double> scale;       // per kept column
  std::vector<double> weights;     // per kept column, on standardized inputs
  double bias = 0.0;
  double l2 = 0.0;

  double decision(std::span<const double> row) const;
  std::vector<double> decisions(const std::vector<std::vector<double>>& rows) const;
  // Weight of an input column; 0 for dropped columns.
  double weight_of(std::size_t column) const;
};

// L2-regularised logistic regression by proximal gradient descent on inputs
// standardised with training statistics. Zero-variance columns are dropped
// and reported in `warnings`.
LinearModel fit_linear(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                       const std::vector<std::string>& names, const FitOptions& options,
                       std::vector<std::string>* warnings = nullptr);

// Gradient of mean BCE + (l2/2)|w|^2 at the model's current parameters
// (weights first, bias last), on standardised inputs.
std::vector<double> linear_gradient(const LinearModel& model, const std::vector<std::vector<double>>& x,
                                    const std::vector<int>& y);

struct Importance {
  std::string feature;
  double mean_drop = 0.0;
  double std = 0.0;
};

// For every column: shuffle it `repeats` times and average the drop in AP.
// The k-th shuffle uses the same row permutation for every column.
std::vector<Importance> permutation_importance(const LinearModel& model, const std::vector<std::vector<double>>& x,
                                               const std::vector<int>& y, std::size_t repeats, std::uint64_t seed);

struct BaselineResult {
  FeatureMode mode = FeatureMode::global;
  SplitPolicy split = SplitPolicy::chronological;
  double test_ap = 0.0;
  double test_auc = 0.0;
  double test_prevalence = 0.0;
  LinearModel model;
  std::vector<std::string> warnings;
};

// Features for every target of the graph, fit on train + val, scored on test.
BaselineResult run_baseline(const UnrolledGraph& graph, FeatureMode mode, SplitPolicy split, std::uint64_t seed,
                            const FitOptions& options = {});

nlohmann::json to_json(const BaselineResult& r);

}  // namespace dyhgn
