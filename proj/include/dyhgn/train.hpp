#pragma once

// Full-batch training with early stopping on validation AP.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyhgn/data.hpp"
#include "dyhgn/models.hpp"

namespace dyhgn {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_ap = 0.0;  // NaN when the validation set has no positives
};

struct TrainReport {
  std::string variant;
  std::string dataset;
  std::string split_policy;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  // "val_ap", or "neg_val_loss" when validation has no positives.
  std::string stopping_metric = "val_ap";
  std::size_t best_epoch = 0;
  double best_val_ap = 0.0;
  double test_ap = 0.0;
  double test_auc = 0.0;
  double test_prevalence = 0.0;
  std::size_t parameter_count = 0;
  std::size_t risk_classes = 0;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  bool early_stopped = false;
  double wall_seconds = 0.0;  // not part of the JSON document
};

// Wall-clock time is left out so that equal seeds give equal documents.
nlohmann::json to_json(const TrainReport& r);
// Mean and sample standard deviation of test AP/AUC over runs.
nlohmann::json summarize(const std::vector<TrainReport>& reports);

// Labels of a subset of targets, in the given order.
struct TargetBatch {
  std::vector<std::size_t> rows;  // graph node indices
  std::vector<int> binary;
  std::vector<int> risk;
};
TargetBatch target_batch(const UnrolledGraph& graph, std::span<const std::size_t> positions);

// Output width: 2, or 2 + (1 + largest training risk level) for the combined loss.
std::size_t output_width(const UnrolledGraph& graph, const Split& split);

struct Evaluation {
  double ap = 0.0;
  double auc = 0.0;
  double prevalence = 0.0;
  std::vector<double> scores;
};

// Evaluation-mode metrics on the targets at `positions`.
Evaluation evaluate(const Model& model, const GraphContext& ctx, std::span<const std::size_t> positions);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains `model` in place and leaves it at the best validation epoch.
TrainReport train(Model& model, const GraphContext& ctx, const Split& split, const EpochCallback& on_epoch = {});

}  // namespace dyhgn
