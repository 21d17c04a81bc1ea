#include "dyhgn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "dyhgn/errors.hpp"
#include "dyhgn/metrics.hpp"
#include "dyhgn/optim.hpp"

namespace dyhgn {

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::vector<Tensor> tensors_of(const NamedParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

bool has_positive(const TargetBatch& b) { return std::find(b.binary.begin(), b.binary.end(), 1) != b.binary.end(); }

}  // namespace

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", number_or_null(e.train_loss)},
                      {"val_loss", number_or_null(e.val_loss)},
                      {"val_ap", number_or_null(e.val_ap)}});
  }
  return {{"variant", r.variant},
          {"dataset", r.dataset},
          {"split_policy", r.split_policy},
          {"seed", r.seed},
          {"stopping_metric", r.stopping_metric},
          {"best_epoch", r.best_epoch},
          {"best_val_ap", number_or_null(r.best_val_ap)},
          {"test_ap", r.test_ap},
          {"test_auc", r.test_auc},
          {"test_prevalence", r.test_prevalence},
          {"parameter_count", r.parameter_count},
          {"risk_classes", r.risk_classes},
          {"n_train", r.n_train},
          {"n_val", r.n_val},
          {"n_test", r.n_test},
          {"early_stopped", r.early_stopped},
          {"epochs", epochs}};
}

nlohmann::json summarize(const std::vector<TrainReport>& reports) {
  if (reports.empty()) throw ContractError("summarize: no reports");
  auto stats = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(field(r));
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (auto x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return nlohmann::json{{"mean", mean}, {"std", sd}, {"values", v}};
  };
  std::vector<std::uint64_t> seeds;
  for (const auto& r : reports) seeds.push_back(r.seed);
  return {{"variant", reports.front().variant},
          {"dataset", reports.front().dataset},
          {"runs", reports.size()},
          {"seeds", seeds},
          {"test_ap", stats([](const TrainReport& r) { return r.test_ap; })},
          {"test_auc", stats([](const TrainReport& r) { return r.test_auc; })},
          {"test_prevalence", reports.front().test_prevalence}};
}

TargetBatch target_batch(const UnrolledGraph& graph, std::span<const std::size_t> positions) {
  TargetBatch b;
  for (auto p : positions) {
    if (p >= graph.targets.size()) throw IndexError("target position " + std::to_string(p) + " out of range");
    const auto& t = graph.targets[p];
    b.rows.push_back(t.node);
    b.binary.push_back(t.binary);
    b.risk.push_back(t.risk_level);
  }
  return b;
}

std::size_t output_width(const UnrolledGraph& graph, const Split& split) {
  if (loss_kind_for(graph.schema.name) == LossKind::binary) return 2;
  int largest = 0;
  for (auto p : split.train) {
    const auto r = graph.targets.at(p).risk_level;
    if (r < 0) throw ValidationError("massreg-style training needs a risk level for every target");
    largest = std::max(largest, r);
  }
  return 2 + static_cast<std::size_t>(std::max(largest, 1)) + 1;
}

Evaluation evaluate(const Model& model, const GraphContext& ctx, std::span<const std::size_t> positions) {
  NoGradGuard no_grad;
  auto batch = target_batch(*ctx.graph, positions);
  auto logits = model.forward(ctx, false, 0);
  Evaluation e;
  e.scores = fraud_scores(logits, batch.rows);
  e.prevalence = prevalence(batch.binary);
  e.ap = average_precision(e.scores, batch.binary);
  e.auc = roc_auc(e.scores, batch.binary);
  return e;
}

TrainReport train(Model& model, const GraphContext& ctx, const Split& split, const EpochCallback& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  const auto& config = model.config();
  const auto& graph = *ctx.graph;
  if (split.train.empty()) throw ValidationError("training split is empty");
  const auto kind = loss_kind_for(graph.schema.name);
  const auto train_batch = target_batch(graph, split.train);
  const auto val_batch = target_batch(graph, split.val);
  const bool val_ap_defined = has_positive(val_batch);

  TrainReport report;
  report.variant = to_string(config.variant);
  report.dataset = config.dataset;
  report.split_policy = to_string(split.policy);
  report.seed = config.seed;
  report.stopping_metric = val_ap_defined ? "val_ap" : "neg_val_loss";
  report.parameter_count = model.parameter_count();
  report.risk_classes = kind == LossKind::binary ? 0 : model.output_dim() - 2;
  report.n_train = split.train.size();
  report.n_val = split.val.size();
  report.n_test = split.test.size();

  AdamW optimizer(tensors_of(model.parameters()), {.lr = config.lr, .weight_decay = config.weight_decay});
  double best_metric = -std::numeric_limits<double>::infinity();
  auto best_params = model.snapshot();
  std::size_t best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    optimizer.zero_grad();
    auto logits = model.forward(ctx, true, derive_seed(config.seed, {0xE90C, epoch}));
    auto loss = classification_loss(logits, train_batch.rows, train_batch.binary, train_batch.risk, kind);
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + " (" +
                            report.variant + ", seed " + std::to_string(config.seed) + ", lr " +
                            std::to_string(config.lr) + ")");
    }
    backward(loss);
    optimizer.step();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_value;
    rec.val_ap = std::numeric_limits<double>::quiet_NaN();
    rec.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!split.val.empty()) {
      NoGradGuard no_grad;
      auto eval_logits = model.forward(ctx, false, 0);
      // Binary head only, so validation never depends on the risk head width.
      rec.val_loss = classification_loss(eval_logits, val_batch.rows, val_batch.binary, {}, LossKind::binary).item();
      if (val_ap_defined) rec.val_ap = average_precision(fraud_scores(eval_logits, val_batch.rows), val_batch.binary);
    }
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double metric = split.val.empty() ? -rec.train_loss : (val_ap_defined ? rec.val_ap : -rec.val_loss);
    if (metric > best_metric) {
      best_metric = metric;
      best_epoch = epoch;
      best_params = model.snapshot();
    } else if (epoch - best_epoch >= config.patience) {
      report.early_stopped = true;
      break;
    }
  }

  model.assign(best_params);
  report.best_epoch = best_epoch;
  report.best_val_ap = best_epoch > 0 ? report.epochs[best_epoch - 1].val_ap : std::numeric_limits<double>::quiet_NaN();
  if (!split.test.empty()) {
    auto test = evaluate(model, ctx, split.test);
    report.test_ap = test.ap;
    report.test_auc = test.auc;
    report.test_prevalence = test.prevalence;
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace dyhgn
