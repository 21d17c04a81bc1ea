#include "dyhgn/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "dyhgn/errors.hpp"

namespace dyhgn {

namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels, const char* who) {
  if (scores.size() != labels.size()) {
    throw DimensionError(std::string(who) + ": " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(labels.size()) + " labels");
  }
  for (auto y : labels) {
    if (y != 0 && y != 1) throw ValidationError(std::string(who) + ": labels must be 0/1");
  }
}

std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "average_precision");
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0) throw MetricError("average precision undefined without positive labels");
  auto order = descending(scores);
  double ap = 0.0, tp = 0.0, fp = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / static_cast<double>(positives);
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels, "roc_auc");
  const auto pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw MetricError("ROC AUC undefined with a single class");
  // Midranks in ascending order.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) rank_sum += midrank;
    }
    i = j;
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double prevalence(std::span<const int> labels) {
  if (labels.empty()) throw MetricError("prevalence of an empty label set");
  return static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(labels.size());
}

}  // namespace dyhgn
