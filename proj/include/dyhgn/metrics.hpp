#pragma once

#include <span>

namespace dyhgn {

// Step-wise area under the precision-recall curve. Tied scores form one
// threshold. Throws MetricError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// P(score of a random positive > score of a random negative), ties count 1/2.
// Throws MetricError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

double prevalence(std::span<const int> labels);

}  // namespace dyhgn
