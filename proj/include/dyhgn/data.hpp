#pragma once

// Synthetic event logs, CSV ingestion and train/val/test splits.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dyhgn/graph.hpp"

namespace dyhgn {

struct GeneratorConfig {
  std::string preset = "uneven";
  std::string schema = "massreg";
  int weeks = 13;
  std::size_t n_targets = 5000;
  // Ordinary (non-hot) linker pool per relation.
  std::vector<std::size_t> pool_sizes{2000, 1500, 2000, 2500};
  // Hot linkers per relation; each is active for a burst of `burst_weeks`.
  std::vector<std::size_t> hot_counts{25, 40, 25, 25};
  int burst_weeks = 2;
  // Probability that a target has a linker of each relation.
  std::vector<double> link_probability{0.6, 1.0, 0.5, 0.7};
  // Per-week probability of a positive label, one entry per week.
  std::vector<double> fraud_rate;
  // P(positive attaches to a hot linker) on the planted relation; half on the others.
  double planted_strength = 0.8;
  std::uint32_t planted_relation = 1;
  // P(negative attaches to a hot linker).
  double hot_noise = 0.05;
  std::size_t feature_dim = 264;
  std::size_t informative_dims = 8;
  // Mean shift of positives on the informative dimensions.
  double separation = 0.5;
  std::uint64_t seed = 1;

  // "uneven", "even", "imbalanced-txn", "imbalanced-account".
  static GeneratorConfig preset_named(std::string_view name);
  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig base);

// 13-week schedule inside the 40-65% band with peaks in weeks 2 and 8.
std::vector<double> uneven_schedule();

struct Dataset {
  Schema schema;
  int snapshots = 1;
  std::vector<EventRecord> events;
  LabelSet labels;
};

Dataset generate(const GeneratorConfig& config);

// events.csv, labels.csv, features.csv and dataset.json under `dir`.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

std::vector<EventRecord> read_events_csv(const std::filesystem::path& path, const Schema& schema);
// Labels and (optionally) features merged into one LabelSet.
LabelSet read_labels_csv(const std::filesystem::path& labels, const std::filesystem::path& features,
                         const Schema& schema);

enum class SplitPolicy { chronological, random_trainval, random };
SplitPolicy parse_split_policy(std::string_view s);
std::string to_string(SplitPolicy p);

// Positions into UnrolledGraph::targets.
struct Split {
  SplitPolicy policy = SplitPolicy::chronological;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

// Targets sorted by (week, day, id); the last `test` share is the test set.
// random_trainval shuffles only the remainder before cutting off val;
// random shuffles everything.
Split make_split(const std::vector<TargetNode>& targets, SplitPolicy policy, std::uint64_t seed,
                 SplitRatios ratios = {});

}  // namespace dyhgn
