#include "dyhgn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "dyhgn/csv.hpp"
#include "dyhgn/errors.hpp"
#include "dyhgn/optim.hpp"

namespace dyhgn {

std::vector<double> uneven_schedule() {
  return {0.55, 0.65, 0.55, 0.47, 0.42, 0.45, 0.55, 0.65, 0.52, 0.45, 0.40, 0.42, 0.50};
}

GeneratorConfig GeneratorConfig::preset_named(std::string_view name) {
  GeneratorConfig c;
  c.preset = std::string(name);
  if (name == "uneven") {
    c.fraud_rate = uneven_schedule();
  } else if (name == "even") {
    auto s = uneven_schedule();
    c.fraud_rate.assign(s.size(), std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size()));
  } else if (name == "imbalanced-txn") {
    c.schema = "xfraud-txn";
    c.pool_sizes = {1500, 2500, 2000, 1500};
    c.hot_counts = {40, 10, 10, 10};
    c.link_probability = {1.0, 0.8, 0.7, 1.0};
    c.planted_relation = 0;
    c.feature_dim = 114;
    c.fraud_rate.assign(static_cast<std::size_t>(c.weeks), 0.015);
  } else if (name == "imbalanced-account") {
    c.schema = "xfraud-account";
    // Relation 0 (buyer-txn) gets private transactions, never pooled.
    c.pool_sizes = {1, 1500, 2500, 2000};
    c.hot_counts = {0, 40, 10, 10};
    c.link_probability = {1.0, 1.0, 0.8, 0.7};
    c.planted_relation = 1;
    c.feature_dim = 114;
    c.fraud_rate.assign(static_cast<std::size_t>(c.weeks), 0.035);
  } else {
    throw ConfigError("unknown preset '" + std::string(name) +
                      "' (uneven|even|imbalanced-txn|imbalanced-account)");
  }
  return c;
}

void GeneratorConfig::validate() const {
  const auto schema_def = Schema::by_name(schema);
  const auto r = schema_def.relation_count();
  if (weeks < 1) throw ConfigError("weeks must be at least 1");
  if (n_targets == 0) throw ConfigError("n_targets must be positive");
  if (pool_sizes.size() != r || hot_counts.size() != r || link_probability.size() != r) {
    throw ConfigError("pool_sizes, hot_counts and link_probability need one entry per relation (" +
                      std::to_string(r) + ")");
  }
  for (auto p : pool_sizes) {
    if (p == 0) throw ConfigError("linker pool sizes must be at least 1");
  }
  auto check_probability = [](double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(what + " must lie in [0,1], got " + std::to_string(p));
  };
  for (auto p : link_probability) check_probability(p, "link probability");
  if (fraud_rate.size() != static_cast<std::size_t>(weeks)) {
    throw ConfigError("fraud_rate schedule has " + std::to_string(fraud_rate.size()) + " entries for " +
                      std::to_string(weeks) + " weeks");
  }
  for (auto p : fraud_rate) check_probability(p, "fraud rate");
  check_probability(planted_strength, "planted strength");
  check_probability(hot_noise, "hot noise");
  if (planted_relation >= r) throw ConfigError("planted relation out of range");
  if (burst_weeks < 1 || burst_weeks > weeks) throw ConfigError("burst_weeks must lie in [1, weeks]");
  if (informative_dims > feature_dim) throw ConfigError("informative_dims exceeds feature_dim");
}

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"preset", c.preset},
          {"schema", c.schema},
          {"weeks", c.weeks},
          {"n_targets", c.n_targets},
          {"pool_sizes", c.pool_sizes},
          {"hot_counts", c.hot_counts},
          {"burst_weeks", c.burst_weeks},
          {"link_probability", c.link_probability},
          {"fraud_rate", c.fraud_rate},
          {"planted_strength", c.planted_strength},
          {"planted_relation", c.planted_relation},
          {"hot_noise", c.hot_noise},
          {"feature_dim", c.feature_dim},
          {"informative_dims", c.informative_dims},
          {"separation", c.separation},
          {"seed", c.seed}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig c) {
  try {
    if (j.contains("preset") && j.at("preset").get<std::string>() != c.preset) {
      c = GeneratorConfig::preset_named(j.at("preset").get<std::string>());
    }
    if (j.contains("schema")) c.schema = j.at("schema").get<std::string>();
    if (j.contains("weeks")) c.weeks = j.at("weeks").get<int>();
    if (j.contains("n_targets")) c.n_targets = j.at("n_targets").get<std::size_t>();
    if (j.contains("pool_sizes")) c.pool_sizes = j.at("pool_sizes").get<std::vector<std::size_t>>();
    if (j.contains("hot_counts")) c.hot_counts = j.at("hot_counts").get<std::vector<std::size_t>>();
    if (j.contains("burst_weeks")) c.burst_weeks = j.at("burst_weeks").get<int>();
    if (j.contains("link_probability")) c.link_probability = j.at("link_probability").get<std::vector<double>>();
    if (j.contains("fraud_rate")) c.fraud_rate = j.at("fraud_rate").get<std::vector<double>>();
    if (j.contains("planted_strength")) c.planted_strength = j.at("planted_strength").get<double>();
    if (j.contains("planted_relation")) c.planted_relation = j.at("planted_relation").get<std::uint32_t>();
    if (j.contains("hot_noise")) c.hot_noise = j.at("hot_noise").get<double>();
    if (j.contains("feature_dim")) c.feature_dim = j.at("feature_dim").get<std::size_t>();
    if (j.contains("informative_dims")) c.informative_dims = j.at("informative_dims").get<std::size_t>();
    if (j.contains("separation")) c.separation = j.at("separation").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

Dataset generate(const GeneratorConfig& config) {
  config.validate();
  Dataset data;
  data.schema = Schema::by_name(config.schema);
  data.snapshots = config.weeks;
  data.labels.feature_dim = config.feature_dim;
  const auto relations = data.schema.relation_count();
  const bool private_first_relation = config.schema == "xfraud-account";

  // Creation time of every target.
  std::mt19937_64 time_rng(derive_seed(config.seed, {1}));
  std::uniform_int_distribution<int> pick_week(1, config.weeks), pick_weekday(0, 6);
  std::vector<int> week(config.n_targets), day(config.n_targets);
  std::vector<std::vector<std::size_t>> by_week(static_cast<std::size_t>(config.weeks) + 1);
  for (std::size_t i = 0; i < config.n_targets; ++i) {
    week[i] = pick_week(time_rng);
    day[i] = 7 * week[i] + pick_weekday(time_rng);
    by_week[static_cast<std::size_t>(week[i])].push_back(i);
  }

  // Labels: each week receives round(rate * size) positives.
  std::mt19937_64 label_rng(derive_seed(config.seed, {2}));
  std::vector<int> label(config.n_targets, 0);
  for (int w = 1; w <= config.weeks; ++w) {
    auto members = by_week[static_cast<std::size_t>(w)];
    std::shuffle(members.begin(), members.end(), label_rng);
    const auto positives = static_cast<std::size_t>(
        std::llround(config.fraud_rate[static_cast<std::size_t>(w - 1)] * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < positives; ++k) label[members[k]] = 1;
  }
  std::uniform_int_distribution<int> pick_risk(1, 3);
  std::vector<int> risk(config.n_targets, 0);
  for (std::size_t i = 0; i < config.n_targets; ++i) {
    if (label[i]) risk[i] = pick_risk(label_rng);
  }

  // Hot linkers take ids after the ordinary pool; bursts start staggered so
  // every week has active hot linkers whenever there are enough of them.
  const int starts = config.weeks - config.burst_weeks + 1;
  std::vector<std::vector<std::vector<std::uint64_t>>> hot_active(relations);
  for (std::size_t r = 0; r < relations; ++r) {
    hot_active[r].resize(static_cast<std::size_t>(config.weeks) + 1);
    for (std::size_t k = 0; k < config.hot_counts[r]; ++k) {
      const int start = 1 + static_cast<int>(k % static_cast<std::size_t>(starts));
      for (int w = start; w < start + config.burst_weeks; ++w) {
        hot_active[r][static_cast<std::size_t>(w)].push_back(config.pool_sizes[r] + k);
      }
    }
  }

  std::mt19937_64 link_rng(derive_seed(config.seed, {3}));
  std::mt19937_64 feature_rng(derive_seed(config.seed, {4}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto feature_vector = [&](int y) {
    std::vector<double> f(config.feature_dim);
    for (std::size_t j = 0; j < config.feature_dim; ++j) {
      f[j] = normal(feature_rng) + (y && j < config.informative_dims ? config.separation : 0.0);
    }
    return f;
  };

  const std::uint32_t target_type = 0;
  std::uint64_t next_private = 0;
  for (std::size_t i = 0; i < config.n_targets; ++i) {
    const EntityRef target{target_type, i};
    TargetRecord rec;
    rec.binary = label[i];
    rec.risk_level = risk[i];
    const auto w = static_cast<std::size_t>(week[i]);
    for (std::uint32_t r = 0; r < relations; ++r) {
      const auto linker_type = data.schema.linker_type(r);
      if (private_first_relation && r == 0) {
        // 1-3 private transactions; the buyer's features are their mean.
        const int count = 1 + static_cast<int>(link_rng() % 3);
        std::vector<double> mean(config.feature_dim, 0.0);
        for (int t = 0; t < count; ++t) {
          data.events.push_back({target, {linker_type, next_private++}, r, week[i], day[i]});
          auto f = feature_vector(label[i]);
          for (std::size_t j = 0; j < f.size(); ++j) mean[j] += f[j] / count;
        }
        rec.features = std::move(mean);
        continue;
      }
      if (unit(link_rng) >= config.link_probability[r]) continue;
      double p_hot = config.hot_noise;
      if (label[i]) p_hot = r == config.planted_relation ? config.planted_strength : config.planted_strength / 2.0;
      const auto& active = hot_active[r][w];
      std::uint64_t linker_id;
      if (!active.empty() && unit(link_rng) < p_hot) {
        linker_id = active[link_rng() % active.size()];
      } else {
        linker_id = link_rng() % config.pool_sizes[r];
      }
      data.events.push_back({target, {linker_type, linker_id}, r, week[i], day[i]});
    }
    if (!private_first_relation) rec.features = feature_vector(label[i]);
    // Targets without any linker still need one event to enter the graph.
    const bool has_event = !data.events.empty() && data.events.back().target == target;
    if (!has_event) {
      const auto r = config.planted_relation;
      data.events.push_back(
          {target, {data.schema.linker_type(r), link_rng() % config.pool_sizes[r]}, r, week[i], day[i]});
    }
    data.labels.targets[target] = std::move(rec);
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& s = data.schema;
  csv::Table events{{"target_type", "target_id", "linker_type", "linker_id", "relation", "week", "day"}, {}};
  for (const auto& e : data.events) {
    events.rows.push_back({s.node_types.at(e.target.type), std::to_string(e.target.id), s.node_types.at(e.linker.type),
                           std::to_string(e.linker.id), s.relations.at(e.relation), std::to_string(e.week),
                           std::to_string(e.day)});
  }
  csv::write(dir / "events.csv", events);

  csv::Table labels{{"target_type", "target_id", "binary_label", "risk_level"}, {}};
  csv::Table features{{"target_type", "target_id"}, {}};
  for (std::size_t j = 0; j < data.labels.feature_dim; ++j) features.header.push_back("f" + std::to_string(j));
  for (const auto& [entity, rec] : data.labels.targets) {
    const auto type = s.node_types.at(entity.type);
    labels.rows.push_back({type, std::to_string(entity.id), std::to_string(rec.binary),
                           rec.risk_level ? std::to_string(*rec.risk_level) : ""});
    if (!rec.features.empty()) {
      std::vector<std::string> row{type, std::to_string(entity.id)};
      for (auto v : rec.features) row.push_back(csv::format(v));
      features.rows.push_back(std::move(row));
    }
  }
  csv::write(dir / "labels.csv", labels);
  csv::write(dir / "features.csv", features);

  nlohmann::json meta{{"schema", s.name}, {"snapshots", data.snapshots}, {"feature_dim", data.labels.feature_dim}};
  std::ofstream(dir / "dataset.json", std::ios::binary) << meta.dump(2) << '\n';
}

std::vector<EventRecord> read_events_csv(const std::filesystem::path& path, const Schema& schema) {
  auto t = csv::read(path);
  const auto tt = t.column("target_type"), ti = t.column("target_id"), lt = t.column("linker_type"),
             li = t.column("linker_id"), rel = t.column("relation"), wk = t.column("week"), dy = t.column("day");
  std::vector<EventRecord> events;
  events.reserve(t.rows.size());
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    const auto where = path.filename().string() + " row " + std::to_string(k + 1);
    EventRecord e;
    e.target = {schema.type_code(row[tt]), static_cast<std::uint64_t>(csv::parse_int(row[ti], where + ", " + t.header[ti]))};
    e.linker = {schema.type_code(row[lt]), static_cast<std::uint64_t>(csv::parse_int(row[li], where + ", " + t.header[li]))};
    e.relation = schema.relation_code(row[rel]);
    e.week = static_cast<int>(csv::parse_int(row[wk], where + ", " + t.header[wk]));
    e.day = static_cast<int>(csv::parse_int(row[dy], where + ", " + t.header[dy]));
    events.push_back(e);
  }
  return events;
}

LabelSet read_labels_csv(const std::filesystem::path& labels_path, const std::filesystem::path& features_path,
                         const Schema& schema) {
  LabelSet labels;
  auto t = csv::read(labels_path);
  const auto tt = t.column("target_type"), ti = t.column("target_id"), bl = t.column("binary_label"),
             rl = t.column("risk_level");
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    const auto where = labels_path.filename().string() + " row " + std::to_string(k + 1);
    const EntityRef entity{schema.type_code(row[tt]), static_cast<std::uint64_t>(csv::parse_int(row[ti], where + ", " + t.header[ti]))};
    TargetRecord rec;
    rec.binary = static_cast<int>(csv::parse_int(row[bl], where + ", " + t.header[bl]));
    if (!row[rl].empty()) rec.risk_level = static_cast<int>(csv::parse_int(row[rl], where + ", " + t.header[rl]));
    if (!labels.targets.emplace(entity, rec).second) throw ValidationError(where + ": duplicate target");
  }
  if (!features_path.empty() && std::filesystem::exists(features_path)) {
    auto f = csv::read(features_path);
    const auto ft = f.column("target_type"), fi = f.column("target_id");
    labels.feature_dim = f.header.size() - 2;
    for (std::size_t k = 0; k < f.rows.size(); ++k) {
      const auto& row = f.rows[k];
      const auto where = features_path.filename().string() + " row " + std::to_string(k + 1);
      const EntityRef entity{schema.type_code(row[ft]), static_cast<std::uint64_t>(csv::parse_int(row[fi], where + ", " + f.header[fi]))};
      auto it = labels.targets.find(entity);
      if (it == labels.targets.end()) throw ValidationError(where + ": features for an unlabeled target");
      std::vector<double> values;
      values.reserve(labels.feature_dim);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j != ft && j != fi) values.push_back(csv::parse_double(row[j], where + ", " + f.header[j]));
      }
      it->second.features = std::move(values);
    }
  }
  labels.validate();
  return labels;
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "dataset.json");
  if (!meta_in) throw ValidationError("missing " + (dir / "dataset.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset.json: " + std::string(e.what()));
  }
  Dataset data;
  data.schema = Schema::by_name(meta.at("schema").get<std::string>());
  data.snapshots = meta.at("snapshots").get<int>();
  data.events = read_events_csv(dir / "events.csv", data.schema);
  data.labels = read_labels_csv(dir / "labels.csv", dir / "features.csv", data.schema);
  return data;
}

SplitPolicy parse_split_policy(std::string_view s) {
  if (s == "chronological") return SplitPolicy::chronological;
  if (s == "random_trainval" || s == "random-trainval") return SplitPolicy::random_trainval;
  if (s == "random") return SplitPolicy::random;
  throw ConfigError("unknown split policy '" + std::string(s) + "' (chronological|random_trainval|random)");
}

std::string to_string(SplitPolicy p) {
  switch (p) {
    case SplitPolicy::chronological: return "chronological";
    case SplitPolicy::random_trainval: return "random_trainval";
    case SplitPolicy::random: return "random";
  }
  return "chronological";
}

Split make_split(const std::vector<TargetNode>& targets, SplitPolicy policy, std::uint64_t seed, SplitRatios ratios) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 ||
      ratios.test < 0) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  const auto n = targets.size();
  if (n < 3) throw ValidationError("need at least 3 targets to split, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(targets[a].week, targets[a].day, targets[a].entity) <
           std::tie(targets[b].week, targets[b].day, targets[b].entity);
  });
  const auto n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
  if (n_test + n_val > n) throw ValidationError("split leaves no training targets");
  std::mt19937_64 rng(seed);
  if (policy == SplitPolicy::random) {
    std::shuffle(order.begin(), order.end(), rng);
  } else if (policy == SplitPolicy::random_trainval) {
    std::shuffle(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test), rng);
  }
  Split s;
  s.policy = policy;
  const auto n_train = n - n_test - n_val;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

}  // namespace dyhgn
