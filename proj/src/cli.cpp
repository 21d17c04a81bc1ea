#include "dyhgn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dyhgn/checkpoint.hpp"
#include "dyhgn/csv.hpp"
#include "dyhgn/data.hpp"
#include "dyhgn/errors.hpp"
#include "dyhgn/features.hpp"
#include "dyhgn/metrics.hpp"
#include "dyhgn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dyhgn::cli {

const char* version() { return DYHGN_VERSION; }

namespace {

// Where the data comes from: a written dataset directory or the generator.
struct DataOptions {
  std::string data_dir;
  std::string dataset;
  std::string preset;
  std::size_t n_targets = 0;
  std::uint64_t data_seed = 1;
};

struct Common {
  std::string out;
  std::string config_path;
  bool quiet = false;
};

struct Loaded {
  Dataset data;
  json source;  // enough to load or regenerate the same data
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path make_run_dir(const std::string& out, const std::string& command) {
  fs::path dir;
  if (!out.empty()) {
    dir = out;
  } else {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
    dir = fs::path("runs") / (std::string(stamp) + "-" + command);
    for (int k = 1; fs::exists(dir); ++k) dir = fs::path("runs") / (std::string(stamp) + "-" + command + "-" + std::to_string(k));
  }
  fs::create_directories(dir);
  return dir;
}

std::string schema_of_dataset(std::string name) {
  const std::string suffix = "-synth";
  if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
    name.resize(name.size() - suffix.size());
  }
  return Schema::by_name(name).name;
}

std::string preset_for_schema(const std::string& schema) {
  if (schema == "xfraud-txn") return "imbalanced-txn";
  if (schema == "xfraud-account") return "imbalanced-account";
  return "uneven";
}

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--data", d.data_dir, "Dataset directory written by `generate` (otherwise data is generated)");
  sub->add_option("--dataset", d.dataset, "massreg, xfraud-txn or xfraud-account (optionally with -synth)");
  sub->add_option("--preset", d.preset, "Generator preset when no --data is given")
      ->check(CLI::IsMember({"uneven", "even", "imbalanced-txn", "imbalanced-account"}));
  sub->add_option("--n-targets", d.n_targets, "Generated targets (preset default when omitted)");
  sub->add_option("--data-seed", d.data_seed, "Generator seed")->capture_default_str();
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--out", c.out, "Output directory (default runs/<timestamp>-<command>)");
  sub->add_option("--config", c.config_path, "JSON config file; flags override its values");
  sub->add_flag("--quiet", c.quiet, "No progress output");
}

// Generator settings: preset, then the config file's "generator" object, then flags.
GeneratorConfig resolve_generator(const DataOptions& d, const json& file) {
  std::string preset = d.preset;
  if (preset.empty() && file.contains("generator") && file["generator"].contains("preset")) {
    preset = file["generator"]["preset"].get<std::string>();
  }
  if (preset.empty()) preset = preset_for_schema(d.dataset.empty() ? "massreg" : schema_of_dataset(d.dataset));
  auto g = GeneratorConfig::preset_named(preset);
  if (file.contains("generator")) g = generator_config_from_json(file["generator"], g);
  if (d.n_targets > 0) g.n_targets = d.n_targets;
  g.seed = d.data_seed;
  if (!d.dataset.empty() && schema_of_dataset(d.dataset) != g.schema) {
    throw ConfigError("dataset '" + d.dataset + "' does not match preset '" + preset + "' (schema " + g.schema + ")");
  }
  g.validate();
  return g;
}

Loaded load_data(const DataOptions& d, const json& file) {
  Loaded l;
  if (!d.data_dir.empty()) {
    l.data = read_dataset(d.data_dir);
    if (!d.dataset.empty() && schema_of_dataset(d.dataset) != l.data.schema.name) {
      throw ConfigError("dataset '" + d.dataset + "' does not match the data in " + d.data_dir + " (schema " +
                        l.data.schema.name + ")");
    }
    l.source = {{"data_dir", fs::absolute(d.data_dir).lexically_normal().string()}};
  } else {
    auto g = resolve_generator(d, file);
    l.data = generate(g);
    l.source = {{"generator", to_json(g)}};
  }
  return l;
}

UnrolledGraph graph_of(const Dataset& d) { return build_unrolled_graph(d.events, d.labels, d.snapshots, d.schema); }

json header(const std::string& command) { return {{"command", command}, {"version", version()}}; }

// ---------------------------------------------------------------- generate

int cmd_generate(const Common& c, const DataOptions& d, std::ostream& out) {
  const json file = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  const auto g = resolve_generator(d, file);
  const auto dir = make_run_dir(c.out, "generate");
  const auto data = generate(g);
  write_dataset(data, dir);
  auto config = header("generate");
  config["generator"] = to_json(g);
  write_json(dir / "config.json", config);
  const auto stats = graph_statistics(graph_of(data));
  write_json(dir / "graph_stats.json", to_json(stats));
  out << dir.string() << '\n';
  return 0;
}

// ------------------------------------------------------------- build-graph

int cmd_build_graph(const Common& c, const DataOptions& d, std::ostream& out) {
  const json file = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  auto l = load_data(d, file);
  const auto g = graph_of(l.data);
  const auto dir = make_run_dir(c.out, "build-graph");
  auto config = header("build-graph");
  config["data"] = l.source;
  write_json(dir / "config.json", config);
  auto stats = to_json(graph_statistics(g));
  stats["schema"] = g.schema.name;
  stats["snapshots"] = g.snapshot_count;
  stats["targets"] = g.targets.size();
  stats["events"] = g.events.size();
  write_json(dir / "graph_stats.json", stats);
  out << stats.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  std::string variant = "dyhgn";
  std::string profile = "full";
  std::size_t seeds = 1;
  std::uint64_t seed = 0;
  std::string split = "chronological";
  std::uint64_t split_seed = 0;
  std::string aggregation, score_mode;
  double gamma = -1.0;
  std::size_t de_dim = 0, n_hid = 0, n_layers = 0, epochs = 0, patience = 0;
  double lr = -1.0, dropout = -1.0;
  bool structural_only = false;
};

ModelConfig resolve_model(const TrainOptions& t, const std::string& schema, const json& file) {
  const auto variant = parse_variant(t.variant);
  ModelConfig m;
  if (t.profile == "full") {
    m = ModelConfig::defaults(schema, variant);
  } else if (t.profile == "desk") {
    m = ModelConfig::desk(schema, variant);
  } else {
    throw ConfigError("unknown profile '" + t.profile + "' (full|desk)");
  }
  if (file.contains("model")) {
    auto section = file["model"];
    section.erase("variant");
    section.erase("dataset");
    m = model_config_from_json(section, m);
  }
  if (!t.aggregation.empty()) m.diachronic.aggregation = parse_aggregation(t.aggregation);
  if (!t.score_mode.empty()) m.diachronic.score_mode = parse_score_mode(t.score_mode);
  if (t.gamma >= 0.0) m.diachronic.gamma = t.gamma;
  if (t.de_dim > 0) m.diachronic.dim = t.de_dim;
  if (t.n_hid > 0) m.n_hid = t.n_hid;
  if (t.n_layers > 0) m.n_layers = t.n_layers;
  if (t.epochs > 0) m.max_epochs = t.epochs;
  if (t.patience > 0) m.patience = t.patience;
  if (t.lr >= 0.0) m.lr = t.lr;
  if (t.dropout >= 0.0) m.dropout = t.dropout;
  if (t.structural_only) m.baseline_temporal_edges = false;
  m.validate();
  return m;
}

int cmd_train(const Common& c, const DataOptions& d, TrainOptions t, std::ostream& out, std::ostream& err) {
  const json file = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  if (file.contains("seeds") && t.seeds == 1) t.seeds = file["seeds"].get<std::size_t>();
  if (t.seeds == 0) throw ConfigError("--seeds must be positive");
  auto l = load_data(d, file);
  const auto graph = graph_of(l.data);
  const auto ctx = GraphContext::build(graph);
  const auto base = resolve_model(t, graph.schema.name, file);
  const auto split = make_split(graph.targets, parse_split_policy(t.split), t.split_seed);
  const auto width = output_width(graph, split);

  const auto dir = make_run_dir(c.out, "train");
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < t.seeds; ++k) seeds.push_back(t.seed + k);
  auto config = header("train");
  config["data"] = l.source;
  config["model"] = to_json(base);
  config["profile"] = t.profile;
  config["split"] = {{"policy", to_string(split.policy)}, {"seed", t.split_seed}};
  config["seeds"] = seeds;
  config["output_dim"] = width;
  write_json(dir / "config.json", config);

  fs::create_directories(dir / "reports");
  std::vector<TrainReport> reports;
  json timing = json::object();
  for (auto s : seeds) {
    auto mc = base;
    mc.seed = s;
    auto model = assemble(mc, ctx, width);
    EpochCallback progress;
    if (!c.quiet) {
      progress = [&](const EpochRecord& e) {
        if (e.epoch % 10 == 0) {
          err << "[" << t.variant << " seed " << s << "] epoch " << e.epoch << " train_loss " << e.train_loss
              << " val_ap " << e.val_ap << '\n';
        }
      };
    }
    auto report = train(*model, ctx, split, progress);
    const auto name = "seed-" + std::to_string(s);
    write_json(dir / "reports" / (name + ".json"), to_json(report));
    save_checkpoint(*model, dir / "checkpoints" / name,
                    {{"data", l.source}, {"split", config["split"]}, {"version", version()}});
    timing[name] = report.wall_seconds;
    if (!c.quiet) err << "[" << t.variant << " seed " << s << "] test_ap " << report.test_ap << '\n';
    reports.push_back(std::move(report));
  }
  const auto summary = summarize(reports);
  write_json(dir / "summary.json", summary);
  write_json(dir / "timing.json", timing);
  out << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct Restored {
  UnrolledGraph graph;
  GraphContext ctx;
  std::unique_ptr<Model> model;
  json manifest;
  json source;
};

// Rebuilds the data named by the checkpoint (or by --data) and loads the model.
std::unique_ptr<Restored> restore(const std::string& checkpoint, const DataOptions& d) {
  auto r = std::make_unique<Restored>();
  r->manifest = read_manifest(checkpoint);
  const auto& meta = r->manifest.at("meta");
  Dataset data;
  if (!d.data_dir.empty()) {
    data = read_dataset(d.data_dir);
    r->source = {{"data_dir", fs::absolute(d.data_dir).lexically_normal().string()}};
  } else if (meta.contains("data") && meta["data"].contains("generator")) {
    data = generate(generator_config_from_json(meta["data"]["generator"], GeneratorConfig{}));
    r->source = meta["data"];
  } else if (meta.contains("data") && meta["data"].contains("data_dir")) {
    data = read_dataset(meta["data"]["data_dir"].get<std::string>());
    r->source = meta["data"];
  } else {
    throw ValidationError("checkpoint does not say which data it was trained on; pass --data");
  }
  r->graph = graph_of(data);
  r->ctx = GraphContext::build(r->graph);
  auto mc = model_config_from_json(r->manifest.at("config"), ModelConfig{});
  r->model = assemble(mc, r->ctx, r->manifest.at("output_dim").get<std::size_t>());
  load_checkpoint(*r->model, checkpoint);
  return r;
}

json evaluation_json(const Model& model, const GraphContext& ctx, const std::vector<std::size_t>& part) {
  if (part.empty()) return nullptr;
  auto batch = target_batch(*ctx.graph, part);
  const auto has_pos = std::find(batch.binary.begin(), batch.binary.end(), 1) != batch.binary.end();
  const auto has_neg = std::find(batch.binary.begin(), batch.binary.end(), 0) != batch.binary.end();
  if (!has_pos || !has_neg) return {{"n", part.size()}, {"prevalence", prevalence(batch.binary)}};
  auto e = evaluate(model, ctx, part);
  return {{"n", part.size()}, {"ap", e.ap}, {"auc", e.auc}, {"prevalence", e.prevalence}};
}

int cmd_evaluate(const Common& c, const DataOptions& d, const std::string& checkpoint, std::ostream& out) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto r = restore(checkpoint, d);
  SplitPolicy policy = SplitPolicy::chronological;
  std::uint64_t split_seed = 0;
  const auto& meta = r->manifest.at("meta");
  if (meta.contains("split")) {
    policy = parse_split_policy(meta["split"].at("policy").get<std::string>());
    split_seed = meta["split"].at("seed").get<std::uint64_t>();
  }
  const auto split = make_split(r->graph.targets, policy, split_seed);
  const auto dir = make_run_dir(c.out, "evaluate");
  auto config = header("evaluate");
  config["checkpoint"] = fs::absolute(checkpoint).lexically_normal().string();
  config["data"] = r->source;
  config["split"] = {{"policy", to_string(policy)}, {"seed", split_seed}};
  write_json(dir / "config.json", config);
  json metrics{{"variant", r->manifest.at("config").at("variant")},
               {"train", evaluation_json(*r->model, r->ctx, split.train)},
               {"val", evaluation_json(*r->model, r->ctx, split.val)},
               {"test", evaluation_json(*r->model, r->ctx, split.test)}};
  write_json(dir / "metrics.json", metrics);
  out << metrics.dump(2) << '\n';
  return 0;
}

// --------------------------------------------------------------- featurize

void write_features_csv(const fs::path& path, const FeatureExtraction& ex, const Schema& schema) {
  csv::Table t;
  t.header.push_back("target_id");
  for (const auto& n : feature_names(schema)) t.header.push_back(n);
  t.header.push_back("label");
  for (const auto& row : ex.rows) {
    std::vector<std::string> cells{std::to_string(row.target.id)};
    for (auto v : row.values()) cells.push_back(std::to_string(static_cast<long long>(v)));
    cells.push_back(std::to_string(row.label));
    t.rows.push_back(std::move(cells));
  }
  csv::write(path, t);
}

std::vector<FeatureMode> modes_of(const std::string& mode) {
  if (mode == "both") return {FeatureMode::global, FeatureMode::incremental};
  return {parse_feature_mode(mode)};
}

int cmd_featurize(const Common& c, const DataOptions& d, const std::string& mode, std::ostream& out,
                  std::ostream& err) {
  const json file = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  auto l = load_data(d, file);
  const auto g = graph_of(l.data);
  const auto dir = make_run_dir(c.out, "featurize");
  auto config = header("featurize");
  config["data"] = l.source;
  config["mode"] = mode;
  write_json(dir / "config.json", config);
  json summary = json::object();
  for (auto m : modes_of(mode)) {
    const auto ex = extract_features(g.events, g.targets, m, g.schema);
    const auto name = "features-" + to_string(m) + ".csv";
    write_features_csv(dir / name, ex, g.schema);
    summary[to_string(m)] = {{"file", name}, {"rows", ex.rows.size()}, {"multi_linker_targets", ex.multi_linker_targets}};
    if (ex.multi_linker_targets > 0 && !c.quiet) {
      err << "warning: " << ex.multi_linker_targets << " targets have several linkers of one type ("
          << to_string(m) << "); the busiest one was used\n";
    }
  }
  write_json(dir / "features.json", summary);
  out << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- baseline

std::vector<SplitPolicy> splits_of(const std::string& split) {
  if (split == "both") return {SplitPolicy::chronological, SplitPolicy::random};
  return {parse_split_policy(split)};
}

int cmd_baseline(const Common& c, const DataOptions& d, const std::string& mode, const std::string& split,
                 std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const json file = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  auto l = load_data(d, file);
  const auto g = graph_of(l.data);
  FitOptions fit;
  if (file.contains("fit")) {
    const auto& f = file["fit"];
    fit.l2 = f.value("l2", fit.l2);
    fit.lr = f.value("lr", fit.lr);
    fit.epochs = f.value("epochs", fit.epochs);
  }
  const auto dir = make_run_dir(c.out, "baseline");
  auto config = header("baseline");
  config["data"] = l.source;
  config["mode"] = mode;
  config["split"] = split;
  config["seed"] = seed;
  config["fit"] = {{"l2", fit.l2}, {"lr", fit.lr}, {"epochs", fit.epochs}};
  write_json(dir / "config.json", config);

  json results = json::array();
  std::map<std::pair<std::string, std::string>, double> ap;
  for (auto m : modes_of(mode)) {
    for (auto s : splits_of(split)) {
      auto r = run_baseline(g, m, s, seed, fit);
      for (const auto& w : r.warnings)
        if (!c.quiet) err << "warning: " << w << '\n';
      ap[{to_string(m), to_string(s)}] = r.test_ap;
      results.push_back(to_json(r));
    }
  }
  json summary{{"results", results}};
  json gaps = json::object();
  for (const auto& s : {std::string("chronological"), std::string("random")}) {
    if (ap.count({"global", s}) && ap.count({"incremental", s}))
      gaps["global_minus_incremental_" + s] = ap[{"global", s}] - ap[{"incremental", s}];
  }
  for (const auto& m : {std::string("global"), std::string("incremental")}) {
    if (ap.count({m, "random"}) && ap.count({m, "chronological"}))
      gaps["random_minus_chronological_" + m] = ap[{m, "random"}] - ap[{m, "chronological"}];
  }
  summary["gaps"] = gaps;
  write_json(dir / "baseline.json", summary);
  out << summary.dump(2) << '\n';
  return 0;
}

// -------------------------------------------------------------- importance

int cmd_importance(const Common& c, const DataOptions& d, const std::string& mode, const std::string& split,
                   std::size_t repeats, std::uint64_t seed, std::ostream& out) {
  const json file = c.config_path.empty() ? json::object() : read_json_file(c.config_path);
  auto l = load_data(d, file);
  const auto g = graph_of(l.data);
  const auto m = parse_feature_mode(mode);
  const auto policy = parse_split_policy(split);
  const auto r = run_baseline(g, m, policy, seed);
  const auto ex = extract_features(g.events, g.targets, m, g.schema);
  const auto parts = make_split(g.targets, policy, seed);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (auto p : parts.test) {
    x.push_back(ex.rows[p].values());
    y.push_back(ex.rows[p].label);
  }
  auto imp = permutation_importance(r.model, x, y, repeats, seed);

  const auto dir = make_run_dir(c.out, "importance");
  auto config = header("importance");
  config["data"] = l.source;
  config["mode"] = mode;
  config["split"] = to_string(policy);
  config["repeats"] = repeats;
  config["seed"] = seed;
  write_json(dir / "config.json", config);

  csv::Table t{{"feature", "mean_ap_drop", "std"}, {}};
  json rows = json::array();
  std::sort(imp.begin(), imp.end(), [](const Importance& a, const Importance& b) { return a.mean_drop > b.mean_drop; });
  for (const auto& i : imp) {
    t.rows.push_back({i.feature, csv::format(i.mean_drop), csv::format(i.std)});
    rows.push_back({{"feature", i.feature}, {"mean_ap_drop", i.mean_drop}, {"std", i.std}});
  }
  csv::write(dir / "importance.csv", t);
  json report{{"baseline", to_json(r)}, {"importance", rows}};
  write_json(dir / "importance.json", report);
  out << json(rows).dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------- export-embeddings

int cmd_export_embeddings(const Common& c, const DataOptions& d, const std::string& checkpoint, std::ostream& out) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto r = restore(checkpoint, d);
  const auto mc = r->model->config();
  if (!is_diachronic(mc.variant)) {
    throw ConfigError("checkpoint holds a " + to_string(mc.variant) + " model, which has no diachronic embeddings");
  }
  const auto& g = r->graph;
  auto params = DiachronicParams::init(graph_entities(g), g.schema.relation_count(), mc.diachronic, 0);
  NamedParams named;
  params.collect(named, "de");
  const auto values = r->model->snapshot();
  for (auto& [name, t] : named) {
    const auto& v = values.at(name);
    auto dst = t.mutable_values();
    std::copy(v.begin(), v.end(), dst.begin());
  }

  // One row per replica: the embedding at the entity's first event day of that week.
  std::map<std::pair<EntityRef, int>, int> first_day;
  for (const auto& e : g.events) {
    for (const auto& ent : {e.target, e.linker}) {
      auto [it, fresh] = first_day.emplace(std::make_pair(ent, e.week), e.day);
      if (!fresh) it->second = std::min(it->second, e.day);
    }
  }
  csv::Table t{{"entity_type", "entity_id", "week", "day"}, {}};
  for (std::size_t k = 0; k < mc.diachronic.dim; ++k) t.header.push_back("z" + std::to_string(k));
  {
    NoGradGuard no_grad;
    for (const auto& [key, day] : first_day) {
      const auto z = deemb(key.first, key.second, day, params);
      std::vector<std::string> row{g.schema.node_types.at(key.first.type), std::to_string(key.first.id),
                                   std::to_string(key.second), std::to_string(day)};
      for (auto v : z.values()) row.push_back(csv::format(v));
      t.rows.push_back(std::move(row));
    }
  }
  const auto dir = make_run_dir(c.out, "export-embeddings");
  auto config = header("export-embeddings");
  config["checkpoint"] = fs::absolute(checkpoint).lexically_normal().string();
  config["data"] = r->source;
  write_json(dir / "config.json", config);
  csv::write(dir / "embeddings.csv", t);
  json summary{{"rows", t.rows.size()}, {"dim", mc.diachronic.dim}, {"file", "embeddings.csv"}};
  write_json(dir / "embeddings.json", summary);
  out << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic heterogeneous graph fraud detection"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  Common common;
  DataOptions data;
  TrainOptions train_opts;
  std::string checkpoint;
  std::string mode = "both", split = "both";
  std::uint64_t seed = 0;
  std::size_t repeats = 10;

  auto* gen = app.add_subcommand("generate", "Synthetic event log -> CSV files");
  add_common(gen, common);
  add_data_options(gen, data);

  auto* bg = app.add_subcommand("build-graph", "CSV files -> graph statistics");
  add_common(bg, common);
  add_data_options(bg, data);

  auto* tr = app.add_subcommand("train", "Train a model over one or more seeds");
  add_common(tr, common);
  add_data_options(tr, data);
  tr->add_option("--variant", train_opts.variant, "gcn|gat|simple-hgn|dyhgn|dyhgn-de|dyhgn-de-hgt")
      ->capture_default_str();
  tr->add_option("--profile", train_opts.profile, "full (default hyperparameters) or desk (small and fast)")
      ->check(CLI::IsMember({"full", "desk"}))
      ->capture_default_str();
  tr->add_option("--seeds", train_opts.seeds, "Number of seeds")->capture_default_str();
  tr->add_option("--seed", train_opts.seed, "First seed")->capture_default_str();
  tr->add_option("--split", train_opts.split, "chronological|random_trainval|random")->capture_default_str();
  tr->add_option("--split-seed", train_opts.split_seed, "Seed of random splits")->capture_default_str();
  tr->add_option("--aggregation", train_opts.aggregation, "Diachronic aggregation")
      ->check(CLI::IsMember({"lstm", "mean"}));
  tr->add_option("--score-mode", train_opts.score_mode, "full or source-only");
  tr->add_option("--gamma", train_opts.gamma, "Temporal share of the diachronic embedding");
  tr->add_option("--de-dim", train_opts.de_dim, "Diachronic embedding width");
  tr->add_option("--n-hid", train_opts.n_hid, "Hidden width");
  tr->add_option("--n-layers", train_opts.n_layers, "Layers (blocks)");
  tr->add_option("--epochs", train_opts.epochs, "Maximum epochs");
  tr->add_option("--patience", train_opts.patience, "Early-stopping patience");
  tr->add_option("--lr", train_opts.lr, "Learning rate");
  tr->add_option("--dropout", train_opts.dropout, "Dropout");
  tr->add_flag("--structural-only", train_opts.structural_only, "Baselines ignore temporal edges");

  auto* ev = app.add_subcommand("evaluate", "Checkpoint -> AP/AUC per split");
  add_common(ev, common);
  add_data_options(ev, data);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();

  auto* fz = app.add_subcommand("featurize", "Graph-derived feature CSVs");
  add_common(fz, common);
  add_data_options(fz, data);
  fz->add_option("--mode", mode, "global|incremental|both")->capture_default_str();

  auto* bl = app.add_subcommand("baseline", "Linear model on graph-derived features");
  add_common(bl, common);
  add_data_options(bl, data);
  bl->add_option("--mode", mode, "global|incremental|both")->capture_default_str();
  bl->add_option("--split", split, "chronological|random|both")->capture_default_str();
  bl->add_option("--seed", seed, "Split seed")->capture_default_str();

  std::string imp_mode = "global", imp_split = "chronological";
  auto* im = app.add_subcommand("importance", "Permutation feature importance");
  add_common(im, common);
  add_data_options(im, data);
  im->add_option("--mode", imp_mode, "global|incremental")->capture_default_str();
  im->add_option("--split", imp_split, "chronological|random")->capture_default_str();
  im->add_option("--repeats", repeats, "Shuffles per feature")->capture_default_str();
  im->add_option("--seed", seed, "Seed")->capture_default_str();

  auto* ex = app.add_subcommand("export-embeddings", "Diachronic embeddings of a trained model -> CSV");
  add_common(ex, common);
  add_data_options(ex, data);
  ex->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(common, data, out);
    if (bg->parsed()) return cmd_build_graph(common, data, out);
    if (tr->parsed()) return cmd_train(common, data, train_opts, out, err);
    if (ev->parsed()) return cmd_evaluate(common, data, checkpoint, out);
    if (fz->parsed()) return cmd_featurize(common, data, mode, out, err);
    if (bl->parsed()) return cmd_baseline(common, data, mode, split, seed, out, err);
    if (im->parsed()) return cmd_importance(common, data, imp_mode, imp_split, repeats, seed, out);
    if (ex->parsed()) return cmd_export_embeddings(common, data, checkpoint, out);
  } catch (const std::invalid_argument& e) {
    // ConfigError, ValidationError and DimensionError.
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const MetricError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace dyhgn::cli
