#include "dyhgn/models.hpp"

#include <algorithm>

#include "dyhgn/errors.hpp"
#include "dyhgn/optim.hpp"

namespace dyhgn {

Variant parse_variant(std::string_view s) {
  if (s == "gcn") return Variant::gcn;
  if (s == "gat") return Variant::gat;
  if (s == "simple-hgn") return Variant::simple_hgn;
  if (s == "dyhgn") return Variant::dyhgn;
  if (s == "dyhgn-de") return Variant::dyhgn_de;
  if (s == "dyhgn-de-hgt") return Variant::dyhgn_de_hgt;
  throw ConfigError("unknown variant '" + std::string(s) + "' (gcn|gat|simple-hgn|dyhgn|dyhgn-de|dyhgn-de-hgt)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::gcn: return "gcn";
    case Variant::gat: return "gat";
    case Variant::simple_hgn: return "simple-hgn";
    case Variant::dyhgn: return "dyhgn";
    case Variant::dyhgn_de: return "dyhgn-de";
    case Variant::dyhgn_de_hgt: return "dyhgn-de-hgt";
  }
  return "dyhgn";
}

bool is_diachronic(Variant v) { return v == Variant::dyhgn_de || v == Variant::dyhgn_de_hgt; }

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::gcn,   Variant::gat,      Variant::simple_hgn,
                                      Variant::dyhgn, Variant::dyhgn_de, Variant::dyhgn_de_hgt};
  return v;
}

LossKind loss_kind_for(std::string_view schema) {
  return schema == "massreg" ? LossKind::binary_and_risk : LossKind::binary;
}

ModelConfig ModelConfig::defaults(std::string_view dataset, Variant variant) {
  // Columns: massreg, xfraud-txn, xfraud-account.
  std::size_t col;
  if (dataset == "massreg") {
    col = 0;
  } else if (dataset == "xfraud-txn") {
    col = 1;
  } else if (dataset == "xfraud-account") {
    col = 2;
  } else {
    throw ConfigError("no defaults for dataset '" + std::string(dataset) + "'");
  }
  struct Row {
    std::size_t layers[3];
    std::size_t hid[3];
    std::size_t de_dim[3];
  };
  Row row{};
  switch (variant) {
    case Variant::gcn: row = {{4, 4, 4}, {256, 256, 256}, {0, 0, 0}}; break;
    case Variant::gat: row = {{8, 2, 2}, {256, 256, 128}, {0, 0, 0}}; break;
    case Variant::simple_hgn: row = {{2, 2, 2}, {256, 64, 256}, {0, 0, 0}}; break;
    case Variant::dyhgn: row = {{4, 2, 4}, {256, 256, 128}, {0, 0, 0}}; break;
    case Variant::dyhgn_de: row = {{4, 2, 2}, {256, 128, 128}, {60, 10, 10}}; break;
    case Variant::dyhgn_de_hgt: row = {{4, 2, 2}, {256, 128, 128}, {30, 10, 10}}; break;
  }
  ModelConfig c;
  c.variant = variant;
  c.dataset = std::string(dataset);
  c.n_layers = row.layers[col];
  c.n_hid = row.hid[col];
  c.n_heads = 4;
  c.dropout = 0.1;
  c.lr = 1e-3;
  c.patience = 64;
  c.max_epochs = is_diachronic(variant) ? 128 : 2048;
  if (is_diachronic(variant)) c.diachronic.dim = row.de_dim[col];
  return c;
}

ModelConfig ModelConfig::desk(std::string_view dataset, Variant variant) {
  auto c = defaults(dataset, variant);
  c.n_layers = 2;
  c.n_hid = 16;
  c.lr = 0.01;
  c.max_epochs = 60;
  c.patience = 20;
  if (is_diachronic(variant)) c.diachronic.dim = 16;
  return c;
}

void ModelConfig::validate() const {
  if (n_layers == 0) throw ConfigError("n_layers must be positive");
  if (n_hid == 0) throw ConfigError("n_hid must be positive");
  if (n_heads == 0) throw ConfigError("n_heads must be positive");
  const bool attention = variant == Variant::gat || variant == Variant::simple_hgn || variant == Variant::dyhgn_de_hgt;
  if (attention && n_hid % n_heads != 0) {
    throw ConfigError("n_hid " + std::to_string(n_hid) + " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  if (!(lr >= 0.0)) throw ConfigError("lr must be nonnegative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (edge_type_dim == 0) throw ConfigError("edge_type_dim must be positive");
  Schema::by_name(dataset);
  if (is_diachronic(variant)) diachronic.validate();
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"dataset", c.dataset},
          {"n_layers", c.n_layers},
          {"n_hid", c.n_hid},
          {"n_heads", c.n_heads},
          {"dropout", c.dropout},
          {"optimizer", "adamw"},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"baseline_temporal_edges", c.baseline_temporal_edges},
          {"edge_type_dim", c.edge_type_dim},
          {"diachronic", to_json(c.diachronic)},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("n_layers")) c.n_layers = j.at("n_layers").get<std::size_t>();
    if (j.contains("n_hid")) c.n_hid = j.at("n_hid").get<std::size_t>();
    if (j.contains("n_heads")) c.n_heads = j.at("n_heads").get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    if (j.contains("optimizer") && j.at("optimizer").get<std::string>() != "adamw") {
      throw ConfigError("only the adamw optimizer is supported");
    }
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<std::size_t>();
    if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
    if (j.contains("baseline_temporal_edges")) c.baseline_temporal_edges = j.at("baseline_temporal_edges").get<bool>();
    if (j.contains("edge_type_dim")) c.edge_type_dim = j.at("edge_type_dim").get<std::size_t>();
    if (j.contains("diachronic")) c.diachronic = diachronic_config_from_json(j.at("diachronic"), c.diachronic);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

GraphContext GraphContext::build(const UnrolledGraph& graph) {
  GraphContext ctx;
  ctx.graph = &graph;
  ctx.structural = std::make_shared<SparseMatrix>(normalized_adjacency(graph, Subgraph::structural));
  ctx.temporal = std::make_shared<SparseMatrix>(normalized_adjacency(graph, Subgraph::temporal));
  ctx.both = std::make_shared<SparseMatrix>(normalized_adjacency(graph, Subgraph::both));
  ctx.typed_both = typed_edges(graph, Subgraph::both, true);
  ctx.typed_structural = typed_edges(graph, Subgraph::structural, true);
  ctx.node_types = graph.node_types();
  ctx.features = graph.feature_tensor();
  return ctx;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void Model::assign(const std::map<std::string, std::vector<double>>& values) {
  for (auto& [name, t] : params_) {
    auto it = values.find(name);
    if (it == values.end()) continue;
    if (it->second.size() != t.numel()) {
      throw DimensionError("parameter " + name + ": " + std::to_string(it->second.size()) + " values for shape " +
                           shape_string(t.shape()));
    }
    auto dst = t.mutable_values();
    std::copy(it->second.begin(), it->second.end(), dst.begin());
  }
}

std::map<std::string, std::vector<double>> Model::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, t] : params_) out[name] = {t.values().begin(), t.values().end()};
  return out;
}

namespace {

struct GcnLayer {
  Tensor weight;
  Tensor bias;
  static GcnLayer init(std::size_t in, std::size_t out, std::uint64_t seed) {
    return {glorot_uniform(in, out, seed), Tensor::zeros({out}, true)};
  }
  Tensor operator()(const Tensor& x, const std::shared_ptr<const SparseMatrix>& a) const {
    return add_bias(gcn_conv(x, a, weight), bias);
  }
  void collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

std::uint64_t site(std::uint64_t seed, std::uint64_t layer, std::uint64_t position) {
  return derive_seed(seed, {layer, position});
}

class GcnModel final : public Model {
 public:
  GcnModel(const ModelConfig& c, std::size_t in, std::size_t out) : Model(c, out) {
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      layers_.push_back(GcnLayer::init(l == 0 ? in : c.n_hid, c.n_hid, derive_seed(c.seed, {1, l})));
      layers_.back().collect(params_, "conv" + std::to_string(l));
    }
    head_ = MlpHeadParams::init(c.n_hid, c.n_hid, out, c.dropout, derive_seed(c.seed, {2}));
    head_.collect(params_, "head");
  }
  Tensor forward(const GraphContext& ctx, bool training, std::uint64_t seed) const override {
    const auto& a = config_.baseline_temporal_edges ? ctx.both : ctx.structural;
    auto h = ctx.features;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = dropout(relu(layers_[l](h, a)), config_.dropout, training, site(seed, l, 0));
    }
    return mlp_head(h, head_, training, site(seed, layers_.size(), 0));
  }

 private:
  std::vector<GcnLayer> layers_;
  MlpHeadParams head_;
};

class GatModel final : public Model {
 public:
  GatModel(const ModelConfig& c, std::size_t in, std::size_t out) : Model(c, out) {
    const auto head_dim = c.n_hid / c.n_heads;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      layers_.push_back(GatParams::init(l == 0 ? in : c.n_hid, c.n_heads, head_dim, derive_seed(c.seed, {1, l})));
      layers_.back().collect(params_, "gat" + std::to_string(l));
    }
    head_ = MlpHeadParams::init(c.n_hid, c.n_hid, out, c.dropout, derive_seed(c.seed, {2}));
    head_.collect(params_, "head");
  }
  Tensor forward(const GraphContext& ctx, bool training, std::uint64_t seed) const override {
    const auto& edges = config_.baseline_temporal_edges ? ctx.typed_both : ctx.typed_structural;
    auto h = ctx.features;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = dropout(relu(gat_conv(h, edges, layers_[l]).output), config_.dropout, training, site(seed, l, 0));
    }
    return mlp_head(h, head_, training, site(seed, layers_.size(), 0));
  }

 private:
  std::vector<GatParams> layers_;
  MlpHeadParams head_;
};

class SimpleHgnModel final : public Model {
 public:
  SimpleHgnModel(const ModelConfig& c, std::size_t in, std::size_t out, std::size_t edge_types) : Model(c, out) {
    const auto head_dim = c.n_hid / c.n_heads;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      layers_.push_back(SimpleHgnParams::init(l == 0 ? in : c.n_hid, c.n_heads, head_dim, edge_types, c.edge_type_dim,
                                              derive_seed(c.seed, {1, l})));
      layers_.back().collect(params_, "hgn" + std::to_string(l));
    }
    head_ = MlpHeadParams::init(c.n_hid, c.n_hid, out, c.dropout, derive_seed(c.seed, {2}));
    head_.collect(params_, "head");
  }
  Tensor forward(const GraphContext& ctx, bool training, std::uint64_t seed) const override {
    const auto& edges = config_.baseline_temporal_edges ? ctx.typed_both : ctx.typed_structural;
    auto h = ctx.features;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = dropout(simple_hgn_conv(h, edges, layers_[l]).output, config_.dropout, training, site(seed, l, 0));
    }
    return mlp_head(h, head_, training, site(seed, layers_.size(), 0));
  }

 private:
  std::vector<SimpleHgnParams> layers_;
  MlpHeadParams head_;
};

// Structural GCN -> FC/LN/ReLU/Dropout -> temporal GCN -> Dropout/LN/ReLU, per block.
struct DyhgnBlock {
  GcnLayer structural;
  Linear fc;
  LayerNormParams norm_fc;
  GcnLayer temporal;
  LayerNormParams norm_out;
};

class DyhgnTrunk {
 public:
  void init(const ModelConfig& c, std::size_t in, std::size_t out, NamedParams& params) {
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      const auto d_in = l == 0 ? in : c.n_hid;
      DyhgnBlock b{GcnLayer::init(d_in, c.n_hid, derive_seed(c.seed, {10, l, 1})),
                   Linear::init(c.n_hid, c.n_hid, derive_seed(c.seed, {10, l, 2})), LayerNormParams::init(c.n_hid),
                   GcnLayer::init(c.n_hid, c.n_hid, derive_seed(c.seed, {10, l, 3})), LayerNormParams::init(c.n_hid)};
      const auto prefix = "trunk.block" + std::to_string(l);
      b.structural.collect(params, prefix + ".structural");
      b.fc.collect(params, prefix + ".fc");
      b.norm_fc.collect(params, prefix + ".norm_fc");
      b.temporal.collect(params, prefix + ".temporal");
      b.norm_out.collect(params, prefix + ".norm_out");
      blocks_.push_back(std::move(b));
    }
    head_ = MlpHeadParams::init(c.n_hid, c.n_hid, out, c.dropout, derive_seed(c.seed, {11}));
    head_.collect(params, "head");
    dropout_ = c.dropout;
  }

  Tensor operator()(const Tensor& x, const GraphContext& ctx, bool training, std::uint64_t seed) const {
    auto h = x;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const auto& b = blocks_[l];
      h = b.structural(h, ctx.structural);
      h = dropout(relu(b.norm_fc(b.fc(h))), dropout_, training, site(seed, l, 0));
      h = b.temporal(h, ctx.temporal);
      h = relu(b.norm_out(dropout(h, dropout_, training, site(seed, l, 1))));
    }
    return mlp_head(h, head_, training, site(seed, blocks_.size(), 0));
  }

 private:
  std::vector<DyhgnBlock> blocks_;
  MlpHeadParams head_;
  double dropout_ = 0.0;
};

class DyhgnModel final : public Model {
 public:
  DyhgnModel(const ModelConfig& c, std::size_t in, std::size_t out) : Model(c, out) { trunk_.init(c, in, out, params_); }
  Tensor forward(const GraphContext& ctx, bool training, std::uint64_t seed) const override {
    return trunk_(ctx.features, ctx, training, seed);
  }

 private:
  DyhgnTrunk trunk_;
};

class DyhgnDeModel final : public Model {
 public:
  DyhgnDeModel(const ModelConfig& c, const GraphContext& ctx, std::size_t out, bool with_hgt) : Model(c, out) {
    const auto& graph = *ctx.graph;
    if (graph.events.empty()) throw ConfigError("diachronic variants need at least one event");
    de_ = DiachronicParams::init(graph_entities(graph), graph.schema.relation_count(), c.diachronic,
                                 derive_seed(c.seed, {20}));
    de_.collect(params_, "de");
    const auto x_de_dim = ctx.features.cols() + c.diachronic.output_dim();
    std::size_t trunk_in = x_de_dim;
    if (with_hgt) {
      hgt_ = HgtParams::init(x_de_dim, c.n_heads, c.n_hid / c.n_heads, graph.schema.node_types.size(),
                             graph.schema.edge_type_count(), derive_seed(c.seed, {21}));
      hgt_.collect(params_, "hgt");
      trunk_in = c.n_hid;
      with_hgt_ = true;
    }
    trunk_.init(c, trunk_in, out, params_);
  }
  Tensor forward(const GraphContext& ctx, bool training, std::uint64_t seed) const override {
    auto x = build_x_de(*ctx.graph, ctx.features, de_, config_.diachronic);
    if (with_hgt_) x = hgt_conv(x, ctx.node_types, ctx.typed_structural, hgt_).output;
    return trunk_(x, ctx, training, seed);
  }

 private:
  DiachronicParams de_;
  HgtParams hgt_;
  bool with_hgt_ = false;
  DyhgnTrunk trunk_;
};

}  // namespace

std::unique_ptr<Model> assemble(const ModelConfig& config, const GraphContext& ctx, std::size_t output_dim) {
  config.validate();
  if (ctx.graph == nullptr) throw ContractError("assemble: graph context without a graph");
  if (config.dataset != ctx.graph->schema.name) {
    throw ConfigError("model configured for dataset '" + config.dataset + "' but the graph uses schema '" +
                      ctx.graph->schema.name + "'");
  }
  if (output_dim < 2) throw ConfigError("output_dim must be at least 2");
  const auto in = ctx.features.cols();
  switch (config.variant) {
    case Variant::gcn: return std::make_unique<GcnModel>(config, in, output_dim);
    case Variant::gat: return std::make_unique<GatModel>(config, in, output_dim);
    case Variant::simple_hgn:
      return std::make_unique<SimpleHgnModel>(config, in, output_dim, ctx.graph->schema.edge_type_count());
    case Variant::dyhgn: return std::make_unique<DyhgnModel>(config, in, output_dim);
    case Variant::dyhgn_de: return std::make_unique<DyhgnDeModel>(config, ctx, output_dim, false);
    case Variant::dyhgn_de_hgt: return std::make_unique<DyhgnDeModel>(config, ctx, output_dim, true);
  }
  throw ConfigError("unhandled variant");
}

Tensor classification_loss(const Tensor& logits, std::span<const std::size_t> rows, std::span<const int> binary,
                           std::span<const int> risk, LossKind kind) {
  if (rows.size() != binary.size()) {
    throw DimensionError("loss: " + std::to_string(binary.size()) + " labels for " + std::to_string(rows.size()) +
                         " rows");
  }
  auto picked = gather_rows(logits, rows);
  auto binary_logits = picked.cols() == 2 ? picked : slice_cols(picked, 0, 2);
  auto binary_loss = cross_entropy(binary_logits, binary);
  if (kind == LossKind::binary) return binary_loss;
  if (risk.size() != rows.size()) throw ValidationError("loss: risk levels missing for the combined loss");
  for (auto r : risk) {
    if (r < 0) throw ValidationError("loss: target without a risk level under the combined loss");
  }
  if (picked.cols() < 3) throw DimensionError("loss: logits " + shape_string(logits.shape()) + " have no risk head");
  auto risk_loss = cross_entropy(slice_cols(picked, 2, picked.cols()), risk);
  return scale(add(binary_loss, risk_loss), 0.5);
}

std::vector<double> fraud_scores(const Tensor& logits, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(logits.at(r, 1) - logits.at(r, 0));
  return out;
}

}  // namespace dyhgn
