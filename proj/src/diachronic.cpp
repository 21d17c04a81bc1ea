#include "dyhgn/diachronic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "dyhgn/errors.hpp"
#include "dyhgn/optim.hpp"

namespace dyhgn {

Aggregation parse_aggregation(std::string_view s) {
  if (s == "lstm") return Aggregation::lstm;
  if (s == "mean") return Aggregation::mean;
  throw ConfigError("unknown aggregation '" + std::string(s) + "' (lstm|mean)");
}

ScoreMode parse_score_mode(std::string_view s) {
  if (s == "full" || s == "full_triple") return ScoreMode::full_triple;
  if (s == "source-only" || s == "source_relation_only") return ScoreMode::source_relation_only;
  throw ConfigError("unknown score mode '" + std::string(s) + "' (full|source-only)");
}

MessageKind parse_message_kind(std::string_view s) {
  if (s == "vector") return MessageKind::vector;
  if (s == "scalar") return MessageKind::scalar;
  throw ConfigError("unknown message kind '" + std::string(s) + "' (vector|scalar)");
}

std::string to_string(Aggregation a) { return a == Aggregation::lstm ? "lstm" : "mean"; }
std::string to_string(ScoreMode m) { return m == ScoreMode::full_triple ? "full" : "source-only"; }
std::string to_string(MessageKind m) { return m == MessageKind::vector ? "vector" : "scalar"; }

namespace {

std::string activation_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::identity: return "identity";
    case UnaryOp::relu: return "relu";
    case UnaryOp::sine: return "sine";
    case UnaryOp::sigmoid: return "sigmoid";
    case UnaryOp::tanh: return "tanh";
  }
  return "sine";
}

Tensor normal_table(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = normal(engine);
  return Tensor::from_values({rows, cols}, std::move(v), true);
}

TimeParams init_time(std::size_t rows, std::size_t k, double stddev, std::uint64_t seed) {
  if (k == 0) return {};
  return {normal_table(rows, k, stddev, derive_seed(seed, {1})), normal_table(rows, k, stddev, derive_seed(seed, {2})),
          normal_table(rows, k, stddev, derive_seed(seed, {3})), normal_table(rows, k, stddev, derive_seed(seed, {4}))};
}

void collect_time(const TimeParams& t, NamedParams& out, const std::string& prefix) {
  if (!t.week_freq.defined()) return;
  out.emplace_back(prefix + ".week_freq", t.week_freq);
  out.emplace_back(prefix + ".week_phase", t.week_phase);
  out.emplace_back(prefix + ".day_freq", t.day_freq);
  out.emplace_back(prefix + ".day_phase", t.day_phase);
}

// amplitude[rows] * (act(wf*week + wp) + act(df*day + dp) | 1)
Tensor diachronic_rows(const Tensor& amplitude, const TimeParams& time, std::size_t dim, std::size_t k,
                       UnaryOp activation, std::span<const std::size_t> rows, std::span<const int> weeks,
                       std::span<const int> days) {
  auto a = gather_rows(amplitude, rows);
  if (k == 0) return a;
  std::vector<double> wk(weeks.begin(), weeks.end()), dy(days.begin(), days.end());
  auto week_t = Tensor::from_values({rows.size(), 1}, std::move(wk));
  auto day_t = Tensor::from_values({rows.size(), 1}, std::move(dy));
  auto week_part = unary(add(scale_rows(gather_rows(time.week_freq, rows), week_t), gather_rows(time.week_phase, rows)),
                         activation);
  auto day_part =
      unary(add(scale_rows(gather_rows(time.day_freq, rows), day_t), gather_rows(time.day_phase, rows)), activation);
  auto temporal = add(week_part, day_part);
  if (k == dim) return mul(a, temporal);
  auto multiplier = concat_cols({temporal, Tensor::full({rows.size(), dim - k}, 1.0)});
  return mul(a, multiplier);
}

}  // namespace

std::size_t DiachronicConfig::temporal_dim() const {
  return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(dim) + 1e-9));
}

std::size_t DiachronicConfig::output_dim() const {
  if (message == MessageKind::scalar && aggregation == Aggregation::mean) return 1;
  return dim;
}

void DiachronicConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1], got " + std::to_string(gamma));
  if (dim == 0) throw ConfigError("diachronic embedding size must be positive");
  if (!(init_std > 0.0)) throw ConfigError("diachronic init_std must be positive");
}

nlohmann::json to_json(const DiachronicConfig& c) {
  return {{"aggregation", to_string(c.aggregation)},
          {"score_mode", to_string(c.score_mode)},
          {"message", to_string(c.message)},
          {"relation_time_dependent", c.relation_time_dependent},
          {"dim", c.dim},
          {"gamma", c.gamma},
          {"activation", activation_name(c.activation)},
          {"init_std", c.init_std}};
}

DiachronicConfig diachronic_config_from_json(const nlohmann::json& j, DiachronicConfig c) {
  if (j.contains("aggregation")) c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
  if (j.contains("score_mode")) c.score_mode = parse_score_mode(j.at("score_mode").get<std::string>());
  if (j.contains("message")) c.message = parse_message_kind(j.at("message").get<std::string>());
  if (j.contains("relation_time_dependent")) c.relation_time_dependent = j.at("relation_time_dependent").get<bool>();
  if (j.contains("dim")) c.dim = j.at("dim").get<std::size_t>();
  if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
  if (j.contains("activation")) c.activation = parse_unary_op(j.at("activation").get<std::string>());
  if (j.contains("init_std")) c.init_std = j.at("init_std").get<double>();
  c.validate();
  return c;
}

DiachronicParams DiachronicParams::init(const std::vector<EntityRef>& entities, std::size_t relation_count,
                                        const DiachronicConfig& config, std::uint64_t seed) {
  config.validate();
  if (entities.empty()) throw ContractError("diachronic parameters need at least one entity");
  if (relation_count == 0) throw ContractError("diachronic parameters need at least one relation");
  DiachronicParams p;
  p.dim = config.dim;
  p.temporal_dim = config.temporal_dim();
  p.activation = config.activation;
  for (const auto& e : entities) p.entity_row.try_emplace(e, p.entity_row.size());
  const auto n = p.entity_row.size();
  p.amplitude = normal_table(n, p.dim, config.init_std, derive_seed(seed, {1}));
  p.entity_time = init_time(n, p.temporal_dim, config.init_std, derive_seed(seed, {2}));
  p.relation = normal_table(relation_count, p.dim, config.init_std, derive_seed(seed, {3}));
  p.relation_time_dependent = config.relation_time_dependent;
  if (p.relation_time_dependent) {
    p.relation_time = init_time(relation_count, p.temporal_dim, config.init_std, derive_seed(seed, {4}));
  }
  if (config.aggregation == Aggregation::lstm) {
    const auto in = config.message == MessageKind::vector ? p.dim : 1;
    p.aggregator = LstmParams::init(in, p.dim, derive_seed(seed, {5}));
  }
  return p;
}

std::size_t DiachronicParams::row(const EntityRef& entity) const {
  auto it = entity_row.find(entity);
  if (it == entity_row.end()) {
    throw ParameterError("no diachronic parameters for entity type " + std::to_string(entity.type) + " id " +
                         std::to_string(entity.id));
  }
  return it->second;
}

void DiachronicParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".amplitude", amplitude);
  collect_time(entity_time, out, prefix + ".entity");
  out.emplace_back(prefix + ".relation", relation);
  if (relation_time_dependent) collect_time(relation_time, out, prefix + ".relation");
  if (aggregator.w_input.defined()) aggregator.collect(out, prefix + ".lstm");
}

Tensor deemb_rows(std::span<const std::size_t> rows, std::span<const int> weeks, std::span<const int> days,
                  const DiachronicParams& p) {
  if (rows.size() != weeks.size() || rows.size() != days.size()) {
    throw DimensionError("deemb_rows: rows/weeks/days lengths differ");
  }
  return diachronic_rows(p.amplitude, p.entity_time, p.dim, p.temporal_dim, p.activation, rows, weeks, days);
}

Tensor relation_rows(std::span<const std::uint32_t> relations, std::span<const int> weeks, std::span<const int> days,
                     const DiachronicParams& p) {
  std::vector<std::size_t> rows(relations.begin(), relations.end());
  for (auto r : rows) {
    if (r >= p.relation.rows()) throw ParameterError("no embedding for relation " + std::to_string(r));
  }
  if (!p.relation_time_dependent) return gather_rows(p.relation, rows);
  return diachronic_rows(p.relation, p.relation_time, p.dim, p.temporal_dim, p.activation, rows, weeks, days);
}

Tensor deemb(const EntityRef& v, int week, int day, const DiachronicParams& p) {
  const std::size_t row = p.row(v);
  return reshape(deemb_rows({&row, 1}, {&week, 1}, {&day, 1}, p), {p.dim});
}

EdgeScore de_distmult(const EntityRef& v, std::uint32_t relation, const EntityRef& u, int week, int day,
                      const DiachronicParams& p, ScoreMode mode) {
  auto zv = deemb(v, week, day, p);
  auto zr = reshape(relation_rows({&relation, 1}, {&week, 1}, {&day, 1}, p), {p.dim});
  auto message = mul(zv, zr);
  if (mode == ScoreMode::full_triple) message = mul(message, deemb(u, week, day, p));
  return {sum(message), message};
}

Tensor event_messages(const UnrolledGraph& graph, const DiachronicParams& p, const DiachronicConfig& config) {
  const auto e = graph.events.size();
  if (e == 0) throw ContractError("event_messages on a graph without events");
  std::vector<std::size_t> src(e), dst(e);
  std::vector<std::uint32_t> rel(e);
  std::vector<int> weeks(e), days(e);
  for (std::size_t k = 0; k < e; ++k) {
    const auto& ev = graph.events[k];
    src[k] = p.row(ev.target);
    dst[k] = p.row(ev.linker);
    rel[k] = ev.relation;
    weeks[k] = ev.week;
    days[k] = ev.day;
  }
  auto message = mul(deemb_rows(src, weeks, days, p), relation_rows(rel, weeks, days, p));
  if (config.score_mode == ScoreMode::full_triple) message = mul(message, deemb_rows(dst, weeks, days, p));
  if (config.message == MessageKind::scalar) return row_sum(message);
  return message;
}

std::vector<std::vector<std::size_t>> incident_event_sequences(const UnrolledGraph& graph) {
  std::vector<std::vector<std::size_t>> seq(graph.node_count());
  // Every event contributes one outgoing structural edge at each endpoint.
  for (const auto& edge : graph.structural_edges) seq[edge.source].push_back(edge.event);
  for (auto& s : seq) {
    std::sort(s.begin(), s.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = graph.events[a];
      const auto& eb = graph.events[b];
      return std::tie(ea.week, ea.day, a) < std::tie(eb.week, eb.day, b);
    });
  }
  return seq;
}

Tensor diachronic_block(const UnrolledGraph& graph, const DiachronicParams& p, const DiachronicConfig& config) {
  const auto n = graph.node_count();
  if (n == 0) throw ContractError("diachronic_block on an empty graph");
  const auto width = config.output_dim();
  if (graph.events.empty()) return Tensor::zeros({n, width});
  auto messages = event_messages(graph, p, config);
  auto sequences = incident_event_sequences(graph);
  if (config.aggregation == Aggregation::lstm) return lstm_aggregate(messages, sequences, p.aggregator);
  std::vector<std::size_t> entry_event, entry_node;
  for (std::size_t v = 0; v < n; ++v) {
    for (auto k : sequences[v]) {
      entry_event.push_back(k);
      entry_node.push_back(v);
    }
  }
  return scatter_aggregate(gather_rows(messages, entry_event), entry_node, n, AggregateMode::mean);
}

Tensor build_x_de(const UnrolledGraph& graph, const Tensor& x, const DiachronicParams& p,
                  const DiachronicConfig& config) {
  auto block = diachronic_block(graph, p, config);
  if (!x.defined()) return block;
  if (x.rows() != graph.node_count()) {
    throw DimensionError("build_x_de: features " + shape_string(x.shape()) + " for " +
                         std::to_string(graph.node_count()) + " nodes");
  }
  return concat_cols({x, block});
}

std::vector<EntityRef> graph_entities(const UnrolledGraph& graph) {
  std::set<EntityRef> all;
  for (const auto& e : graph.events) {
    all.insert(e.target);
    all.insert(e.linker);
  }
  return {all.begin(), all.end()};
}

}  // namespace dyhgn
