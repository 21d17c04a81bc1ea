#pragma once

// Diachronic entity embeddings and DE-DistMult edge messages.
//
// For entity v at (week, day), with k = floor(gamma * d) temporal components:
//   z[n] = a[n] * (act(w_week[n] * week + b_week[n]) + act(w_day[n] * day + b_day[n]))   n < k
//   z[n] = a[n]                                                                          n >= k
// An event (v, r, u) carries the message z_v * z_r * z_u (elementwise); its
// DE-DistMult score is the sum of that message. Per graph node the messages
// of incident events are aggregated (LSTM or mean) and appended to X.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dyhgn/graph.hpp"
#include "dyhgn/layers.hpp"
#include "dyhgn/ops.hpp"

namespace dyhgn {

enum class Aggregation { lstm, mean };
enum class ScoreMode { full_triple, source_relation_only };
// vector: aggregate the elementwise products (width d); scalar: aggregate the
// summed scores (width 1 before aggregation).
enum class MessageKind { vector, scalar };

Aggregation parse_aggregation(std::string_view s);
ScoreMode parse_score_mode(std::string_view s);
MessageKind parse_message_kind(std::string_view s);
std::string to_string(Aggregation a);
std::string to_string(ScoreMode m);
std::string to_string(MessageKind m);

struct DiachronicConfig {
  Aggregation aggregation = Aggregation::lstm;
  ScoreMode score_mode = ScoreMode::full_triple;
  MessageKind message = MessageKind::vector;
  bool relation_time_dependent = false;
  std::size_t dim = 60;
  double gamma = 0.5;
  UnaryOp activation = UnaryOp::sine;
  double init_std = 0.1;

  std::size_t temporal_dim() const;
  // Width of the block appended to X.
  std::size_t output_dim() const;
  void validate() const;
};

nlohmann::json to_json(const DiachronicConfig& c);
DiachronicConfig diachronic_config_from_json(const nlohmann::json& j, DiachronicConfig base = {});

struct TimeParams {
  Tensor week_freq;   // [rows x k]
  Tensor week_phase;
  Tensor day_freq;
  Tensor day_phase;
};

struct DiachronicParams {
  std::size_t dim = 0;
  std::size_t temporal_dim = 0;
  UnaryOp activation = UnaryOp::sine;
  std::map<EntityRef, std::size_t> entity_row;
  Tensor amplitude;            // a_v, [entities x d]
  TimeParams entity_time;      // undefined tensors when temporal_dim == 0
  Tensor relation;             // z_r (or a_r when time dependent), [relations x d]
  bool relation_time_dependent = false;
  TimeParams relation_time;
  LstmParams aggregator;       // used when aggregation == lstm

  // Zero-mean normal(init_std) initialisation for every entity listed.
  static DiachronicParams init(const std::vector<EntityRef>& entities, std::size_t relation_count,
                               const DiachronicConfig& config, std::uint64_t seed);
  std::size_t row(const EntityRef& entity) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

// z_v at (week, day) as a [d] tensor.
Tensor deemb(const EntityRef& v, int week, int day, const DiachronicParams& params);

// Embeddings for many (row, week, day) triples at once, [count x d].
Tensor deemb_rows(std::span<const std::size_t> rows, std::span<const int> weeks, std::span<const int> days,
                  const DiachronicParams& params);

// z_r, time dependent only when the params say so, [count x d].
Tensor relation_rows(std::span<const std::uint32_t> relations, std::span<const int> weeks, std::span<const int> days,
                     const DiachronicParams& params);

struct EdgeScore {
  Tensor score;    // [1]
  Tensor message;  // [d]
};

EdgeScore de_distmult(const EntityRef& v, std::uint32_t relation, const EntityRef& u, int week, int day,
                      const DiachronicParams& params, ScoreMode mode);

// Per-event messages for every structural event of the graph, [events x width]
// with width d (vector) or 1 (scalar).
Tensor event_messages(const UnrolledGraph& graph, const DiachronicParams& params, const DiachronicConfig& config);

// For every node, the events incident to it ordered by (snapshot, day, event).
std::vector<std::vector<std::size_t>> incident_event_sequences(const UnrolledGraph& graph);

// Aggregated diachronic block [N x output_dim]; nodes without events get zeros.
Tensor diachronic_block(const UnrolledGraph& graph, const DiachronicParams& params, const DiachronicConfig& config);

// [X | diachronic_block]. `x` may be undefined, in which case only the block is returned.
Tensor build_x_de(const UnrolledGraph& graph, const Tensor& x, const DiachronicParams& params,
                  const DiachronicConfig& config);

// Every entity that appears in the graph's events, sorted.
std::vector<EntityRef> graph_entities(const UnrolledGraph& graph);

}  // namespace dyhgn
