#pragma once

// Unrolled dynamic heterogeneous graph.
//
// Each entity gets one replica node per weekly snapshot in which it has an
// event. Events become structural edges between replicas of the same
// snapshot; every entity also gets one hub node joined to all its replicas
// by temporal edges, so information crosses snapshots only through hubs.
//
// Node order is fixed: replicas sorted by (type, id, snapshot), then hubs
// sorted by (type, id).

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dyhgn/ops.hpp"
#include "dyhgn/tensor.hpp"

namespace dyhgn {

// Node types and relations of one dataset family. Type 0 is the target type
// (the entity being classified); relation r links the target type to linker
// type r + 1.
struct Schema {
  std::string name;
  std::vector<std::string> node_types;
  std::vector<std::string> relations;

  static Schema massreg();
  static Schema xfraud_txn();
  static Schema xfraud_account();
  // "massreg", "xfraud-txn" or "xfraud-account".
  static Schema by_name(std::string_view name);

  std::uint32_t type_code(std::string_view type) const;
  std::uint32_t relation_code(std::string_view relation) const;
  std::uint32_t linker_type(std::uint32_t relation) const { return relation + 1; }
  std::size_t relation_count() const { return relations.size(); }
  // Extra edge types used by typed convolutions.
  std::uint32_t temporal_relation() const { return static_cast<std::uint32_t>(relations.size()); }
  std::uint32_t self_relation() const { return static_cast<std::uint32_t>(relations.size() + 1); }
  std::size_t edge_type_count() const { return relations.size() + 2; }
};

struct EntityRef {
  std::uint32_t type = 0;
  std::uint64_t id = 0;
  auto operator<=>(const EntityRef&) const = default;
};

// Week containing an absolute day index: days [7w, 7w + 7) belong to week w.
inline int week_of_day(int day) { return day >= 0 ? day / 7 : -1; }

struct EventRecord {
  EntityRef target;
  EntityRef linker;
  std::uint32_t relation = 0;
  int week = 1;
  int day = 7;
};

struct TargetRecord {
  int binary = 0;
  std::optional<int> risk_level;
  std::vector<double> features;
};

struct LabelSet {
  std::size_t feature_dim = 0;
  std::map<EntityRef, TargetRecord> targets;

  // risk_level > 0 <=> binary == 1, feature widths equal feature_dim.
  void validate() const;
  bool has_risk_levels() const;
};

struct GraphNode {
  EntityRef entity;
  int snapshot = 0;  // 0 for hubs
  bool hub = false;
  int first_snapshot = 0;
  int last_snapshot = 0;
};

struct StructuralEdge {
  std::size_t source;
  std::size_t target;
  std::uint32_t relation;
  std::size_t event;
};

struct TemporalEdge {
  std::size_t replica;
  std::size_t hub;
};

// A labelled entity and the replica node its prediction is read from.
struct TargetNode {
  EntityRef entity;
  std::size_t node;
  int week;
  int day;
  int binary;
  int risk_level;  // -1 when the label set carries none
};

enum class Subgraph { structural, temporal, both };

struct EdgeList {
  std::size_t node_count = 0;
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;
  std::vector<std::uint32_t> relation;
  std::size_t size() const { return source.size(); }
};

class UnrolledGraph {
 public:
  Schema schema;
  int snapshot_count = 0;
  std::vector<GraphNode> nodes;
  // Canonically ordered (target, linker, relation, week, day).
  std::vector<EventRecord> events;
  // Two per event (target->linker, linker->target), event-major.
  std::vector<StructuralEdge> structural_edges;
  // Stored once; expanded to both directions by convolutions.
  std::vector<TemporalEdge> temporal_edges;
  // Sorted by entity.
  std::vector<TargetNode> targets;
  std::size_t feature_dim = 0;
  // Row-major [node_count x feature_dim]; zero rows for non-target nodes.
  std::vector<double> feature_values;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t replica_count() const { return nodes.size() - hub_lookup_.size(); }
  std::size_t hub_count() const { return hub_lookup_.size(); }
  std::optional<std::size_t> replica_index(const EntityRef& entity, int snapshot) const;
  std::optional<std::size_t> hub_index(const EntityRef& entity) const;
  std::vector<std::uint32_t> node_types() const;
  // Constant [N x F] tensor; throws if the graph is empty or has no features.
  Tensor feature_tensor() const;

 private:
  friend UnrolledGraph build_unrolled_graph(std::vector<EventRecord>, const LabelSet&, int, const Schema&);
  std::map<std::pair<EntityRef, int>, std::size_t> replica_lookup_;
  std::map<EntityRef, std::size_t> hub_lookup_;
};

// Validates every record (snapshot range, day inside its week, relation
// consistent with both endpoint types, labelled targets) and unrolls the log.
UnrolledGraph build_unrolled_graph(std::vector<EventRecord> events, const LabelSet& labels, int snapshot_count,
                                   const Schema& schema);

// D^-1/2 (A + I) D^-1/2 over all N nodes; multi-edges add up.
SparseMatrix normalized_adjacency(const UnrolledGraph& graph, Subgraph subgraph);

// Directed typed edges. Temporal edges are emitted in both directions with
// schema.temporal_relation(); self-loops use schema.self_relation().
EdgeList typed_edges(const UnrolledGraph& graph, Subgraph subgraph, bool self_loops);

struct GraphStatistics {
  std::map<std::string, std::size_t> replica_nodes;  // per node type
  std::map<std::string, std::size_t> hub_nodes;      // per node type
  std::map<std::string, std::size_t> relation_edges; // events per relation
  std::size_t temporal_edges = 0;
  std::size_t total_nodes = 0;
  std::size_t total_edges = 0;  // undirected structural + temporal
};

GraphStatistics graph_statistics(const UnrolledGraph& graph);
nlohmann::json to_json(const GraphStatistics& stats);

std::string describe(const EventRecord& event, const Schema& schema);

}  // namespace dyhgn
