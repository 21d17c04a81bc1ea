#include "dyhgn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dyhgn/errors.hpp"

namespace dyhgn {

Schema Schema::massreg() {
  return {"massreg",
          {"account", "address", "ip", "phone", "email"},
          {"account-address", "account-ip", "account-phone", "account-email"}};
}

Schema Schema::xfraud_txn() {
  return {"xfraud-txn", {"txn", "pmt", "email", "addr", "buyer"}, {"txn-pmt", "txn-email", "txn-addr", "txn-buyer"}};
}

Schema Schema::xfraud_account() {
  return {"xfraud-account",
          {"buyer", "txn", "pmt", "email", "addr"},
          {"buyer-txn", "buyer-pmt", "buyer-email", "buyer-addr"}};
}

Schema Schema::by_name(std::string_view name) {
  if (name == "massreg") return massreg();
  if (name == "xfraud-txn") return xfraud_txn();
  if (name == "xfraud-account") return xfraud_account();
  throw ConfigError("unknown schema '" + std::string(name) + "'");
}

std::uint32_t Schema::type_code(std::string_view type) const {
  auto it = std::find(node_types.begin(), node_types.end(), type);
  if (it == node_types.end()) throw ValidationError("node type '" + std::string(type) + "' not in schema " + name);
  return static_cast<std::uint32_t>(it - node_types.begin());
}

std::uint32_t Schema::relation_code(std::string_view relation) const {
  auto it = std::find(relations.begin(), relations.end(), relation);
  if (it == relations.end()) {
    throw ValidationError("relation '" + std::string(relation) + "' not in schema " + name);
  }
  return static_cast<std::uint32_t>(it - relations.begin());
}

void LabelSet::validate() const {
  for (const auto& [entity, rec] : targets) {
    if (rec.binary != 0 && rec.binary != 1) {
      throw ValidationError("target " + std::to_string(entity.id) + " has binary label " + std::to_string(rec.binary));
    }
    if (rec.risk_level) {
      if (*rec.risk_level < 0) throw ValidationError("negative risk level for target " + std::to_string(entity.id));
      if ((*rec.risk_level > 0) != (rec.binary == 1)) {
        throw ValidationError("target " + std::to_string(entity.id) + ": risk level " +
                              std::to_string(*rec.risk_level) + " inconsistent with binary label " +
                              std::to_string(rec.binary));
      }
    }
    if (!rec.features.empty() && rec.features.size() != feature_dim) {
      throw ValidationError("target " + std::to_string(entity.id) + " has " + std::to_string(rec.features.size()) +
                            " features, expected " + std::to_string(feature_dim));
    }
  }
}

bool LabelSet::has_risk_levels() const {
  return !targets.empty() &&
         std::all_of(targets.begin(), targets.end(), [](const auto& kv) { return kv.second.risk_level.has_value(); });
}

std::string describe(const EventRecord& e, const Schema& schema) {
  auto type_name = [&](std::uint32_t t) {
    return t < schema.node_types.size() ? schema.node_types[t] : "type#" + std::to_string(t);
  };
  std::ostringstream out;
  out << type_name(e.target.type) << ':' << e.target.id << " -> " << type_name(e.linker.type) << ':' << e.linker.id
      << " relation "
      << (e.relation < schema.relations.size() ? schema.relations[e.relation] : "#" + std::to_string(e.relation))
      << " week " << e.week << " day " << e.day;
  return out.str();
}

std::optional<std::size_t> UnrolledGraph::replica_index(const EntityRef& entity, int snapshot) const {
  auto it = replica_lookup_.find({entity, snapshot});
  if (it == replica_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> UnrolledGraph::hub_index(const EntityRef& entity) const {
  auto it = hub_lookup_.find(entity);
  if (it == hub_lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint32_t> UnrolledGraph::node_types() const {
  std::vector<std::uint32_t> types(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) types[i] = nodes[i].entity.type;
  return types;
}

Tensor UnrolledGraph::feature_tensor() const {
  if (nodes.empty() || feature_dim == 0) throw ContractError("graph has no node features");
  return Tensor::from_values({nodes.size(), feature_dim}, feature_values);
}

namespace {

void validate_event(const EventRecord& e, int snapshot_count, const Schema& schema) {
  auto fail = [&](const std::string& why) { throw ValidationError(why + ": " + describe(e, schema)); };
  if (e.week < 1 || e.week > snapshot_count) {
    fail("snapshot outside [1," + std::to_string(snapshot_count) + "]");
  }
  if (week_of_day(e.day) != e.week) fail("day does not fall inside its week");
  if (e.target.type != 0) fail("target is not of the schema's target type");
  if (e.relation >= schema.relation_count()) fail("unknown relation");
  if (e.linker.type != schema.linker_type(e.relation)) fail("relation does not match linker type");
}

auto event_key(const EventRecord& e) {
  return std::tie(e.target, e.linker, e.relation, e.week, e.day);
}

}  // namespace

UnrolledGraph build_unrolled_graph(std::vector<EventRecord> events, const LabelSet& labels, int snapshot_count,
                                   const Schema& schema) {
  if (snapshot_count < 1) throw ValidationError("snapshot count must be at least 1");
  labels.validate();
  for (const auto& e : events) {
    validate_event(e, snapshot_count, schema);
    if (!labels.targets.count(e.target)) throw ValidationError("unlabeled target: " + describe(e, schema));
  }
  std::sort(events.begin(), events.end(),
            [](const EventRecord& a, const EventRecord& b) { return event_key(a) < event_key(b); });

  std::set<std::pair<EntityRef, int>> appearances;
  for (const auto& e : events) {
    appearances.emplace(e.target, e.week);
    appearances.emplace(e.linker, e.week);
  }
  std::set<EntityRef> seen_targets;
  for (const auto& e : events) seen_targets.insert(e.target);
  for (const auto& [entity, rec] : labels.targets) {
    if (!seen_targets.count(entity)) {
      throw ValidationError("labeled target " + schema.node_types.at(entity.type) + ":" + std::to_string(entity.id) +
                            " has no events");
    }
  }

  UnrolledGraph g;
  g.schema = schema;
  g.snapshot_count = snapshot_count;
  g.events = std::move(events);
  g.feature_dim = labels.feature_dim;

  // Replicas in (type, id, snapshot) order; std::set already iterates that way.
  std::map<EntityRef, std::pair<int, int>> span;
  for (const auto& [entity, week] : appearances) {
    g.replica_lookup_[{entity, week}] = g.nodes.size();
    g.nodes.push_back({entity, week, false, week, week});
    auto [it, inserted] = span.try_emplace(entity, week, week);
    if (!inserted) {
      it->second.first = std::min(it->second.first, week);
      it->second.second = std::max(it->second.second, week);
    }
  }
  for (const auto& [entity, s] : span) {
    g.hub_lookup_[entity] = g.nodes.size();
    g.nodes.push_back({entity, 0, true, s.first, s.second});
  }
  for (std::size_t i = 0; i < g.replica_lookup_.size(); ++i) {
    const auto& node = g.nodes[i];
    g.temporal_edges.push_back({i, g.hub_lookup_.at(node.entity)});
  }

  g.structural_edges.reserve(2 * g.events.size());
  for (std::size_t k = 0; k < g.events.size(); ++k) {
    const auto& e = g.events[k];
    const auto t = g.replica_lookup_.at({e.target, e.week});
    const auto l = g.replica_lookup_.at({e.linker, e.week});
    g.structural_edges.push_back({t, l, e.relation, k});
    g.structural_edges.push_back({l, t, e.relation, k});
  }

  // Creation time of a target: its earliest event.
  std::map<EntityRef, std::pair<int, int>> creation;
  for (const auto& e : g.events) {
    auto [it, inserted] = creation.try_emplace(e.target, e.week, e.day);
    if (!inserted) it->second = std::min(it->second, std::make_pair(e.week, e.day));
  }
  const bool risk = labels.has_risk_levels();
  for (const auto& [entity, rec] : labels.targets) {
    const auto [week, day] = creation.at(entity);
    g.targets.push_back({entity, g.replica_lookup_.at({entity, week}), week, day, rec.binary,
                         risk ? *rec.risk_level : -1});
  }

  g.feature_values.assign(g.nodes.size() * g.feature_dim, 0.0);
  if (g.feature_dim > 0) {
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const auto& node = g.nodes[i];
      if (node.hub || node.entity.type != 0) continue;
      const auto& f = labels.targets.at(node.entity).features;
      if (f.empty()) continue;
      std::copy(f.begin(), f.end(), g.feature_values.begin() + static_cast<std::ptrdiff_t>(i * g.feature_dim));
    }
  }
  return g;
}

SparseMatrix normalized_adjacency(const UnrolledGraph& graph, Subgraph subgraph) {
  const auto n = graph.node_count();
  std::vector<SparseMatrix::Triplet> entries;
  std::vector<double> degree(n, 1.0);  // self-loop
  auto add_edge = [&](std::size_t from, std::size_t to) {
    entries.push_back({to, from, 1.0});
    degree[to] += 1.0;
  };
  if (subgraph != Subgraph::temporal) {
    for (const auto& e : graph.structural_edges) add_edge(e.source, e.target);
  }
  if (subgraph != Subgraph::structural) {
    for (const auto& e : graph.temporal_edges) {
      add_edge(e.replica, e.hub);
      add_edge(e.hub, e.replica);
    }
  }
  for (std::size_t i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
  for (auto& t : entries) t.value /= std::sqrt(degree[t.row] * degree[t.col]);
  return SparseMatrix::from_triplets(n, n, std::move(entries));
}

EdgeList typed_edges(const UnrolledGraph& graph, Subgraph subgraph, bool self_loops) {
  EdgeList edges;
  edges.node_count = graph.node_count();
  auto push = [&](std::size_t s, std::size_t t, std::uint32_t r) {
    edges.source.push_back(s);
    edges.target.push_back(t);
    edges.relation.push_back(r);
  };
  if (subgraph != Subgraph::temporal) {
    for (const auto& e : graph.structural_edges) push(e.source, e.target, e.relation);
  }
  if (subgraph != Subgraph::structural) {
    const auto r = graph.schema.temporal_relation();
    for (const auto& e : graph.temporal_edges) {
      push(e.replica, e.hub, r);
      push(e.hub, e.replica, r);
    }
  }
  if (self_loops) {
    for (std::size_t i = 0; i < graph.node_count(); ++i) push(i, i, graph.schema.self_relation());
  }
  return edges;
}

GraphStatistics graph_statistics(const UnrolledGraph& graph) {
  GraphStatistics s;
  for (const auto& t : graph.schema.node_types) {
    s.replica_nodes[t] = 0;
    s.hub_nodes[t] = 0;
  }
  for (const auto& r : graph.schema.relations) s.relation_edges[r] = 0;
  for (const auto& node : graph.nodes) {
    const auto& name = graph.schema.node_types.at(node.entity.type);
    ++(node.hub ? s.hub_nodes[name] : s.replica_nodes[name]);
  }
  for (const auto& e : graph.events) ++s.relation_edges[graph.schema.relations.at(e.relation)];
  s.temporal_edges = graph.temporal_edges.size();
  s.total_nodes = graph.node_count();
  s.total_edges = graph.events.size() + graph.temporal_edges.size();
  return s;
}

nlohmann::json to_json(const GraphStatistics& s) {
  return {{"replica_nodes", s.replica_nodes}, {"hub_nodes", s.hub_nodes},
          {"relation_edges", s.relation_edges}, {"temporal_edges", s.temporal_edges},
          {"total_nodes", s.total_nodes}, {"total_edges", s.total_edges}};
}

}  // namespace dyhgn
