#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>

#include "dyhgn/errors.hpp"
#include "dyhgn/graph.hpp"
#include "support/random_log.hpp"

using namespace dyhgn;
using dyhgn::testing::brute_force_counts;
using dyhgn::testing::random_log;

namespace {

const Schema kSchema = Schema::massreg();
constexpr std::uint32_t kAccount = 0, kIp = 2, kPhone = 3;
constexpr std::uint32_t kAccountIp = 1, kAccountPhone = 2;

EventRecord event(std::uint64_t account, std::uint32_t relation, std::uint64_t linker, int week, int weekday = 0) {
  return {{kAccount, account}, {relation + 1, linker}, relation, week, 7 * week + weekday};
}

LabelSet labels_for(std::initializer_list<std::uint64_t> accounts, std::size_t feature_dim = 0) {
  LabelSet labels;
  labels.feature_dim = feature_dim;
  for (auto id : accounts) {
    TargetRecord rec;
    rec.features.assign(feature_dim, static_cast<double>(id) + 1.0);
    labels.targets[{kAccount, id}] = rec;
  }
  return labels;
}

// Two accounts sharing one IP in snapshot 1.
UnrolledGraph shared_ip_graph() {
  return build_unrolled_graph({event(1, kAccountIp, 7, 1), event(2, kAccountIp, 7, 1)}, labels_for({1, 2}), 1,
                              kSchema);
}

std::vector<double> dense_normalized(const UnrolledGraph& g, Subgraph sub) {
  const auto n = g.node_count();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  if (sub != Subgraph::temporal)
    for (const auto& e : g.structural_edges) a[e.target * n + e.source] += 1.0;
  if (sub != Subgraph::structural) {
    for (const auto& e : g.temporal_edges) {
      a[e.hub * n + e.replica] += 1.0;
      a[e.replica * n + e.hub] += 1.0;
    }
  }
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i] += a[i * n + j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= std::sqrt(d[i] * d[j]);
  return a;
}

std::size_t hop_distance(const UnrolledGraph& g, std::size_t from, std::size_t to, bool structural_only) {
  std::vector<std::vector<std::size_t>> adj(g.node_count());
  for (const auto& e : g.structural_edges) adj[e.source].push_back(e.target);
  if (!structural_only) {
    for (const auto& e : g.temporal_edges) {
      adj[e.replica].push_back(e.hub);
      adj[e.hub].push_back(e.replica);
    }
  }
  std::vector<std::size_t> dist(g.node_count(), SIZE_MAX);
  std::queue<std::size_t> q;
  dist[from] = 0;
  q.push(from);
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (dist[v] == SIZE_MAX) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist[to];
}

}  // namespace

TEST(BuildGraph, PhoneAcrossThreeSnapshots) {
  std::vector<EventRecord> events{event(1, kAccountPhone, 5, 1), event(2, kAccountPhone, 5, 2),
                                  event(3, kAccountPhone, 5, 3)};
  auto g = build_unrolled_graph(events, labels_for({1, 2, 3}), 3, kSchema);
  const EntityRef phone{kPhone, 5};
  for (int t = 1; t <= 3; ++t) ASSERT_TRUE(g.replica_index(phone, t).has_value());
  const auto hub = g.hub_index(phone);
  ASSERT_TRUE(hub.has_value());
  std::size_t degree = 0;
  for (const auto& e : g.temporal_edges) {
    if (e.hub == *hub) {
      ++degree;
      EXPECT_EQ(g.nodes[e.replica].entity, phone);
    }
  }
  EXPECT_EQ(degree, 3u);
  EXPECT_EQ(g.nodes[*hub].first_snapshot, 1);
  EXPECT_EQ(g.nodes[*hub].last_snapshot, 3);
}

TEST(BuildGraph, EmptyLog) {
  auto g = build_unrolled_graph({}, LabelSet{}, 1, kSchema);
  EXPECT_EQ(g.node_count(), 0u);
  EXPECT_TRUE(g.structural_edges.empty());
  EXPECT_TRUE(g.temporal_edges.empty());
  auto s = graph_statistics(g);
  EXPECT_EQ(s.total_nodes, 0u);
  EXPECT_EQ(s.total_edges, 0u);
  EXPECT_EQ(s.temporal_edges, 0u);
  for (const auto& [k, v] : s.replica_nodes) EXPECT_EQ(v, 0u) << k;
}

TEST(BuildGraph, TwoAccountsSharingAnIp) {
  auto g = shared_ip_graph();
  EXPECT_EQ(g.replica_count(), 3u);
  EXPECT_EQ(g.structural_edges.size(), 4u);
  EXPECT_EQ(g.hub_count(), 3u);
  EXPECT_EQ(g.temporal_edges.size(), 3u);
  const auto a1 = *g.replica_index({kAccount, 1}, 1), a2 = *g.replica_index({kAccount, 2}, 1);
  EXPECT_EQ(hop_distance(g, a1, a2, true), 2u);
  EXPECT_EQ(graph_statistics(g).temporal_edges, 3u);
  EXPECT_EQ(graph_statistics(g).total_edges, 5u);
}

TEST(BuildGraph, NodeOrderIsTypeIdSnapshotThenHubs) {
  auto g = build_unrolled_graph({event(2, kAccountIp, 1, 2), event(1, kAccountIp, 1, 1), event(2, kAccountIp, 1, 1)},
                                labels_for({1, 2}), 2, kSchema);
  // account:1@1, account:2@1, account:2@2, ip:1@1, ip:1@2, then hubs account:1, account:2, ip:1
  ASSERT_EQ(g.node_count(), 8u);
  EXPECT_EQ(*g.replica_index({kAccount, 1}, 1), 0u);
  EXPECT_EQ(*g.replica_index({kAccount, 2}, 1), 1u);
  EXPECT_EQ(*g.replica_index({kAccount, 2}, 2), 2u);
  EXPECT_EQ(*g.replica_index({kIp, 1}, 1), 3u);
  EXPECT_EQ(*g.replica_index({kIp, 1}, 2), 4u);
  EXPECT_EQ(*g.hub_index({kAccount, 1}), 5u);
  EXPECT_EQ(*g.hub_index({kAccount, 2}), 6u);
  EXPECT_EQ(*g.hub_index({kIp, 1}), 7u);
}

TEST(BuildGraph, FeaturesOnTargetReplicasOnly) {
  auto g = build_unrolled_graph({event(1, kAccountIp, 7, 1), event(2, kAccountIp, 7, 1)}, labels_for({1, 2}, 2), 1,
                                kSchema);
  auto x = g.feature_tensor();
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto& node = g.nodes[i];
    const double expected = (!node.hub && node.entity.type == kAccount) ? node.entity.id + 1.0 : 0.0;
    EXPECT_EQ(x.at(i, 0), expected);
    EXPECT_EQ(x.at(i, 1), expected);
  }
}

TEST(BuildGraph, TargetsReadFromCreationReplica) {
  auto g = build_unrolled_graph({event(1, kAccountIp, 7, 3, 4), event(1, kAccountPhone, 2, 2, 5)}, labels_for({1}), 3,
                                kSchema);
  ASSERT_EQ(g.targets.size(), 1u);
  EXPECT_EQ(g.targets[0].week, 2);
  EXPECT_EQ(g.targets[0].day, 19);
  EXPECT_EQ(g.targets[0].node, *g.replica_index({kAccount, 1}, 2));
  EXPECT_EQ(g.targets[0].risk_level, -1);
}

TEST(BuildGraph, ValidationErrorsNameTheRecord) {
  auto expect_error = [](std::vector<EventRecord> events, const LabelSet& labels, int t, const std::string& needle) {
    try {
      build_unrolled_graph(std::move(events), labels, t, kSchema);
      FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error({event(1, kAccountIp, 7, 4)}, labels_for({1}), 3, "account:1 -> ip:7");
  expect_error({event(9, kAccountIp, 7, 1)}, labels_for({1}), 3, "unlabeled target: account:9");
  auto mismatched = event(1, kAccountIp, 7, 1);
  mismatched.linker.type = kPhone;
  expect_error({mismatched}, labels_for({1}), 3, "relation does not match linker type");
  auto outside = event(1, kAccountIp, 7, 1);
  outside.day = 3;
  expect_error({outside}, labels_for({1}), 3, "day does not fall inside its week");
  expect_error({event(1, kAccountIp, 7, 1)}, labels_for({1, 2}), 3, "has no events");
}

TEST(BuildGraph, RiskLevelMustAgreeWithBinaryLabel) {
  auto labels = labels_for({1});
  labels.targets.begin()->second.binary = 1;
  labels.targets.begin()->second.risk_level = 0;
  EXPECT_THROW(build_unrolled_graph({event(1, kAccountIp, 7, 1)}, labels, 1, kSchema), ValidationError);
}

TEST(NormalizedAdjacency, IsolatedNodeKeepsSelfLoop) {
  auto g = build_unrolled_graph({event(1, kAccountIp, 7, 1)}, labels_for({1}), 1, kSchema);
  auto a = normalized_adjacency(g, Subgraph::structural).to_dense();
  const auto n = g.node_count();
  const auto hub = *g.hub_index({kAccount, 1});
  EXPECT_EQ(a[hub * n + hub], 1.0);
}

TEST(NormalizedAdjacency, SingleEdgeGivesHalves) {
  auto g = build_unrolled_graph({event(1, kAccountIp, 7, 1)}, labels_for({1}), 1, kSchema);
  auto a = normalized_adjacency(g, Subgraph::structural).to_dense();
  const auto n = g.node_count();
  const std::size_t r0 = 0, r1 = 1;
  for (auto i : {r0, r1})
    for (auto j : {r0, r1}) EXPECT_NEAR(a[i * n + j], 0.5, 1e-15);
}

TEST(NormalizedAdjacency, MatchesDenseOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto log = random_log(seed, 12, 3);
    auto g = build_unrolled_graph(log.events, log.labels, log.snapshots, kSchema);
    for (auto sub : {Subgraph::structural, Subgraph::temporal, Subgraph::both}) {
      auto sparse = normalized_adjacency(g, sub).to_dense();
      auto dense = dense_normalized(g, sub);
      ASSERT_EQ(sparse.size(), dense.size());
      for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(sparse[i], dense[i], 1e-12);
      for (std::size_t i = 0; i < g.node_count(); ++i)
        for (std::size_t j = 0; j < g.node_count(); ++j)
          EXPECT_EQ(sparse[i * g.node_count() + j], sparse[j * g.node_count() + i]);
    }
  }
}

TEST(TypedEdges, TemporalEdgesBothWaysPlusSelfLoops) {
  auto g = shared_ip_graph();
  auto e = typed_edges(g, Subgraph::both, true);
  EXPECT_EQ(e.size(), 4u + 6u + g.node_count());
  std::size_t temporal = 0, self = 0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    if (e.relation[k] == kSchema.temporal_relation()) ++temporal;
    if (e.relation[k] == kSchema.self_relation()) {
      ++self;
      EXPECT_EQ(e.source[k], e.target[k]);
    }
  }
  EXPECT_EQ(temporal, 6u);
  EXPECT_EQ(self, g.node_count());
}

TEST(GraphProperties, RandomLogsMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto log = random_log(seed);
    auto g = build_unrolled_graph(log.events, log.labels, log.snapshots, kSchema);
    auto brute = brute_force_counts(log.events);
    EXPECT_EQ(g.replica_count(), brute.replicas);
    EXPECT_EQ(g.hub_count(), brute.hubs);
    EXPECT_EQ(g.structural_edges.size(), brute.structural);
    EXPECT_EQ(g.temporal_edges.size(), brute.temporal);

    std::map<std::size_t, std::size_t> hub_degree;
    for (const auto& e : g.temporal_edges) {
      EXPECT_FALSE(g.nodes[e.replica].hub);
      EXPECT_TRUE(g.nodes[e.hub].hub);
      EXPECT_EQ(g.nodes[e.replica].entity, g.nodes[e.hub].entity);
      ++hub_degree[e.hub];
    }
    std::map<EntityRef, std::set<int>> weeks;
    for (const auto& e : log.events) {
      weeks[e.target].insert(e.week);
      weeks[e.linker].insert(e.week);
    }
    for (const auto& [entity, w] : weeks) EXPECT_EQ(hub_degree[*g.hub_index(entity)], w.size());
    for (const auto& e : g.structural_edges) {
      EXPECT_FALSE(g.nodes[e.source].hub);
      EXPECT_FALSE(g.nodes[e.target].hub);
      EXPECT_EQ(g.nodes[e.source].snapshot, g.nodes[e.target].snapshot);
    }
    // Dense bijection onto [0, N).
    std::set<std::size_t> ids;
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      const auto& node = g.nodes[i];
      ids.insert(node.hub ? *g.hub_index(node.entity) : *g.replica_index(node.entity, node.snapshot));
    }
    EXPECT_EQ(ids.size(), g.node_count());
    if (!ids.empty()) EXPECT_EQ(*ids.rbegin(), g.node_count() - 1);

    auto s = graph_statistics(g);
    EXPECT_EQ(s.total_edges, log.events.size() + brute.temporal);
  }
}

TEST(GraphProperties, SubgraphsAreEdgeDisjoint) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto log = random_log(seed, 50, 5);
    auto g = build_unrolled_graph(log.events, log.labels, log.snapshots, kSchema);
    std::set<std::pair<std::size_t, std::size_t>> structural, temporal;
    for (const auto& e : g.structural_edges) structural.insert({e.source, e.target});
    for (const auto& e : g.temporal_edges) temporal.insert({e.replica, e.hub});
    for (const auto& p : temporal) {
      EXPECT_FALSE(structural.count(p));
      EXPECT_FALSE(structural.count({p.second, p.first}));
    }
    auto both = typed_edges(g, Subgraph::both, false);
    EXPECT_EQ(both.size(), 2 * (g.structural_edges.size() / 2 + g.temporal_edges.size()));
  }
}

TEST(GraphProperties, CrossSnapshotPathsPassThroughHubs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto log = random_log(seed, 60, 4);
    auto g = build_unrolled_graph(log.events, log.labels, log.snapshots, kSchema);
    for (std::size_t i = 0; i < g.replica_count(); ++i) {
      for (std::size_t j = 0; j < g.replica_count(); ++j) {
        if (g.nodes[i].snapshot != g.nodes[j].snapshot) {
          EXPECT_EQ(hop_distance(g, i, j, true), SIZE_MAX);
        }
      }
    }
  }
}

TEST(GraphProperties, ShuffledLogGivesIdenticalGraph) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto log = random_log(seed);
    auto shuffled = log.events;
    std::mt19937_64 rng(seed + 99);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto a = build_unrolled_graph(log.events, log.labels, log.snapshots, kSchema);
    auto b = build_unrolled_graph(shuffled, log.labels, log.snapshots, kSchema);
    EXPECT_EQ(to_json(graph_statistics(a)), to_json(graph_statistics(b)));
    EXPECT_EQ(normalized_adjacency(a, Subgraph::both).to_dense(), normalized_adjacency(b, Subgraph::both).to_dense());
    EXPECT_EQ(a.feature_values, b.feature_values);
  }
}

TEST(Schema, LookupsAndPresets) {
  EXPECT_EQ(kSchema.type_code("ip"), kIp);
  EXPECT_EQ(kSchema.relation_code("account-phone"), kAccountPhone);
  EXPECT_THROW(kSchema.type_code("fax"), ValidationError);
  EXPECT_THROW(Schema::by_name("unknown"), ConfigError);
  EXPECT_EQ(Schema::by_name("xfraud-txn").node_types.front(), "txn");
  EXPECT_EQ(Schema::by_name("xfraud-account").node_types.front(), "buyer");
  EXPECT_EQ(week_of_day(63), 9);
  EXPECT_EQ(week_of_day(62), 8);
}
