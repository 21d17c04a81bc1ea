#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dyhgn/errors.hpp"
#include "dyhgn/layers.hpp"
#include "support/gradcheck.hpp"

using namespace dyhgn;
using dyhgn::testing::check_gradients;
using dyhgn::testing::random_tensor;
using dyhgn::testing::weighted_sum;

namespace {

EdgeList random_edges(std::size_t n, std::size_t extra, std::uint32_t relations, std::mt19937_64& rng,
                      std::uint32_t self_relation = 0) {
  EdgeList e;
  e.node_count = n;
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  std::uniform_int_distribution<std::uint32_t> rel(0, relations - 1);
  for (std::size_t i = 0; i < n; ++i) {
    e.source.push_back(i);
    e.target.push_back(i);
    e.relation.push_back(self_relation);
  }
  for (std::size_t k = 0; k < extra; ++k) {
    e.source.push_back(node(rng));
    e.target.push_back(node(rng));
    e.relation.push_back(rel(rng));
  }
  return e;
}

std::vector<double> dense_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * k + t] * b[t * n + j];
  return c;
}

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void expect_attention_sums_to_one(const AttentionOutput& out, const EdgeList& edges, std::size_t heads) {
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> total(edges.node_count, 0.0);
    for (std::size_t k = 0; k < edges.size(); ++k) total[edges.target[k]] += out.attention.at(k, h);
    for (auto t : total) EXPECT_NEAR(t, 1.0, 1e-9);
  }
}

Tensor identity(std::size_t d, bool grad = true) {
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  return Tensor::from_values({d, d}, v, grad);
}

Tensor sigmoid_of(double x) { return Tensor::scalar(1.0 / (1.0 + std::exp(-x))); }

}  // namespace

TEST(GcnConv, IsolatedNodeWithIdentityWeight) {
  auto a = std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(1, 1, {{0, 0, 1.0}}));
  auto x = Tensor::from_rows({{3, -4}});
  auto y = gcn_conv(x, a, identity(2));
  EXPECT_EQ(y.at(0), 3.0);
  EXPECT_EQ(y.at(1), -4.0);
}

TEST(GcnConv, TwoNodeCompleteGraph) {
  auto a = std::make_shared<SparseMatrix>(
      SparseMatrix::from_triplets(2, 2, {{0, 0, 0.5}, {0, 1, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}}));
  auto y = gcn_conv(Tensor::from_rows({{1}, {0}}), a, Tensor::from_rows({{1}}));
  EXPECT_DOUBLE_EQ(y.at(0), 0.5);
  EXPECT_DOUBLE_EQ(y.at(1), 0.5);
}

TEST(GcnConv, MatchesDenseProduct) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 15 + seed * 3;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<SparseMatrix::Triplet> t;
    std::vector<double> dense(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (u(rng) < 0.2) {
          const double v = u(rng);
          t.push_back({i, j, v});
          dense[i * n + j] = v;
        }
    auto a = std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(n, n, t));
    // Both multiplication orders get exercised.
    for (auto [din, dout] : {std::pair<std::size_t, std::size_t>{4, 7}, {7, 4}}) {
      auto x = random_tensor({n, din}, rng, false);
      auto w = random_tensor({din, dout}, rng, false);
      auto expected = dense_matmul(dense_matmul(dense, to_vec(x), n, n, din), to_vec(w), n, din, dout);
      auto y = gcn_conv(x, a, w);
      for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(y.at(i), expected[i], 1e-10);
    }
  }
}

TEST(GcnConv, ShapeMismatch) {
  auto a = std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}}));
  EXPECT_THROW(gcn_conv(Tensor::zeros({2, 3}), a, Tensor::zeros({2, 2})), DimensionError);
  EXPECT_THROW(gcn_conv(Tensor::zeros({3, 2}), a, Tensor::zeros({2, 2})), DimensionError);
}

TEST(GatConv, SingleNodeWithSelfLoop) {
  auto p = GatParams::init(3, 2, 2, 11);
  EdgeList e{1, {0}, {0}, {0}};
  auto x = Tensor::from_rows({{1, -2, 0.5}});
  auto out = gat_conv(x, e, p);
  auto wx = matmul(x, p.weight);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.output.at(j), wx.at(j), 1e-12);
  EXPECT_EQ(out.attention.at(0, 0), 1.0);
  EXPECT_EQ(out.attention.at(0, 1), 1.0);
}

TEST(GatConv, IdenticalNeighboursShareAttention) {
  auto p = GatParams::init(2, 1, 3, 5);
  EdgeList e{3, {1, 2, 0}, {0, 0, 0}, {0, 0, 0}};
  e.source.insert(e.source.end(), {1, 2});
  e.target.insert(e.target.end(), {1, 2});
  e.relation.insert(e.relation.end(), {0, 0});
  auto x = Tensor::from_rows({{0.3, 0.7}, {1, 2}, {1, 2}});
  auto out = gat_conv(x, e, p);
  EXPECT_NEAR(out.attention.at(0, 0), out.attention.at(1, 0), 1e-15);
}

TEST(GatConv, AttentionSumsToOne) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto edges = random_edges(12, 40, 1, rng);
    auto p = GatParams::init(5, 3, 2, seed);
    auto out = gat_conv(random_tensor({12, 5}, rng, false), edges, p);
    EXPECT_EQ(out.output.shape(), (Shape{12, 6}));
    expect_attention_sums_to_one(out, edges, 3);
  }
}

TEST(GatConv, MissingIncomingEdgeIsContractError) {
  EdgeList e{2, {0}, {0}, {0}};
  EXPECT_THROW(gat_conv(Tensor::zeros({2, 2}), e, GatParams::init(2, 1, 2, 0)), ContractError);
}

TEST(SimpleHgn, RowsHaveUnitNorm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto edges = random_edges(10, 30, 4, rng, 5);
    auto p = SimpleHgnParams::init(6, 2, 4, 6, 3, seed);
    auto out = simple_hgn_conv(random_tensor({10, 6}, rng, false), edges, p);
    for (std::size_t i = 0; i < 10; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < 8; ++j) norm += out.output.at(i, j) * out.output.at(i, j);
      EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
    }
    expect_attention_sums_to_one(out, edges, 2);
  }
}

TEST(SimpleHgn, EdgeTypeChangesAttention) {
  auto p = SimpleHgnParams::init(2, 1, 2, 2, 2, 3);
  p.type_embedding = Tensor::from_rows({{1, 0}, {-1, 0}}, true);
  p.type_projection = Tensor::from_rows({{2}, {0}}, true);
  // Node 0 hears nodes 1 and 2 (same features) through different edge types.
  EdgeList e{3, {1, 2, 1, 2}, {0, 0, 1, 2}, {0, 1, 0, 0}};
  auto x = Tensor::from_rows({{0, 1}, {1, 1}, {1, 1}});
  auto out = simple_hgn_conv(x, e, p);
  EXPECT_GT(std::abs(out.attention.at(0, 0) - out.attention.at(1, 0)), 0.1);
}

TEST(SimpleHgn, DegradesToGatWithoutTypesAndResidual) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto edges = random_edges(9, 25, 3, rng, 4);
    auto p = SimpleHgnParams::init(4, 2, 3, 5, 2, seed);
    p.type_embedding = Tensor::zeros({5, 2}, true);
    p.residual = false;
    p.normalize = false;
    auto x = random_tensor({9, 4}, rng, false);
    auto hgn = simple_hgn_conv(x, edges, p);
    auto gat = gat_conv(x, edges, p.gat);
    for (std::size_t i = 0; i < gat.output.numel(); ++i) EXPECT_NEAR(hgn.output.at(i), gat.output.at(i), 1e-9);
  }
}

TEST(SimpleHgn, UnknownRelationIsConfigError) {
  EdgeList e{1, {0}, {0}, {7}};
  EXPECT_THROW(simple_hgn_conv(Tensor::zeros({1, 2}), e, SimpleHgnParams::init(2, 1, 2, 3, 2, 0)), ConfigError);
}

TEST(Hgt, SingleNodeReturnsValueProjection) {
  auto p = HgtParams::init(3, 1, 3, 1, 1, 4);
  p.output = {identity(3)};
  p.residual = false;
  EdgeList e{1, {0}, {0}, {0}};
  std::vector<std::uint32_t> types{0};
  auto x = Tensor::from_rows({{0.2, -1, 3}});
  auto out = hgt_conv(x, types, e, p);
  auto v = matmul(x, p.value[0]);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(out.output.at(j), v.at(j), 1e-12);
}

// Tied type tables with W_rel = I against a hand-written dot-product attention.
TEST(Hgt, TiedTablesEqualDotProductAttention) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 8, din = 4, heads = 2, hd = 3, out_dim = heads * hd;
    auto edges = random_edges(n, 20, 3, rng, 3);
    auto p = HgtParams::init(din, heads, hd, 2, 4, seed);
    for (std::size_t t = 1; t < 2; ++t) {
      p.key[t] = p.key[0];
      p.query[t] = p.query[0];
      p.value[t] = p.value[0];
      p.output[t] = p.output[0];
    }
    std::vector<std::uint32_t> types(n);
    for (auto& t : types) t = static_cast<std::uint32_t>(rng() % 2);
    auto x = random_tensor({n, din}, rng, false);
    auto out = hgt_conv(x, types, edges, p);

    auto xv = to_vec(x);
    auto q = dense_matmul(xv, to_vec(p.query[0]), n, din, out_dim);
    auto k = dense_matmul(xv, to_vec(p.key[0]), n, din, out_dim);
    auto v = dense_matmul(xv, to_vec(p.value[0]), n, din, out_dim);
    std::vector<double> agg(n * out_dim, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> logit(edges.size());
      std::vector<double> mx(n, -1e300), z(n, 0.0);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c)
          s += q[edges.target[e] * out_dim + h * hd + c] * k[edges.source[e] * out_dim + h * hd + c];
        logit[e] = s / std::sqrt(static_cast<double>(hd));
        mx[edges.target[e]] = std::max(mx[edges.target[e]], logit[e]);
      }
      for (std::size_t e = 0; e < edges.size(); ++e) z[edges.target[e]] += std::exp(logit[e] - mx[edges.target[e]]);
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const double alpha = std::exp(logit[e] - mx[edges.target[e]]) / z[edges.target[e]];
        EXPECT_NEAR(out.attention.at(e, h), alpha, 1e-9);
        for (std::size_t c = 0; c < hd; ++c)
          agg[edges.target[e] * out_dim + h * hd + c] += alpha * v[edges.source[e] * out_dim + h * hd + c];
      }
    }
    auto projected = dense_matmul(agg, to_vec(p.output[0]), n, out_dim, out_dim);
    auto residual = dense_matmul(xv, to_vec(p.residual_weight), n, din, out_dim);
    for (std::size_t i = 0; i < n * out_dim; ++i) EXPECT_NEAR(out.output.at(i), projected[i] + residual[i], 1e-9);
    expect_attention_sums_to_one(out, edges, heads);
  }
}

TEST(Hgt, NodeTypeSelectsValueProjection) {
  auto p = HgtParams::init(2, 1, 2, 2, 1, 8);
  p.output = {identity(2), identity(2)};
  p.residual = false;
  // Nodes 0 and 1 share features but differ in type; each hears only itself.
  EdgeList e{2, {0, 1}, {0, 1}, {0, 0}};
  std::vector<std::uint32_t> types{0, 1};
  auto out = hgt_conv(Tensor::from_rows({{1, 2}, {1, 2}}), types, e, p);
  EXPECT_GT(std::abs(out.output.at(0, 0) - out.output.at(1, 0)) + std::abs(out.output.at(0, 1) - out.output.at(1, 1)),
            1e-6);
}

TEST(Hgt, MissingTypeTableIsConfigError) {
  auto p = HgtParams::init(2, 1, 2, 1, 1, 0);
  EdgeList e{1, {0}, {0}, {0}};
  std::vector<std::uint32_t> types{3};
  EXPECT_THROW(hgt_conv(Tensor::zeros({1, 2}), types, e, p), ConfigError);
  std::vector<std::uint32_t> ok{0};
  EdgeList bad_rel{1, {0}, {0}, {2}};
  EXPECT_THROW(hgt_conv(Tensor::zeros({1, 2}), ok, bad_rel, p), ConfigError);
}

TEST(Lstm, ZeroWeightsGiveZeroState) {
  auto p = LstmParams::init(3, 4, 1);
  p.w_input = Tensor::zeros({3, 16}, true);
  p.w_hidden = Tensor::zeros({4, 16}, true);
  std::mt19937_64 rng(2);
  std::vector<Tensor> seq{random_tensor({3}, rng, false), random_tensor({3}, rng, false)};
  auto h = lstm_forward(seq, p);
  for (auto v : h.values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SingleStepMatchesGateFormula) {
  auto p = LstmParams::init(1, 1, 0);
  // Gate blocks i, f, g, o.
  p.w_input = Tensor::from_rows({{0.5, -0.3, 0.8, 1.2}}, true);
  p.bias = Tensor::from_vector({0.1, 0.2, -0.4, 0.05}, true);
  const double x = 0.7;
  const double i = 1.0 / (1.0 + std::exp(-(0.5 * x + 0.1)));
  const double g = std::tanh(0.8 * x - 0.4);
  const double o = 1.0 / (1.0 + std::exp(-(1.2 * x + 0.05)));
  const double expected = o * std::tanh(i * g);
  auto h = lstm_forward({Tensor::from_vector({x})}, p);
  EXPECT_NEAR(h.item(), expected, 1e-15);
}

TEST(Lstm, OrderSensitive) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto p = LstmParams::init(3, 4, seed);
    std::vector<Tensor> seq;
    for (int t = 0; t < 5; ++t) seq.push_back(random_tensor({3}, rng, false));
    auto forward = lstm_forward(seq, p);
    std::reverse(seq.begin(), seq.end());
    auto backward_order = lstm_forward(seq, p);
    double diff = 0.0;
    for (std::size_t j = 0; j < 4; ++j) diff += std::abs(forward.at(j) - backward_order.at(j));
    EXPECT_GT(diff, 1e-6);
  }
}

TEST(Lstm, PackedBatchMatchesSequentialRuns) {
  std::mt19937_64 rng(9);
  auto p = LstmParams::init(3, 5, 9);
  auto inputs = random_tensor({12, 3}, rng, false);
  std::vector<std::vector<std::size_t>> seqs{{0, 1, 2}, {}, {3}, {4, 5, 6, 7, 8}, {9, 10}, {11, 0}};
  auto batched = lstm_aggregate(inputs, seqs, p);
  ASSERT_EQ(batched.shape(), (Shape{6, 5}));
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    if (seqs[r].empty()) {
      for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(batched.at(r, j), 0.0);
      continue;
    }
    std::vector<Tensor> seq;
    for (auto i : seqs[r]) seq.push_back(slice_rows(inputs, i, i + 1));
    auto single = lstm_forward(seq, p);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(batched.at(r, j), single.at(j), 1e-14);
  }
}

TEST(Lstm, EmptySequenceIsContractError) {
  EXPECT_THROW(lstm_forward({}, LstmParams::init(2, 2, 0)), ContractError);
}

TEST(MlpHead, ZeroOutputWeightsGiveUniformSoftmax) {
  auto p = MlpHeadParams::init(4, 6, 3, 0.1, 2);
  p.output.weight = Tensor::zeros({6, 3}, true);
  p.output.bias = Tensor::zeros({3}, true);
  std::mt19937_64 rng(3);
  auto probs = softmax_rows(mlp_head(random_tensor({5, 4}, rng, false), p, false, 0));
  for (auto v : probs.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(MlpHead, EvaluationIsDeterministic) {
  auto p = MlpHeadParams::init(4, 6, 2, 0.5, 2);
  std::mt19937_64 rng(4);
  auto x = random_tensor({5, 4}, rng, false);
  EXPECT_EQ(to_vec(mlp_head(x, p, false, 1)), to_vec(mlp_head(x, p, false, 2)));
  EXPECT_NE(to_vec(mlp_head(x, p, true, 1)), to_vec(mlp_head(x, p, false, 1)));
}

TEST(LayerGradients, EveryLayerAtTenPoints) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    std::mt19937_64 rng(500 + point);
    const std::size_t n = 7;
    auto x = random_tensor({n, 4}, rng);
    auto edges = random_edges(n, 14, 3, rng, 3);
    std::vector<std::uint32_t> types(n);
    for (auto& t : types) t = static_cast<std::uint32_t>(rng() % 2);
    std::vector<SparseMatrix::Triplet> trip;
    for (std::size_t k = 0; k < edges.size(); ++k) trip.push_back({edges.target[k], edges.source[k], 0.3});
    auto a_hat = std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(n, n, trip));

    auto w = glorot_uniform(4, 3, point);
    auto gat = GatParams::init(4, 2, 2, point);
    auto hgn = SimpleHgnParams::init(4, 2, 3, 4, 2, point);
    auto hgt = HgtParams::init(4, 2, 2, 2, 4, point);
    // Perturb W_rel away from identity so its gradient is exercised generally.
    for (auto& per_head : hgt.relation)
      for (auto& m : per_head) m = add(m, random_tensor({2, 2}, rng, false, 0.3)).detach();
    for (auto& per_head : hgt.relation)
      for (auto& m : per_head) m = Tensor::from_values(m.shape(), to_vec(m), true);
    auto lstm = LstmParams::init(4, 3, point);
    lstm.bias = random_tensor({12}, rng, true, 0.5);
    auto head = MlpHeadParams::init(4, 5, 2, 0.2, point);
    std::vector<std::vector<std::size_t>> seqs{{0, 1, 2}, {3}, {}, {4, 5, 6, 0}};

    auto params_of = [](auto& p) {
      NamedParams named;
      p.collect(named, "p");
      std::vector<Tensor> out;
      for (auto& [name, t] : named) out.push_back(t);
      return out;
    };
    auto with_x = [&](std::vector<Tensor> ps) {
      ps.push_back(x);
      return ps;
    };
    struct Case {
      const char* name;
      std::function<Tensor()> f;
      std::vector<Tensor> params;
    };
    std::vector<Case> cases = {
        {"gcn_conv", [&] { return weighted_sum(gcn_conv(x, a_hat, w)); }, {x, w}},
        {"gat_conv", [&] { return weighted_sum(gat_conv(x, edges, gat).output); }, with_x(params_of(gat))},
        {"simple_hgn_conv", [&] { return weighted_sum(simple_hgn_conv(x, edges, hgn).output); },
         with_x(params_of(hgn))},
        {"hgt_conv", [&] { return weighted_sum(hgt_conv(x, types, edges, hgt).output); }, with_x(params_of(hgt))},
        {"lstm_aggregate", [&] { return weighted_sum(lstm_aggregate(x, seqs, lstm)); }, with_x(params_of(lstm))},
        {"mlp_head", [&] { return weighted_sum(mlp_head(x, head, true, point)); }, with_x(params_of(head))},
    };
    for (auto& c : cases) {
      auto r = check_gradients(c.f, c.params, 30, point);
      EXPECT_LT(r.max_relative_error, 1e-4) << c.name << " at point " << point;
    }
  }
}
