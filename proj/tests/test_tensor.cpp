#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dyhgn/errors.hpp"
#include "dyhgn/ops.hpp"
#include "dyhgn/optim.hpp"
#include "dyhgn/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace dyhgn;
using dyhgn::testing::check_gradients;
using dyhgn::testing::random_tensor;
using dyhgn::testing::weighted_sum;

namespace {

std::vector<double> triple_loop(const Tensor& a, const Tensor& b) {
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < k; ++t) c[i * n + j] += a.at(i, t) * b.at(t, j);
  return c;
}

std::shared_ptr<const SparseMatrix> random_normalized_adjacency(std::size_t n, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(density);
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coin(rng)) a[i * n + j] = a[j * n + i] = 1.0;
    }
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
  std::vector<SparseMatrix::Triplet> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a[i * n + j] != 0.0) t.push_back({i, j, 1.0 / std::sqrt(deg[i] * deg[j])});
  return std::make_shared<SparseMatrix>(SparseMatrix::from_triplets(n, n, t));
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto eye = Tensor::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  auto b = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  auto c = matmul(eye, b);
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(c.at(i), b.at(i));
}

TEST(Matmul, OneByOne) {
  EXPECT_EQ(matmul(Tensor::from_rows({{2}}), Tensor::from_rows({{3}})).item(), 6.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({5, 4}, rng, false);
  auto b = random_tensor({4, 3}, rng, false);
  auto c = matmul(a, b);
  auto expected = triple_loop(a, b);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(c.at(i), expected[i], 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x5]"), std::string::npos);
  }
}

TEST(Unary, ReluSineSigmoid) {
  auto r = relu(Tensor::from_vector({-1, 0, 2}));
  EXPECT_EQ(r.at(0), 0.0);
  EXPECT_EQ(r.at(1), 0.0);
  EXPECT_EQ(r.at(2), 2.0);
  auto s = sine(Tensor::from_vector({0, std::numbers::pi / 2}));
  EXPECT_NEAR(s.at(0), 0.0, 1e-15);
  EXPECT_NEAR(s.at(1), 1.0, 1e-15);
  EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
}

TEST(Unary, UnknownCodeIsConfigError) {
  EXPECT_THROW(parse_unary_op("swish"), ConfigError);
  EXPECT_EQ(parse_unary_op("sine"), UnaryOp::sine);
}

TEST(Unary, SigmoidStaysFiniteForLargeInputs) {
  auto y = sigmoid(Tensor::from_vector({-1000, 1000}));
  EXPECT_EQ(y.at(0), 0.0);
  EXPECT_EQ(y.at(1), 1.0);
}

TEST(ScatterAggregate, SingleMessage) {
  std::vector<std::size_t> idx{0};
  auto out = scatter_aggregate(Tensor::from_rows({{1, 2}}), idx, 2, AggregateMode::sum);
  EXPECT_EQ(out.shape(), (Shape{2, 2}));
  EXPECT_EQ(out.at(0, 0), 1.0);
  EXPECT_EQ(out.at(0, 1), 2.0);
  EXPECT_EQ(out.at(1, 0), 0.0);
  EXPECT_EQ(out.at(1, 1), 0.0);
}

TEST(ScatterAggregate, Mean) {
  std::vector<std::size_t> idx{0, 0};
  auto out = scatter_aggregate(Tensor::from_rows({{2}, {4}}), idx, 1, AggregateMode::mean);
  EXPECT_EQ(out.item(), 3.0);
}

TEST(ScatterAggregate, MatchesPerNodeLoop) {
  std::mt19937_64 rng(3);
  auto msgs = random_tensor({20, 3}, rng, false);
  std::uniform_int_distribution<std::size_t> pick(0, 4);
  std::vector<std::size_t> idx(20);
  for (auto& i : idx) i = pick(rng);
  for (auto mode : {AggregateMode::sum, AggregateMode::mean}) {
    auto out = scatter_aggregate(msgs, idx, 5, mode);
    for (std::size_t node = 0; node < 5; ++node) {
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        int count = 0;
        for (std::size_t e = 0; e < 20; ++e) {
          if (idx[e] == node) {
            acc += msgs.at(e, j);
            ++count;
          }
        }
        if (mode == AggregateMode::mean && count > 0) acc /= count;
        EXPECT_NEAR(out.at(node, j), acc, 1e-12);
      }
    }
  }
}

TEST(ScatterAggregate, SumConservesMass) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto msgs = random_tensor({30, 4}, rng, false);
    std::uniform_int_distribution<std::size_t> pick(0, 6);
    std::vector<std::size_t> idx(30);
    for (auto& i : idx) i = pick(rng);
    EXPECT_NEAR(sum(scatter_aggregate(msgs, idx, 7, AggregateMode::sum)).item(), sum(msgs).item(), 1e-9);
  }
}

TEST(ScatterAggregate, OutOfRangeIndex) {
  std::vector<std::size_t> idx{3};
  EXPECT_THROW(scatter_aggregate(Tensor::from_rows({{1}}), idx, 2, AggregateMode::sum), IndexError);
}

TEST(Softmax, Examples) {
  auto a = softmax_rows(Tensor::from_rows({{0, 0}}));
  EXPECT_DOUBLE_EQ(a.at(0), 0.5);
  EXPECT_DOUBLE_EQ(a.at(1), 0.5);
  auto b = softmax_rows(Tensor::from_rows({{std::log(2.0), 0}}));
  EXPECT_NEAR(b.at(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.at(1), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor({6, 5}, rng, false, 3.0);
    auto y = softmax_rows(x);
    std::vector<double> shifted(x.values().begin(), x.values().end());
    for (std::size_t j = 0; j < 5; ++j) shifted[2 * 5 + j] += 100.0;
    auto z = softmax_rows(Tensor::from_values({6, 5}, shifted));
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        s += y.at(r, j);
        EXPECT_GE(y.at(r, j), 0.0);
        EXPECT_NEAR(y.at(r, j), z.at(r, j), 1e-12);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(LayerNorm, Examples) {
  auto one = Tensor::full({3}, 1.0), zero = Tensor::zeros({3});
  auto c = layer_norm(Tensor::from_rows({{1, 1, 1}}), one, zero);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(c.at(j), 0.0);
  auto d = layer_norm(Tensor::from_rows({{0, 2}}), Tensor::full({2}, 1.0), Tensor::zeros({2}));
  // Hand standardization: mean 1, biased variance 1, eps 1e-5.
  const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(d.at(0), -expected, 1e-12);
  EXPECT_NEAR(d.at(1), expected, 1e-12);
  EXPECT_NEAR(d.at(1), 1.0, 1e-5);
  auto bias = Tensor::from_vector({0.5, -2, 3});
  auto e = layer_norm(Tensor::from_rows({{4, -1, 7}, {0, 0, 2}}), Tensor::zeros({3}), bias);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(e.at(r, j), bias.at(j));
}

TEST(LayerNorm, RowsAreStandardized) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({8, 16}, rng, false, 10.0);
  auto y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
  for (std::size_t r = 0; r < 8; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 16; ++j) mu += y.at(r, j);
    mu /= 16;
    for (std::size_t j = 0; j < 16; ++j) var += (y.at(r, j) - mu) * (y.at(r, j) - mu);
    var /= 16;
    EXPECT_LT(std::abs(mu), 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Dropout, EvaluationAndZeroRateAreIdentity) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({10, 10}, rng, false);
  auto eval = dropout(x, 0.7, false, 1);
  auto zero = dropout(x, 0.0, true, 1);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(eval.at(i), x.at(i));
    EXPECT_EQ(zero.at(i), x.at(i));
  }
}

TEST(Dropout, SurvivingFraction) {
  auto x = Tensor::full({100, 100}, 1.0);
  auto y = dropout(x, 0.5, true, 42);
  std::size_t kept = 0;
  for (auto v : y.values()) {
    if (v != 0.0) {
      ++kept;
      EXPECT_DOUBLE_EQ(v, 2.0);
    }
  }
  const double frac = static_cast<double>(kept) / 10000.0;
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
}

TEST(Dropout, RejectsBadProbability) {
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, true, 0), ConfigError);
  EXPECT_THROW(dropout(Tensor::zeros({2}), -0.1, false, 0), ConfigError);
}

TEST(Backward, SumGivesOnes) {
  auto x = Tensor::zeros({3, 4}, true);
  backward(sum(x));
  for (auto g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareSum) {
  auto x = Tensor::from_vector({1, 2}, true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  auto x = Tensor::zeros({2, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, TapeIsTopological) {
  std::mt19937_64 rng(8);
  auto w = random_tensor({4, 3}, rng);
  auto x = random_tensor({5, 4}, rng, false);
  auto h = relu(matmul(x, w));
  auto loss = sum(mul(h, softmax_rows(h)));
  auto tape = Tape::record(loss);
  EXPECT_TRUE(tape.is_topological());
  EXPECT_GE(tape.size(), 5u);
  tape.backward(loss);
  EXPECT_TRUE(w.has_grad());
}

TEST(Backward, CompositeGcnLayerNormCrossEntropy) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    std::mt19937_64 rng(100 + point);
    auto a_hat = random_normalized_adjacency(8, 0.3, rng);
    auto x = random_tensor({8, 5}, rng);
    auto w = random_tensor({5, 4}, rng, true, 0.5);
    auto gain = random_tensor({4}, rng);
    auto bias = random_tensor({4}, rng);
    std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3};
    auto f = [&] { return cross_entropy(layer_norm(spmm(a_hat, matmul(x, w)), gain, bias), labels); };
    auto result = check_gradients(f, {x, w, gain, bias}, 40, point);
    EXPECT_LT(result.max_relative_error, 1e-4) << "point " << point;
  }
}

// Every differentiable op against central differences at 10 random points.
TEST(GradCheck, EveryOperation) {
  for (std::uint64_t point = 0; point < 10; ++point) {
    std::mt19937_64 rng(1000 + point);
    auto a = random_tensor({4, 3}, rng);
    auto b = random_tensor({3, 5}, rng);
    auto c = random_tensor({4, 3}, rng);
    auto v3 = random_tensor({3}, rng);
    auto s4 = random_tensor({4, 1}, rng);
    auto adj = random_normalized_adjacency(4, 0.5, rng);
    std::vector<std::size_t> gidx{2, 0, 3, 3, 1};
    std::vector<std::size_t> sidx{1, 1, 0, 2};
    std::vector<std::size_t> seg{0, 0, 1, 2, 2, 2};
    auto logits = random_tensor({6, 1}, rng);
    std::vector<int> labels{0, 2, 1, 1};
    // Inputs shifted away from the ReLU kink.
    std::vector<double> away(a.values().begin(), a.values().end());
    for (auto& x : away) x += x > 0 ? 0.1 : -0.1;
    auto kinkless = Tensor::from_values({4, 3}, away, true);

    struct Case {
      const char* name;
      std::function<Tensor()> f;
      std::vector<Tensor> params;
    };
    std::vector<Case> cases = {
        {"matmul", [&] { return weighted_sum(matmul(a, b)); }, {a, b}},
        {"spmm", [&] { return weighted_sum(spmm(adj, a)); }, {a}},
        {"add", [&] { return weighted_sum(add(a, c)); }, {a, c}},
        {"sub", [&] { return weighted_sum(sub(a, c)); }, {a, c}},
        {"mul", [&] { return weighted_sum(mul(a, c)); }, {a, c}},
        {"scale", [&] { return weighted_sum(scale(a, -1.7)); }, {a}},
        {"add_bias", [&] { return weighted_sum(add_bias(a, v3)); }, {a, v3}},
        {"scale_columns", [&] { return weighted_sum(scale_columns(a, v3)); }, {a, v3}},
        {"scale_rows", [&] { return weighted_sum(scale_rows(a, s4)); }, {a, s4}},
        {"relu", [&] { return weighted_sum(relu(kinkless)); }, {kinkless}},
        {"sine", [&] { return weighted_sum(sine(a)); }, {a}},
        {"sigmoid", [&] { return weighted_sum(sigmoid(a)); }, {a}},
        {"tanh", [&] { return weighted_sum(tanh(a)); }, {a}},
        {"leaky_relu", [&] { return weighted_sum(leaky_relu(kinkless, 0.2)); }, {kinkless}},
        {"reshape", [&] { return weighted_sum(reshape(a, {3, 4})); }, {a}},
        {"gather_rows", [&] { return weighted_sum(gather_rows(a, gidx)); }, {a}},
        {"scatter_sum", [&] { return weighted_sum(scatter_aggregate(a, sidx, 3, AggregateMode::sum)); }, {a}},
        {"scatter_mean", [&] { return weighted_sum(scatter_aggregate(a, sidx, 3, AggregateMode::mean)); }, {a}},
        {"slice_cols", [&] { return weighted_sum(slice_cols(a, 1, 3)); }, {a}},
        {"slice_rows", [&] { return weighted_sum(slice_rows(a, 1, 3)); }, {a}},
        {"concat_cols", [&] { return weighted_sum(concat_cols({a, c, s4})); }, {a, c, s4}},
        {"concat_rows", [&] { return weighted_sum(concat_rows({a, c})); }, {a, c}},
        {"row_sum", [&] { return weighted_sum(row_sum(a)); }, {a}},
        {"mean", [&] { return mean(mul(a, a)); }, {a}},
        {"softmax_rows", [&] { return weighted_sum(softmax_rows(a)); }, {a}},
        {"log_softmax_rows", [&] { return weighted_sum(log_softmax_rows(a)); }, {a}},
        {"segment_softmax", [&] { return weighted_sum(segment_softmax(logits, seg, 3)); }, {logits}},
        {"layer_norm", [&] { return weighted_sum(layer_norm(a, v3, v3)); }, {a, v3}},
        {"dropout", [&] { return weighted_sum(dropout(a, 0.3, true, point)); }, {a}},
        {"l2_normalize_rows", [&] { return weighted_sum(l2_normalize_rows(a)); }, {a}},
        {"cross_entropy", [&] { return cross_entropy(a, labels); }, {a}},
    };
    for (auto& c : cases) {
      auto r = check_gradients(c.f, c.params, 20, point);
      EXPECT_LT(r.max_relative_error, 1e-4) << c.name << " at point " << point;
    }
  }
}

TEST(AdamW, ZeroGradientWithoutDecayLeavesParameters) {
  auto p = Tensor::from_vector({1.5, -2.0}, true);
  AdamW opt({p}, {.lr = 0.001, .weight_decay = 0.0});
  backward(sum(scale(p, 0.0)));
  opt.step();
  EXPECT_EQ(p.at(0), 1.5);
  EXPECT_EQ(p.at(1), -2.0);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  auto p = Tensor::from_vector({0.0}, true);
  AdamW opt({p}, {.lr = 0.001, .weight_decay = 0.0});
  backward(sum(p));  // grad = 1
  opt.step();
  // m_hat = 1, v_hat = 1 after bias correction: step = lr / (1 + eps).
  EXPECT_NEAR(p.at(0), -0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(AdamW, PureDecay) {
  auto p = Tensor::from_vector({2.0}, true);
  AdamW opt({p}, {.lr = 0.001, .weight_decay = 0.1});
  backward(sum(scale(p, 0.0)));
  opt.step();
  EXPECT_DOUBLE_EQ(p.at(0), 2.0 * (1.0 - 0.001 * 0.1));
}

TEST(AdamW, ParameterWithoutGradientIsSkipped) {
  auto p = Tensor::from_vector({1.0}, true);
  auto q = Tensor::from_vector({1.0}, true);
  AdamW opt({p, q}, {});
  backward(sum(p));
  opt.step();
  EXPECT_NE(p.at(0), 1.0);
  EXPECT_EQ(q.at(0), 1.0);
}

TEST(SparseMatrix, DuplicatesAreSummed) {
  auto m = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {0, 1, 2.0}, {1, 0, 1.0}});
  auto d = m.to_dense();
  EXPECT_EQ(m.nnz(), 2u);
  EXPECT_EQ(d[1], 3.0);
  EXPECT_EQ(d[2], 1.0);
}
