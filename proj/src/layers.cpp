#include "dyhgn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dyhgn/errors.hpp"
#include "dyhgn/optim.hpp"

namespace dyhgn {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  std::vector<double> values(fan_in * fan_out);
  for (auto& v : values) v = uniform(engine);
  return Tensor::from_values({fan_in, fan_out}, std::move(values), true);
}

Linear Linear::init(std::size_t in, std::size_t out, std::uint64_t seed, bool with_bias) {
  Linear l;
  l.weight = glorot_uniform(in, out, seed);
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

LayerNormParams LayerNormParams::init(std::size_t dim) {
  return {Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)};
}

void LayerNormParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

Tensor gcn_conv(const Tensor& x, const std::shared_ptr<const SparseMatrix>& a_hat, const Tensor& weight) {
  if (x.rows() != a_hat->cols) {
    throw DimensionError("gcn_conv: adjacency over " + std::to_string(a_hat->cols) + " nodes, features " +
                         shape_string(x.shape()));
  }
  // (A X) W and A (X W) agree; the narrower side goes through the sparse product.
  if (weight.cols() < x.cols()) return spmm(a_hat, matmul(x, weight));
  return matmul(spmm(a_hat, x), weight);
}

GatParams GatParams::init(std::size_t in_dim, std::size_t heads, std::size_t head_dim, std::uint64_t seed) {
  GatParams p;
  p.in_dim = in_dim;
  p.heads = heads;
  p.head_dim = head_dim;
  p.weight = glorot_uniform(in_dim, heads * head_dim, derive_seed(seed, {1}));
  p.attn_source = glorot_uniform(heads, head_dim, derive_seed(seed, {2}));
  p.attn_target = glorot_uniform(heads, head_dim, derive_seed(seed, {3}));
  return p;
}

void GatParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".attn_source", attn_source);
  out.emplace_back(prefix + ".attn_target", attn_target);
}

namespace {

void require_incoming(const EdgeList& edges, const char* who) {
  std::vector<char> has(edges.node_count, 0);
  for (auto t : edges.target) {
    if (t >= edges.node_count) throw IndexError(std::string(who) + ": edge target out of range");
    has[t] = 1;
  }
  for (auto s : edges.source) {
    if (s >= edges.node_count) throw IndexError(std::string(who) + ": edge source out of range");
  }
  auto it = std::find(has.begin(), has.end(), 0);
  if (it != has.end()) {
    throw ContractError(std::string(who) + ": node " + std::to_string(it - has.begin()) +
                        " has no incoming edge (self-loops missing?)");
  }
}

Tensor head_slice(const Tensor& x, std::size_t head, std::size_t heads, std::size_t width) {
  if (heads == 1) return x;
  return slice_cols(x, head * width, (head + 1) * width);
}

// Shared additive-attention core; `edge_term` is an optional [E x heads] logit offset.
AttentionOutput additive_attention(const Tensor& x, const EdgeList& edges, const GatParams& p,
                                   const Tensor& edge_term) {
  if (x.rows() != edges.node_count) {
    throw DimensionError("attention: edge list over " + std::to_string(edges.node_count) + " nodes, features " +
                         shape_string(x.shape()));
  }
  require_incoming(edges, "gat_conv");
  const auto n = edges.node_count;
  auto projected = matmul(x, p.weight);
  std::vector<Tensor> outputs, weights;
  for (std::size_t h = 0; h < p.heads; ++h) {
    auto wh = head_slice(projected, h, p.heads, p.head_dim);
    auto a_src = slice_rows(p.attn_source, h, h + 1);
    auto a_dst = slice_rows(p.attn_target, h, h + 1);
    auto score_src = row_sum(scale_columns(wh, a_src));
    auto score_dst = row_sum(scale_columns(wh, a_dst));
    auto logits = add(gather_rows(score_src, edges.source), gather_rows(score_dst, edges.target));
    if (edge_term.defined()) logits = add(logits, head_slice(edge_term, h, p.heads, 1));
    logits = leaky_relu(logits, p.negative_slope);
    auto alpha = segment_softmax(logits, edges.target, n);
    auto messages = scale_rows(gather_rows(wh, edges.source), alpha);
    outputs.push_back(scatter_aggregate(messages, edges.target, n, AggregateMode::sum));
    weights.push_back(alpha);
  }
  if (p.heads == 1) return {outputs.front(), weights.front()};
  return {concat_cols(outputs), concat_cols(weights)};
}

}  // namespace

AttentionOutput gat_conv(const Tensor& x, const EdgeList& edges, const GatParams& params) {
  return additive_attention(x, edges, params, Tensor());
}

SimpleHgnParams SimpleHgnParams::init(std::size_t in_dim, std::size_t heads, std::size_t head_dim,
                                      std::size_t edge_types, std::size_t edge_dim, std::uint64_t seed) {
  SimpleHgnParams p;
  p.gat = GatParams::init(in_dim, heads, head_dim, derive_seed(seed, {1}));
  p.edge_types = edge_types;
  p.type_embedding = glorot_uniform(edge_types, edge_dim, derive_seed(seed, {2}));
  p.type_projection = glorot_uniform(edge_dim, heads, derive_seed(seed, {3}));
  if (in_dim != heads * head_dim) p.residual_weight = glorot_uniform(in_dim, heads * head_dim, derive_seed(seed, {4}));
  return p;
}

void SimpleHgnParams::collect(NamedParams& out, const std::string& prefix) const {
  gat.collect(out, prefix + ".gat");
  out.emplace_back(prefix + ".type_embedding", type_embedding);
  out.emplace_back(prefix + ".type_projection", type_projection);
  if (residual_weight.defined()) out.emplace_back(prefix + ".residual", residual_weight);
}

AttentionOutput simple_hgn_conv(const Tensor& x, const EdgeList& edges, const SimpleHgnParams& p) {
  if (edges.relation.size() != edges.size()) throw ConfigError("simple_hgn_conv: edges carry no relation types");
  for (auto r : edges.relation) {
    if (r >= p.edge_types) {
      throw ConfigError("simple_hgn_conv: unknown relation type " + std::to_string(r) + " (table has " +
                        std::to_string(p.edge_types) + ")");
    }
  }
  auto type_scores = matmul(p.type_embedding, p.type_projection);  // [types x heads]
  std::vector<std::size_t> relation_rows(edges.relation.begin(), edges.relation.end());
  auto edge_term = gather_rows(type_scores, relation_rows);
  auto result = additive_attention(x, edges, p.gat, edge_term);
  auto out = result.output;
  if (p.residual) {
    if (p.residual_weight.defined()) {
      out = add(out, matmul(x, p.residual_weight));
    } else {
      out = add(out, x);
    }
  }
  if (p.normalize) out = l2_normalize_rows(out);
  return {out, result.attention};
}

Tensor typed_linear(const Tensor& x, std::span<const std::uint32_t> types, const std::vector<Tensor>& weights) {
  const auto n = x.rows();
  if (types.size() != n) {
    throw DimensionError("typed_linear: " + std::to_string(types.size()) + " types for " + shape_string(x.shape()));
  }
  std::vector<std::vector<std::size_t>> groups(weights.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (types[i] >= weights.size()) {
      throw ConfigError("no parameter table for node type " + std::to_string(types[i]));
    }
    groups[types[i]].push_back(i);
  }
  Tensor result;
  for (std::size_t t = 0; t < weights.size(); ++t) {
    if (groups[t].empty()) continue;
    auto part = scatter_aggregate(matmul(gather_rows(x, groups[t]), weights[t]), groups[t], n, AggregateMode::sum);
    result = result.defined() ? add(result, part) : part;
  }
  return result;
}

HgtParams HgtParams::init(std::size_t in_dim, std::size_t heads, std::size_t head_dim, std::size_t node_types,
                          std::size_t edge_types, std::uint64_t seed) {
  HgtParams p;
  p.in_dim = in_dim;
  p.heads = heads;
  p.head_dim = head_dim;
  const auto out = heads * head_dim;
  for (std::size_t t = 0; t < node_types; ++t) {
    p.key.push_back(glorot_uniform(in_dim, out, derive_seed(seed, {1, t})));
    p.query.push_back(glorot_uniform(in_dim, out, derive_seed(seed, {2, t})));
    p.value.push_back(glorot_uniform(in_dim, out, derive_seed(seed, {3, t})));
    p.output.push_back(glorot_uniform(out, out, derive_seed(seed, {4, t})));
  }
  for (std::size_t r = 0; r < edge_types; ++r) {
    std::vector<Tensor> per_head;
    for (std::size_t h = 0; h < heads; ++h) {
      // Identity start: attention begins as plain dot-product attention.
      std::vector<double> eye(head_dim * head_dim, 0.0);
      for (std::size_t i = 0; i < head_dim; ++i) eye[i * head_dim + i] = 1.0;
      per_head.push_back(Tensor::from_values({head_dim, head_dim}, std::move(eye), true));
    }
    p.relation.push_back(std::move(per_head));
  }
  if (in_dim != out) p.residual_weight = glorot_uniform(in_dim, out, derive_seed(seed, {5}));
  return p;
}

void HgtParams::collect(NamedParams& out, const std::string& prefix) const {
  for (std::size_t t = 0; t < key.size(); ++t) {
    const auto tp = prefix + ".type" + std::to_string(t);
    out.emplace_back(tp + ".key", key[t]);
    out.emplace_back(tp + ".query", query[t]);
    out.emplace_back(tp + ".value", value[t]);
    out.emplace_back(tp + ".output", output[t]);
  }
  for (std::size_t r = 0; r < relation.size(); ++r) {
    for (std::size_t h = 0; h < relation[r].size(); ++h) {
      out.emplace_back(prefix + ".relation" + std::to_string(r) + ".head" + std::to_string(h), relation[r][h]);
    }
  }
  if (residual_weight.defined()) out.emplace_back(prefix + ".residual", residual_weight);
}

AttentionOutput hgt_conv(const Tensor& x, std::span<const std::uint32_t> node_types, const EdgeList& edges,
                         const HgtParams& p) {
  const auto n = edges.node_count;
  if (x.rows() != n) {
    throw DimensionError("hgt_conv: edge list over " + std::to_string(n) + " nodes, features " +
                         shape_string(x.shape()));
  }
  require_incoming(edges, "hgt_conv");
  if (edges.relation.size() != edges.size()) throw ConfigError("hgt_conv: edges carry no relation types");
  for (auto r : edges.relation) {
    if (r >= p.relation.size()) throw ConfigError("hgt_conv: no parameter table for relation " + std::to_string(r));
  }
  auto keys = typed_linear(x, node_types, p.key);
  auto queries = typed_linear(x, node_types, p.query);
  auto values = typed_linear(x, node_types, p.value);

  // Edges grouped by relation so each group shares one W_rel.
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return edges.relation[a] < edges.relation[b]; });
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
  std::vector<std::size_t> src(order.size()), dst(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    src[i] = edges.source[order[i]];
    dst[i] = edges.target[order[i]];
  }
  std::vector<std::pair<std::uint32_t, std::pair<std::size_t, std::size_t>>> groups;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const auto r = edges.relation[order[i]];
    while (j < order.size() && edges.relation[order[j]] == r) ++j;
    groups.push_back({r, {i, j}});
    i = j;
  }

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.head_dim));
  std::vector<Tensor> outputs, weights;
  for (std::size_t h = 0; h < p.heads; ++h) {
    auto kh = head_slice(keys, h, p.heads, p.head_dim);
    auto qh = head_slice(queries, h, p.heads, p.head_dim);
    auto vh = head_slice(values, h, p.heads, p.head_dim);
    std::vector<Tensor> logit_parts;
    for (const auto& [r, range] : groups) {
      std::span<const std::size_t> gsrc(src.data() + range.first, range.second - range.first);
      std::span<const std::size_t> gdst(dst.data() + range.first, range.second - range.first);
      auto k = matmul(gather_rows(kh, gsrc), p.relation[r][h]);
      auto q = gather_rows(qh, gdst);
      logit_parts.push_back(scale(row_sum(mul(q, k)), inv_sqrt));
    }
    auto logits = logit_parts.size() == 1 ? logit_parts.front() : concat_rows(logit_parts);
    auto alpha = segment_softmax(logits, dst, n);
    auto messages = scale_rows(gather_rows(vh, src), alpha);
    outputs.push_back(scatter_aggregate(messages, dst, n, AggregateMode::sum));
    weights.push_back(gather_rows(alpha, inverse));
  }
  auto heads_out = p.heads == 1 ? outputs.front() : concat_cols(outputs);
  auto out = typed_linear(heads_out, node_types, p.output);
  if (p.residual) out = add(out, p.residual_weight.defined() ? matmul(x, p.residual_weight) : x);
  return {out, p.heads == 1 ? weights.front() : concat_cols(weights)};
}

LstmParams LstmParams::init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_input = glorot_uniform(input_dim, 4 * hidden_dim, derive_seed(seed, {1}));
  p.w_hidden = glorot_uniform(hidden_dim, 4 * hidden_dim, derive_seed(seed, {2}));
  p.bias = Tensor::zeros({4 * hidden_dim}, true);
  return p;
}

void LstmParams::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w_input", w_input);
  out.emplace_back(prefix + ".w_hidden", w_hidden);
  out.emplace_back(prefix + ".bias", bias);
}

Tensor lstm_aggregate(const Tensor& inputs, const std::vector<std::vector<std::size_t>>& sequences,
                      const LstmParams& p) {
  if (inputs.cols() != p.input_dim) {
    throw DimensionError("lstm: inputs " + shape_string(inputs.shape()) + " for input_dim " +
                         std::to_string(p.input_dim));
  }
  const auto n = sequences.size();
  const auto hd = p.hidden_dim;
  // Packed order: longest sequences first, so the active rows at step t are a prefix.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (!sequences[i].empty()) order.push_back(i);
  }
  if (order.empty()) return Tensor::zeros({n, hd});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sequences[a].size() > sequences[b].size(); });
  const auto steps = sequences[order.front()].size();
  auto active_at = [&](std::size_t t) {
    std::size_t k = 0;
    while (k < order.size() && sequences[order[k]].size() > t) ++k;
    return k;
  };

  Tensor h, c;
  std::vector<Tensor> finished;  // pieces of the sorted final states, last positions first
  std::size_t active = active_at(0);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> rows(active);
    for (std::size_t k = 0; k < active; ++k) rows[k] = sequences[order[k]][t];
    auto gates = add_bias(matmul(gather_rows(inputs, rows), p.w_input), p.bias);
    if (h.defined()) {
      auto h_prev = h.rows() == active ? h : slice_rows(h, 0, active);
      gates = add(gates, matmul(h_prev, p.w_hidden));
    }
    auto in_gate = sigmoid(slice_cols(gates, 0, hd));
    auto forget_gate = sigmoid(slice_cols(gates, hd, 2 * hd));
    auto cell_input = tanh(slice_cols(gates, 2 * hd, 3 * hd));
    auto out_gate = sigmoid(slice_cols(gates, 3 * hd, 4 * hd));
    auto new_c = mul(in_gate, cell_input);
    if (c.defined()) {
      auto c_prev = c.rows() == active ? c : slice_rows(c, 0, active);
      new_c = add(mul(forget_gate, c_prev), new_c);
    }
    c = new_c;
    h = mul(out_gate, tanh(c));
    const auto next = t + 1 < steps ? active_at(t + 1) : 0;
    if (next < active) finished.push_back(next == 0 ? h : slice_rows(h, next, active));
    active = next;
  }
  std::reverse(finished.begin(), finished.end());
  auto sorted_final = finished.size() == 1 ? finished.front() : concat_rows(finished);
  return scatter_aggregate(sorted_final, order, n, AggregateMode::sum);
}

Tensor lstm_forward(const std::vector<Tensor>& sequence, const LstmParams& params) {
  if (sequence.empty()) throw ContractError("lstm_forward on an empty sequence; use the zero vector instead");
  for (const auto& x : sequence) {
    if (x.numel() != params.input_dim) {
      throw DimensionError("lstm_forward: element " + shape_string(x.shape()) + " for input_dim " +
                           std::to_string(params.input_dim));
    }
  }
  std::vector<Tensor> rows;
  rows.reserve(sequence.size());
  for (const auto& x : sequence) rows.push_back(reshape(x, {1, params.input_dim}));
  std::vector<std::size_t> steps(sequence.size());
  std::iota(steps.begin(), steps.end(), 0);
  auto stacked = rows.size() == 1 ? rows.front() : concat_rows(rows);
  return reshape(lstm_aggregate(stacked, {steps}, params), {params.hidden_dim});
}

MlpHeadParams MlpHeadParams::init(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, double dropout,
                                  std::uint64_t seed) {
  MlpHeadParams p;
  p.hidden = Linear::init(in_dim, hidden_dim, derive_seed(seed, {1}));
  p.norm = LayerNormParams::init(hidden_dim);
  p.output = Linear::init(hidden_dim, out_dim, derive_seed(seed, {2}));
  p.dropout = dropout;
  return p;
}

void MlpHeadParams::collect(NamedParams& out, const std::string& prefix) const {
  hidden.collect(out, prefix + ".hidden");
  norm.collect(out, prefix + ".norm");
  output.collect(out, prefix + ".output");
}

Tensor mlp_head(const Tensor& x, const MlpHeadParams& p, bool training, std::uint64_t rng_seed) {
  auto h = relu(p.norm(p.hidden(x)));
  h = dropout(h, p.dropout, training, rng_seed);
  return p.output(h);
}

}  // namespace dyhgn
