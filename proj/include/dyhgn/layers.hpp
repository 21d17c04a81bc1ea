#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dyhgn/graph.hpp"
#include "dyhgn/ops.hpp"
#include "dyhgn/tensor.hpp"

namespace dyhgn {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Glorot-uniform [fan_in x fan_out] trainable matrix.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], may be undefined

  static Linear init(std::size_t in, std::size_t out, std::uint64_t seed, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
  static LayerNormParams init(std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

// A_hat X W.
Tensor gcn_conv(const Tensor& x, const std::shared_ptr<const SparseMatrix>& a_hat, const Tensor& weight);

// Attention layers return the per-edge weights alongside the output so
// callers can inspect the distribution. attention is [E x heads], rows in
// the order of the input edge list.
struct AttentionOutput {
  Tensor output;
  Tensor attention;
};

struct GatParams {
  std::size_t in_dim = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  double negative_slope = 0.2;
  Tensor weight;          // [in x heads*head_dim]
  Tensor attn_source;     // [heads x head_dim]
  Tensor attn_target;     // [heads x head_dim]

  static GatParams init(std::size_t in_dim, std::size_t heads, std::size_t head_dim, std::uint64_t seed);
  std::size_t out_dim() const { return heads * head_dim; }
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Additive attention, e_ij = LeakyReLU(a_t . W x_i + a_s . W x_j) for edge
// j -> i, softmax over the incoming edges of each i, heads concatenated.
// Every node needs at least one incoming edge (add self-loops).
AttentionOutput gat_conv(const Tensor& x, const EdgeList& edges, const GatParams& params);

struct SimpleHgnParams {
  GatParams gat;
  std::size_t edge_types = 0;
  Tensor type_embedding;   // [edge_types x edge_dim]
  Tensor type_projection;  // [edge_dim x heads]
  Tensor residual_weight;  // [in x out] when in != out, else undefined
  bool residual = true;
  bool normalize = true;

  static SimpleHgnParams init(std::size_t in_dim, std::size_t heads, std::size_t head_dim, std::size_t edge_types,
                              std::size_t edge_dim, std::uint64_t seed);
  void collect(NamedParams& out, const std::string& prefix) const;
};

// GAT logits plus a learned per-edge-type term, residual connection, then
// row-wise L2 normalization.
AttentionOutput simple_hgn_conv(const Tensor& x, const EdgeList& edges, const SimpleHgnParams& params);

struct HgtParams {
  std::size_t in_dim = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  std::vector<Tensor> key;     // per node type, [in x out]
  std::vector<Tensor> query;   // per node type, [in x out]
  std::vector<Tensor> value;   // per node type, [in x out]
  std::vector<std::vector<Tensor>> relation;  // [edge type][head], [head_dim x head_dim]
  std::vector<Tensor> output;  // per node type, [out x out]
  Tensor residual_weight;      // [in x out] when in != out
  bool residual = true;

  static HgtParams init(std::size_t in_dim, std::size_t heads, std::size_t head_dim, std::size_t node_types,
                        std::size_t edge_types, std::uint64_t seed);
  std::size_t out_dim() const { return heads * head_dim; }
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Heterogeneous transformer convolution without relative temporal encoding:
// logit = q(target type)^T W_rel k(source type) / sqrt(head_dim), softmax per
// target, sum of source-type values, target-type output map, residual.
AttentionOutput hgt_conv(const Tensor& x, std::span<const std::uint32_t> node_types, const EdgeList& edges,
                         const HgtParams& params);

// Rows of x mapped by the weight of their type.
Tensor typed_linear(const Tensor& x, std::span<const std::uint32_t> types, const std::vector<Tensor>& weights);

struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor w_input;   // [input x 4*hidden], gate blocks i, f, g, o
  Tensor w_hidden;  // [hidden x 4*hidden]
  Tensor bias;      // [4*hidden]

  static LstmParams init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Final hidden state of one sequence; each element is [input_dim] or
// [1 x input_dim]. The sequence must be nonempty; callers substitute the
// zero vector for empty neighbourhoods.
Tensor lstm_forward(const std::vector<Tensor>& sequence, const LstmParams& params);

// Runs one LSTM per output row over rows of `inputs` listed in
// `sequences[row]` (in order), batching all rows step by step. Rows with an
// empty sequence come out as zeros. Returns [sequences.size() x hidden].
Tensor lstm_aggregate(const Tensor& inputs, const std::vector<std::vector<std::size_t>>& sequences,
                      const LstmParams& params);

struct MlpHeadParams {
  Linear hidden;
  LayerNormParams norm;
  Linear output;
  double dropout = 0.0;

  static MlpHeadParams init(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, double dropout,
                            std::uint64_t seed);
  void collect(NamedParams& out, const std::string& prefix) const;
};

// FC -> LayerNorm -> ReLU -> Dropout -> FC.
Tensor mlp_head(const Tensor& x, const MlpHeadParams& params, bool training, std::uint64_t rng_seed);

}  // namespace dyhgn
