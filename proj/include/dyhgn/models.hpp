#pragma once

// The six benchmarked architectures and their losses.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dyhgn/diachronic.hpp"
#include "dyhgn/graph.hpp"
#include "dyhgn/layers.hpp"

namespace dyhgn {

enum class Variant { gcn, gat, simple_hgn, dyhgn, dyhgn_de, dyhgn_de_hgt };

Variant parse_variant(std::string_view s);
std::string to_string(Variant v);
bool is_diachronic(Variant v);
const std::vector<Variant>& all_variants();

// binary: 2-class cross-entropy. binary_and_risk: mean of the binary-head
// and risk-head cross-entropies.
enum class LossKind { binary, binary_and_risk };
LossKind loss_kind_for(std::string_view schema);

struct ModelConfig {
  Variant variant = Variant::dyhgn;
  std::string dataset = "massreg";  // schema name
  std::size_t n_layers = 4;
  std::size_t n_hid = 256;
  std::size_t n_heads = 4;
  double dropout = 0.1;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t max_epochs = 2048;
  std::size_t patience = 64;
  // Baselines see temporal edges unless this is cleared.
  bool baseline_temporal_edges = true;
  std::size_t edge_type_dim = 16;
  DiachronicConfig diachronic;
  std::uint64_t seed = 0;

  // Per-dataset defaults for "massreg", "xfraud-txn" and "xfraud-account".
  static ModelConfig defaults(std::string_view dataset, Variant variant);
  // Small, fast settings for laptop-scale runs on the synthetic presets.
  static ModelConfig desk(std::string_view dataset, Variant variant);
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base);

// Everything a forward pass needs from the graph, built once.
struct GraphContext {
  const UnrolledGraph* graph = nullptr;
  std::shared_ptr<const SparseMatrix> structural;
  std::shared_ptr<const SparseMatrix> temporal;
  std::shared_ptr<const SparseMatrix> both;
  EdgeList typed_both;        // union edges with self-loops
  EdgeList typed_structural;  // structural edges with self-loops
  std::vector<std::uint32_t> node_types;
  Tensor features;            // [N x F]

  static GraphContext build(const UnrolledGraph& graph);
};

class Model {
 public:
  virtual ~Model() = default;

  // Logits for every node, [N x output_dim].
  virtual Tensor forward(const GraphContext& ctx, bool training, std::uint64_t seed) const = 0;

  const ModelConfig& config() const { return config_; }
  std::size_t output_dim() const { return output_dim_; }
  const NamedParams& parameters() const { return params_; }
  std::size_t parameter_count() const;

  // Copies values into the parameters of the same name; names absent from
  // `values` are left alone. Throws DimensionError on a size mismatch.
  void assign(const std::map<std::string, std::vector<double>>& values);
  std::map<std::string, std::vector<double>> snapshot() const;

 protected:
  Model(ModelConfig config, std::size_t output_dim) : config_(std::move(config)), output_dim_(output_dim) {}
  ModelConfig config_;
  std::size_t output_dim_;
  NamedParams params_;
};

// output_dim is 2 for the binary loss and 2 + risk classes otherwise.
std::unique_ptr<Model> assemble(const ModelConfig& config, const GraphContext& ctx, std::size_t output_dim);

Tensor classification_loss(const Tensor& logits, std::span<const std::size_t> rows, std::span<const int> binary,
                           std::span<const int> risk, LossKind kind);

// Log-odds of the positive class from the binary head; ranks like P(positive)
// without saturating.
std::vector<double> fraud_scores(const Tensor& logits, std::span<const std::size_t> rows);

}  // namespace dyhgn
