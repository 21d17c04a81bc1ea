#pragma once

// Differentiable operations on Tensor. Matrices are row-major [rows x cols];
// a rank-1 tensor of length d is treated as a row vector where broadcasting
// applies.

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "dyhgn/tensor.hpp"

namespace dyhgn {

enum class UnaryOp { identity, relu, sine, sigmoid, tanh };

// Accepts "identity", "relu", "sine" (or "sin"), "sigmoid", "tanh".
UnaryOp parse_unary_op(std::string_view code);

enum class AggregateMode { sum, mean };

// Compressed sparse rows, constant (never trainable).
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col_index;
  std::vector<double> values;

  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };
  // Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);
  std::size_t nnz() const { return values.size(); }
  std::vector<double> to_dense() const;
};

Tensor matmul(const Tensor& a, const Tensor& b);
// The matrix is shared with the recorded gradient rule.
Tensor spmm(std::shared_ptr<const SparseMatrix> a, const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// X[n x d] + b[d] on every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// X[n x d] * g[d] on every row.
Tensor scale_columns(const Tensor& x, const Tensor& gain);
// X[n x d] * s[n] (or s[n x 1]) per row; differentiable in both.
Tensor scale_rows(const Tensor& x, const Tensor& s);

Tensor unary(const Tensor& x, UnaryOp op);
inline Tensor relu(const Tensor& x) { return unary(x, UnaryOp::relu); }
inline Tensor sine(const Tensor& x) { return unary(x, UnaryOp::sine); }
inline Tensor sigmoid(const Tensor& x) { return unary(x, UnaryOp::sigmoid); }
inline Tensor tanh(const Tensor& x) { return unary(x, UnaryOp::tanh); }
Tensor leaky_relu(const Tensor& x, double slope);

// Same values, new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
Tensor scatter_aggregate(const Tensor& messages, std::span<const std::size_t> target_index,
                         std::size_t n, AggregateMode mode);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// [n x d] -> [n x 1]
Tensor row_sum(const Tensor& x);
// Any shape -> [1]
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
// Softmax of logits[E] (or [E x 1]) within groups sharing a target index.
Tensor segment_softmax(const Tensor& logits, std::span<const std::size_t> target_index, std::size_t n);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// Inverted dropout; evaluation mode returns `x` itself.
Tensor dropout(const Tensor& x, double p, bool training, std::uint64_t rng_seed);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// Mean negative log-likelihood of `labels` under softmax(logits) row-wise.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace dyhgn
