#include "dyhgn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "dyhgn/errors.hpp"

namespace dyhgn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

std::vector<double>& grad_of(const std::shared_ptr<detail::Node>& n) { return n->ensure_grad(); }

}  // namespace

UnaryOp parse_unary_op(std::string_view code) {
  if (code == "identity") return UnaryOp::identity;
  if (code == "relu") return UnaryOp::relu;
  if (code == "sine" || code == "sin") return UnaryOp::sine;
  if (code == "sigmoid") return UnaryOp::sigmoid;
  if (code == "tanh") return UnaryOp::tanh;
  throw ConfigError("unknown activation '" + std::string(code) + "'");
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw IndexError("sparse entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                       ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    if (!m.col_index.empty() && i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) {
      m.values.back() += t.value;
      continue;
    }
    m.col_index.push_back(t.col);
    m.values.push_back(t.value);
    m.row_ptr[t.row + 1]++;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> dense(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) dense[r * cols + col_index[k]] += values[k];
  }
  return dense;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  auto an = a.node(), bn = b.node();
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [an, bn, m, k, n](detail::Node& self) {
    ConstMap g(self.grad.data(), m, n);
    if (an->requires_grad) {
      MutMap(grad_of(an).data(), m, k).noalias() += g * ConstMap(bn->value.data(), k, n).transpose();
    }
    if (bn->requires_grad) {
      MutMap(grad_of(bn).data(), k, n).noalias() += ConstMap(an->value.data(), m, k).transpose() * g;
    }
  });
}

Tensor spmm(std::shared_ptr<const SparseMatrix> ap, const Tensor& x) {
  require_matrix(x, "spmm");
  if (!ap) throw ContractError("spmm with a null matrix");
  const SparseMatrix& a = *ap;
  if (a.cols != x.rows()) {
    throw DimensionError("spmm: sparse " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                         " times " + shape_string(x.shape()));
  }
  const auto d = x.cols();
  std::vector<double> out(a.rows * d, 0.0);
  const auto xv = x.values();
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* dst = out.data() + r * d;
    for (auto p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
      const double w = a.values[p];
      const double* src = xv.data() + a.col_index[p] * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
    }
  }
  auto xn = x.node();
  return make_result({a.rows, d}, std::move(out), "spmm", {x}, [xn, ap, d](detail::Node& self) {
    auto& gx = grad_of(xn);
    for (std::size_t r = 0; r < ap->rows; ++r) {
      const double* g = self.grad.data() + r * d;
      for (auto p = ap->row_ptr[r]; p < ap->row_ptr[r + 1]; ++p) {
        const double w = ap->values[p];
        double* dst = gx.data() + ap->col_index[p] * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += w * g[j];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), "add", {a, b}, [an, bn](detail::Node& self) {
    for (auto* n : {an.get(), bn.get()}) {
      if (!n->requires_grad) continue;
      auto& g = n->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [an, bn](detail::Node& self) {
    if (an->requires_grad) {
      auto& g = grad_of(an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [an, bn](detail::Node& self) {
    if (an->requires_grad) {
      auto& g = grad_of(an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "scale", {x}, [xn, factor](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const auto n = x.rows(), d = x.cols();
  if (bias.numel() != d) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " for input " + shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto bv = bias.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bv[j];
  auto xn = x.node(), bn = bias.node();
  return make_result(x.shape(), std::move(out), "add_bias", {x, bias}, [xn, bn, n, d](detail::Node& self) {
    if (xn->requires_grad) {
      auto& g = grad_of(xn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(bn);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
    }
  });
}

Tensor scale_columns(const Tensor& x, const Tensor& gain) {
  const auto n = x.rows(), d = x.cols();
  if (gain.numel() != d) {
    throw DimensionError("scale_columns: gain " + shape_string(gain.shape()) + " for input " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.numel());
  auto xv = x.values(), gv = gain.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] * gv[j];
  auto xn = x.node(), gn = gain.node();
  return make_result(x.shape(), std::move(out), "scale_columns", {x, gain}, [xn, gn, n, d](detail::Node& self) {
    if (xn->requires_grad) {
      auto& g = grad_of(xn);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[r * d + j] * gn->value[j];
    }
    if (gn->requires_grad) {
      auto& g = grad_of(gn);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j] * xn->value[r * d + j];
    }
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  const auto n = x.rows(), d = x.cols();
  if (s.numel() != n) {
    throw DimensionError("scale_rows: factors " + shape_string(s.shape()) + " for input " + shape_string(x.shape()));
  }
  std::vector<double> out(x.numel());
  auto xv = x.values(), sv = s.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] * sv[r];
  auto xn = x.node(), sn = s.node();
  return make_result(x.shape(), std::move(out), "scale_rows", {x, s}, [xn, sn, n, d](detail::Node& self) {
    if (xn->requires_grad) {
      auto& g = grad_of(xn);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[r * d + j] * sn->value[r];
    }
    if (sn->requires_grad) {
      auto& g = grad_of(sn);
      for (std::size_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += self.grad[r * d + j] * xn->value[r * d + j];
        g[r] += acc;
      }
    }
  });
}

Tensor unary(const Tensor& x, UnaryOp op) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  switch (op) {
    case UnaryOp::identity:
      std::copy(xv.begin(), xv.end(), out.begin());
      break;
    case UnaryOp::relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] < 0.0 ? 0.0 : xv[i];  // NaN passes through
      break;
    case UnaryOp::sine:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(xv[i]);
      break;
    case UnaryOp::sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) {
        // Branch keeps exp() from overflowing for large |x|.
        out[i] = xv[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-xv[i])) : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
      }
      break;
    case UnaryOp::tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
      break;
  }
  static const char* names[] = {"identity", "relu", "sine", "sigmoid", "tanh"};
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), names[static_cast<int>(op)], {x}, [xn, op](detail::Node& self) {
    auto& g = grad_of(xn);
    const auto& in = xn->value;
    const auto& y = self.value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double local = 1.0;
      switch (op) {
        case UnaryOp::identity: local = 1.0; break;
        case UnaryOp::relu: local = in[i] > 0.0 ? 1.0 : 0.0; break;
        case UnaryOp::sine: local = std::cos(in[i]); break;
        case UnaryOp::sigmoid: local = y[i] * (1.0 - y[i]); break;
        case UnaryOp::tanh: local = 1.0 - y[i] * y[i]; break;
      }
      g[i] += local * self.grad[i];
    }
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "leaky_relu", {x}, [xn, slope](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (xn->value[i] > 0.0 ? 1.0 : slope) * self.grad[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  auto xn = x.node();
  return make_result(std::move(shape), std::move(out), "reshape", {x}, [xn](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  const auto n = x.rows(), d = x.cols();
  if (index.empty()) throw DimensionError("gather_rows with an empty index");
  std::vector<double> out(index.size() * d);
  auto xv = x.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) {
      throw IndexError("gather_rows: index " + std::to_string(index[i]) + " >= " + std::to_string(n));
    }
    std::copy_n(xv.data() + index[i] * d, d, out.data() + i * d);
  }
  Shape shape = x.shape();
  shape[0] = index.size();
  if (shape.size() == 1) shape = {index.size(), 1};
  auto xn = x.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result(std::move(shape), std::move(out), "gather_rows", {x},
                     [xn, idx = std::move(idx), d](detail::Node& self) {
                       auto& g = grad_of(xn);
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         double* dst = g.data() + idx[i] * d;
                         const double* src = self.grad.data() + i * d;
                         for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor scatter_aggregate(const Tensor& messages, std::span<const std::size_t> target_index,
                         std::size_t n, AggregateMode mode) {
  const auto e = messages.rows(), d = messages.cols();
  if (target_index.size() != e) {
    throw DimensionError("scatter_aggregate: " + std::to_string(target_index.size()) + " indices for " +
                         std::to_string(e) + " messages");
  }
  if (n == 0) throw DimensionError("scatter_aggregate: node count must be positive");
  std::vector<double> counts(n, 0.0);
  for (auto t : target_index) {
    if (t >= n) throw IndexError("scatter_aggregate: target " + std::to_string(t) + " >= " + std::to_string(n));
    counts[t] += 1.0;
  }
  std::vector<double> out(n * d, 0.0);
  auto mv = messages.values();
  if (mode == AggregateMode::sum) {
    for (std::size_t i = 0; i < e; ++i) {
      double* dst = out.data() + target_index[i] * d;
      const double* src = mv.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  } else {
    // Running mean, exact when all messages of a node coincide.
    std::vector<double> seen(n, 0.0);
    for (std::size_t i = 0; i < e; ++i) {
      const auto t = target_index[i];
      seen[t] += 1.0;
      double* dst = out.data() + t * d;
      const double* src = mv.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += (src[j] - dst[j]) / seen[t];
    }
  }
  auto mn = messages.node();
  std::vector<std::size_t> idx(target_index.begin(), target_index.end());
  return make_result({n, d}, std::move(out), mode == AggregateMode::sum ? "scatter_sum" : "scatter_mean", {messages},
                     [mn, idx = std::move(idx), counts = std::move(counts), mode, d](detail::Node& self) {
                       auto& g = grad_of(mn);
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         const double w = mode == AggregateMode::mean ? 1.0 / counts[idx[i]] : 1.0;
                         const double* src = self.grad.data() + idx[i] * d;
                         double* dst = g.data() + i * d;
                         for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const auto n = x.rows(), d = x.cols();
  if (begin >= end || end > d) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_string(x.shape()));
  }
  const auto w = end - begin;
  std::vector<double> out(n * w);
  auto xv = x.values();
  for (std::size_t r = 0; r < n; ++r) std::copy_n(xv.data() + r * d + begin, w, out.data() + r * w);
  auto xn = x.node();
  return make_result({n, w}, std::move(out), "slice_cols", {x}, [xn, n, d, begin, w](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < w; ++j) g[r * d + begin + j] += self.grad[r * w + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const auto n = x.rows(), d = x.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(x.values().begin() + begin * d, x.values().begin() + end * d);
  auto xn = x.node();
  return make_result({end - begin, d}, std::move(out), "slice_rows", {x}, [xn, begin, d](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * d + i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols with no inputs");
  const auto n = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != n) {
      throw DimensionError("concat_cols: row counts differ (" + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()) + ")");
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t r = 0; r < n; ++r) std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result({n, total}, std::move(out), "concat_cols", parts,
                     [nodes = std::move(nodes), widths, n, total](detail::Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                         if (nodes[k]->requires_grad) {
                           auto& g = nodes[k]->ensure_grad();
                           for (std::size_t r = 0; r < n; ++r)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               g[r * widths[k] + j] += self.grad[r * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows with no inputs");
  const auto d = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) {
      throw DimensionError("concat_rows: widths differ (" + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()) + ")");
    }
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result({total, d}, std::move(out), "concat_rows", parts, [nodes = std::move(nodes)](detail::Node& self) {
    std::size_t off = 0;
    for (const auto& node : nodes) {
      const auto len = node->value.size();
      if (node->requires_grad) {
        auto& g = node->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
      }
      off += len;
    }
  });
}

Tensor row_sum(const Tensor& x) {
  const auto n = x.rows(), d = x.cols();
  std::vector<double> out(n, 0.0);
  auto xv = x.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r] += xv[r * d + j];
  auto xn = x.node();
  return make_result({n, 1}, std::move(out), "row_sum", {x}, [xn, n, d](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[r];
  });
}

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  auto xn = x.node();
  return make_result({1}, {total}, "sum", {x}, [xn](detail::Node& self) {
    auto& g = grad_of(xn);
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor softmax_rows(const Tensor& x) {
  const auto n = x.rows(), c = x.cols();
  std::vector<double> out(n * c);
  auto xv = x.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[r * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= z;
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "softmax_rows", {x}, [xn, n, c](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t r = 0; r < n; ++r) {
      const double* y = self.value.data() + r * c;
      const double* gy = self.grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  const auto n = x.rows(), c = x.cols();
  std::vector<double> out(n * c);
  auto xv = x.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = row[j] - lse;
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "log_softmax_rows", {x}, [xn, n, c](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t r = 0; r < n; ++r) {
      const double* y = self.value.data() + r * c;
      const double* gy = self.grad.data() + r * c;
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += gy[j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += gy[j] - std::exp(y[j]) * total;
    }
  });
}

Tensor segment_softmax(const Tensor& logits, std::span<const std::size_t> target_index, std::size_t n) {
  const auto e = logits.numel();
  if (target_index.size() != e) {
    throw DimensionError("segment_softmax: " + std::to_string(target_index.size()) + " indices for " +
                         std::to_string(e) + " logits");
  }
  auto lv = logits.values();
  std::vector<double> mx(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < e; ++i) {
    if (target_index[i] >= n) {
      throw IndexError("segment_softmax: target " + std::to_string(target_index[i]) + " >= " + std::to_string(n));
    }
    mx[target_index[i]] = std::max(mx[target_index[i]], lv[i]);
  }
  std::vector<double> out(e), z(n, 0.0);
  for (std::size_t i = 0; i < e; ++i) z[target_index[i]] += (out[i] = std::exp(lv[i] - mx[target_index[i]]));
  for (std::size_t i = 0; i < e; ++i) out[i] /= z[target_index[i]];
  auto ln = logits.node();
  std::vector<std::size_t> idx(target_index.begin(), target_index.end());
  return make_result(logits.shape(), std::move(out), "segment_softmax", {logits},
                     [ln, idx = std::move(idx), n](detail::Node& self) {
                       std::vector<double> dot(n, 0.0);
                       for (std::size_t i = 0; i < idx.size(); ++i) dot[idx[i]] += self.grad[i] * self.value[i];
                       auto& g = grad_of(ln);
                       for (std::size_t i = 0; i < idx.size(); ++i) g[i] += self.value[i] * (self.grad[i] - dot[idx[i]]);
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto n = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " + shape_string(bias.shape()) +
                         " for input " + shape_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  std::vector<double> xhat(n * d), inv_std(n), out(n * d);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return make_result(x.shape(), std::move(out), "layer_norm", {x, gain, bias},
                     [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), n, d](detail::Node& self) {
                       if (gn->requires_grad) {
                         auto& g = gn->ensure_grad();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j] * xhat[r * d + j];
                       }
                       if (bn->requires_grad) {
                         auto& g = bn->ensure_grad();
                         for (std::size_t r = 0; r < n; ++r)
                           for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
                       }
                       if (xn->requires_grad) {
                         auto& g = xn->ensure_grad();
                         const double inv_d = 1.0 / static_cast<double>(d);
                         for (std::size_t r = 0; r < n; ++r) {
                           double sum_g = 0.0, sum_gx = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gh = self.grad[r * d + j] * gn->value[j];
                             sum_g += gh;
                             sum_gx += gh * xhat[r * d + j];
                           }
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gh = self.grad[r * d + j] * gn->value[j];
                             g[r * d + j] += inv_std[r] * (gh - inv_d * sum_g - xhat[r * d + j] * inv_d * sum_gx);
                           }
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, bool training, std::uint64_t rng_seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  std::mt19937_64 engine(rng_seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = uniform(engine) < p ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "dropout", {x}, [xn, mask = std::move(mask)](detail::Node& self) {
    auto& g = grad_of(xn);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * self.grad[i];
  });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const auto n = x.rows(), d = x.cols();
  std::vector<double> norm(n), out(n * d);
  auto xv = x.values();
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += xv[r * d + j] * xv[r * d + j];
    norm[r] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] / norm[r];
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "l2_normalize_rows", {x},
                     [xn, norm = std::move(norm), n, d, eps](detail::Node& self) {
                       auto& g = grad_of(xn);
                       for (std::size_t r = 0; r < n; ++r) {
                         const double* y = self.value.data() + r * d;
                         const double* gy = self.grad.data() + r * d;
                         if (norm[r] <= eps) {
                           for (std::size_t j = 0; j < d; ++j) g[r * d + j] += gy[j] / norm[r];
                           continue;
                         }
                         double dot = 0.0;
                         for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
                         for (std::size_t j = 0; j < d; ++j) g[r * d + j] += (gy[j] - y[j] * dot) / norm[r];
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "cross_entropy");
  const auto n = logits.rows(), c = logits.cols();
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(logits.shape()));
  }
  if (n == 0) throw DimensionError("cross_entropy over zero rows");
  std::vector<double> probs(n * c);
  double total = 0.0;
  auto lv = logits.values();
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw IndexError("cross_entropy: label " + std::to_string(labels[r]) + " outside " + std::to_string(c) +
                       " classes");
    }
    const double* row = lv.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (probs[r * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= z;
    total -= row[labels[r]] - mx - std::log(z);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  auto ln = logits.node();
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result({1}, {total * inv_n}, "cross_entropy", {logits},
                     [ln, probs = std::move(probs), lab = std::move(lab), n, c, inv_n](detail::Node& self) {
                       auto& g = grad_of(ln);
                       const double s = self.grad[0] * inv_n;
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t j = 0; j < c; ++j) {
                           g[r * c + j] += s * (probs[r * c + j] - (static_cast<int>(j) == lab[r] ? 1.0 : 0.0));
                         }
                       }
                     });
}

}  // namespace dyhgn
