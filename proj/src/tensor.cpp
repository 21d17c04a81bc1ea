#include "dyhgn/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "dyhgn/errors.hpp"

namespace dyhgn {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  if (rows.size() == 0) throw DimensionError("from_rows needs at least one row");
  const std::size_t width = rows.begin()->size();
  std::vector<double> values;
  values.reserve(rows.size() * width);
  for (const auto& row : rows) {
    if (row.size() != width) throw DimensionError("ragged rows in from_rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from_values({rows.size(), width}, std::move(values), requires_grad);
}

Tensor Tensor::from_vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return from_values(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::rows() const { return shape().empty() ? 1 : shape()[0]; }

std::size_t Tensor::cols() const {
  const auto& s = shape();
  std::size_t c = 1;
  for (std::size_t i = 1; i < s.size(); ++i) c *= s[i];
  return c;
}

std::span<const double> Tensor::values() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  return Tensor(make_leaf(shape(), node_->value, false));
}

const std::string& Tensor::op_name() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->op;
}

namespace {
thread_local int no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

Tensor make_result(Shape shape, std::vector<double> value, std::string op,
                   const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node& self)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  const bool needs = grad_enabled() && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

Tape Tape::record(const Tensor& loss) {
  Tape tape;
  if (!loss.defined()) throw ContractError("cannot record a tape from an undefined tensor");
  // Iterative post-order DFS.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::vector<std::shared_ptr<detail::Node>> keep;
  auto root = loss.node();
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  std::vector<detail::Node*> post;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  // Shared ownership for the root; everything else is kept alive through it.
  tape.order_.reserve(post.size());
  for (auto* n : post) {
    if (n == root.get()) {
      tape.order_.push_back(root);
    } else {
      tape.order_.push_back(std::shared_ptr<detail::Node>(root, n));
    }
  }
  for (const auto& n : tape.order_) {
    if (n->inputs.empty()) continue;
    Entry e;
    e.op = n->op;
    e.output = n.get();
    for (const auto& in : n->inputs) e.inputs.push_back(in.get());
    tape.entries_.push_back(std::move(e));
  }
  return tape;
}

bool Tape::is_topological() const {
  std::unordered_set<const void*> seen;
  for (const auto& n : order_) {
    if (n->inputs.empty()) seen.insert(n.get());
  }
  for (const auto& e : entries_) {
    for (const auto* in : e.inputs) {
      auto* node = static_cast<const detail::Node*>(in);
      if (node->requires_grad && !seen.count(in)) return false;
    }
    seen.insert(e.output);
  }
  return true;
}

void Tape::backward(const Tensor& loss) const {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractError("loss does not depend on any trainable tensor");
  if (order_.empty() || order_.back().get() != loss.node().get()) {
    throw ContractError("tape was recorded from a different tensor");
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& node = **it;
    if (node.backward && !node.grad.empty()) node.backward(node);
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  Tape::record(loss).backward(loss);
}

}  // namespace dyhgn
