#pragma once

// Dense 64-bit tensors with define-by-run gradient recording.
//
// Every operation that has at least one input with requires_grad() set keeps
// references to its inputs and a local gradient rule. Tape::record() orders
// those operations topologically from a scalar loss; backward() replays them
// in reverse, accumulating into each tensor's grad buffer.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dyhgn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node& self)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);
  static Tensor from_vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Leading dimension; 1 for a scalar.
  std::size_t rows() const;
  // Product of the trailing dimensions; 1 for a vector.
  std::size_t cols() const;

  std::span<const double> values() const;
  // Writable access for leaves: optimizers, initializers and finite-difference probes.
  std::span<double> mutable_values();
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Same values, cut from the recorded graph.
  Tensor detach() const;
  const std::string& op_name() const;
  const void* id() const { return node_.get(); }

  // Internal plumbing for operation implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// While alive, results are not recorded for gradients on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Builds the result of an operation. When no input needs a gradient, nothing
// is recorded and the rule is dropped.
Tensor make_result(Shape shape, std::vector<double> value, std::string op,
                   const std::vector<Tensor>& inputs,
                   std::function<void(detail::Node& self)> backward);

class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<const void*> inputs;
    const void* output;
  };

  // Collects every recorded operation reachable from `loss`, inputs first.
  static Tape record(const Tensor& loss);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool is_topological() const;

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be the tensor the
  // tape was recorded from.
  void backward(const Tensor& loss) const;

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
  std::vector<Entry> entries_;
};

// Tape::record(loss).backward(loss). Throws ContractError for non-scalar loss.
void backward(const Tensor& loss);

}  // namespace dyhgn
