#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "dyhgn/tensor.hpp"

namespace dyhgn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay: p <- p * (1 - lr * wd), then the
// bias-corrected Adam step.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config);

  // Parameters without a gradient buffer are left as they are.
  void step();
  void zero_grad();

  std::size_t step_count() const { return steps_; }
  const AdamWConfig& config() const { return config_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  std::size_t steps_ = 0;
};

// Mixes a base seed with stream identifiers (splitmix64 finalizer), so every
// call site draws from its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

}  // namespace dyhgn
