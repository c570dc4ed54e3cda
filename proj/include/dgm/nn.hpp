#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "dgm/ops.hpp"
#include "dgm/tensor.hpp"

namespace dgm {

using Rng = std::mt19937_64;

// Independent stream seed for a named sub-task of a run (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform(-bound, bound) with bound = 1/sqrt(fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

// y = x·W + b over the last axis of x, for any rank >= 1.
struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // out; undefined when the layer has no bias

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor forward(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(ParameterList params, double lr, double weight_decay = 0.0, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }

 private:
  ParameterList params_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

// Snapshot of parameter values, used to restore the best-validation weights.
std::vector<std::vector<double>> save_values(const ParameterList& params);
void load_values(const ParameterList& params, const std::vector<std::vector<double>>& values);

}  // namespace dgm
