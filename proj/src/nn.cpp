#include "dgm/nn.hpp"

#include <cmath>

#include "dgm/error.hpp"

namespace dgm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(init_uniform({in, out}, in, rng)) {
  if (with_bias) bias = init_uniform({out}, in, rng);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() == 0 || x.shape().back() != in_features()) {
    throw dimension_error("linear: input " + shape_str(x.shape()) + " vs weight " +
                          shape_str(weight.shape()));
  }
  Tensor y;
  if (x.rank() == 2) {
    y = matmul(x, weight);
  } else {
    Shape out_shape = x.shape();
    out_shape.back() = out_features();
    const std::size_t rows = x.numel() / in_features();
    y = reshape(matmul(reshape(x, {rows, in_features()}), weight), std::move(out_shape));
  }
  return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

Adam::Adam(ParameterList params, double lr, double weight_decay, double beta1, double beta2,
           double eps)
    : params_(std::move(params)),
      lr_(lr),
      weight_decay_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto value = params_[i].value.mutable_data();
    auto grad = params_[i].value.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j] + weight_decay_ * value[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      value[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() { dgm::zero_grad(params_); }

std::vector<std::vector<double>> save_values(const ParameterList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value.to_vector());
  return out;
}

void load_values(const ParameterList& params, const std::vector<std::vector<double>>& values) {
  if (values.size() != params.size()) throw contract_error("load_values: count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value;
    auto dst = p.mutable_data();
    if (dst.size() != values[i].size()) {
      throw dimension_error("load_values: size mismatch for " + params[i].name);
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace dgm
