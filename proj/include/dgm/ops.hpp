#pragma once

// Differentiable primitives over dgm::Tensor.
//
// Broadcasting is deliberately narrow: binary elementwise ops accept either
// equal shapes, a right-hand vector matching the trailing extent of the
// left operand, or a right-hand scalar. Everything else is a dimension error.

#include <cstddef>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "dgm/tensor.hpp"

namespace dgm {

enum class Activation { kTanh, kElu, kRelu, kExp, kSigmoid, kSilu, kSoftplus };

Activation parse_activation(std::string_view name);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor square(const Tensor& x);
Tensor log(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

Tensor apply_activation(const Tensor& x, Activation kind);
inline Tensor tanh(const Tensor& x) { return apply_activation(x, Activation::kTanh); }
inline Tensor elu(const Tensor& x) { return apply_activation(x, Activation::kElu); }
inline Tensor relu(const Tensor& x) { return apply_activation(x, Activation::kRelu); }
inline Tensor exp(const Tensor& x) { return apply_activation(x, Activation::kExp); }
inline Tensor sigmoid(const Tensor& x) { return apply_activation(x, Activation::kSigmoid); }
inline Tensor silu(const Tensor& x) { return apply_activation(x, Activation::kSilu); }
inline Tensor softplus(const Tensor& x) { return apply_activation(x, Activation::kSoftplus); }

// m×k · k×n.
Tensor matmul(const Tensor& a, const Tensor& b);
// Batched: (B,m,k) · (B,k,n).
Tensor bmm(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor reduce_mean(const Tensor& x, std::size_t axis);

Tensor reshape(const Tensor& x, Shape shape);
// Slice [start, start+length) of the last axis.
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);
// Stacks equal-shaped tensors along a new axis.
Tensor stack(std::span<const Tensor> parts, std::size_t axis);
// Rows of x (axis 0) picked by index; repeats allowed.
Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows);
// out[index[e]] += src[e] over rows; out has `rows` rows.
Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> index,
                        std::size_t rows);

Tensor softmax(const Tensor& x);  // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// x (B,L,C), weight (C,K), bias (C). out[b,t,c] = bias[c] +
// sum_k weight[c,k] * x[b, t-(K-1)+k, c] with zero left padding.
Tensor causal_depthwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Multiplies by a Bernoulli keep-mask scaled by 1/(1-rate).
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace dgm
