#pragma once

// Single-head transformer encoder used on per-node temporal windows.

#include <cstddef>
#include <string>

#include "dgm/nn.hpp"
#include "dgm/tensor.hpp"

namespace dgm {

// Sinusoidal encoding: PE[p, 2i] = sin(p / 10000^{2i/d}), PE[p, 2i+1] = cos(...).
Tensor positional_encoding(std::size_t length, std::size_t d);

struct AttentionHead {
  Linear query, key, value;

  AttentionHead() = default;
  AttentionHead(std::size_t d, Rng& rng);
};

struct AttentionOutput {
  Tensor output;   // (B, L, d)
  Tensor weights;  // (B, L, L), rows sum to one
};

// softmax(Q Kᵀ / √d) V over full (non-causal) context. Accepts (L, d) or
// (B, L, d); a rank-2 input yields rank-3 results with B = 1.
AttentionOutput single_head_attention(const AttentionHead& head, const Tensor& x);

struct EncoderBlock {
  AttentionHead attention;
  Linear ff_in;   // d -> 2d
  Linear ff_out;  // 2d -> d
  Tensor norm1_gamma, norm1_beta;
  Tensor norm2_gamma, norm2_beta;
  bool post_norm = true;

  EncoderBlock() = default;
  EncoderBlock(std::size_t d, Rng& rng, bool post_norm = true);

  void collect(ParameterList& out, const std::string& prefix) const;
};

// attention -> residual + norm -> feed-forward (relu) -> residual + norm.
// With post_norm = false the norms move in front of each sublayer.
Tensor encoder_forward(const EncoderBlock& block, const Tensor& x,
                       Tensor* attention_weights = nullptr);

// Learnable per-position combination of a temporal window.
struct PointwiseTemporalConv {
  Tensor weights;  // (L)
  Tensor bias;     // scalar

  PointwiseTemporalConv() = default;
  PointwiseTemporalConv(std::size_t length, Rng& rng);

  void collect(ParameterList& out, const std::string& prefix) const;
};

// tanh(Σ_t w_t H[t] + b). H is (L, d) -> (d) or (B, L, d) -> (B, d).
Tensor pointwise_combine(const PointwiseTemporalConv& conv, const Tensor& h);

}  // namespace dgm
