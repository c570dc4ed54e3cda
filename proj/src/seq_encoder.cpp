#include "dgm/seq_encoder.hpp"

#include <cmath>

#include "dgm/error.hpp"
#include "dgm/ops.hpp"

namespace dgm {

Tensor positional_encoding(std::size_t length, std::size_t d) {
  if (d == 0 || d % 2 != 0) {
    throw config_error("positional encoding needs an even width, got " + std::to_string(d));
  }
  std::vector<double> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) / freq;
      pe[pos * d + 2 * i] = std::sin(angle);
      pe[pos * d + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({length, d}, std::move(pe));
}

AttentionHead::AttentionHead(std::size_t d, Rng& rng)
    : query(d, d, rng), key(d, d, rng), value(d, d, rng) {}

AttentionOutput single_head_attention(const AttentionHead& head, const Tensor& x) {
  const Tensor in = x.rank() == 2 ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  if (in.rank() != 3 || in.dim(1) < 1) {
    throw dimension_error("attention: expected (L, d) or (B, L, d), got " +
                          shape_str(x.shape()));
  }
  const double d = static_cast<double>(in.dim(2));
  const Tensor q = head.query.forward(in);
  const Tensor k = head.key.forward(in);
  const Tensor v = head.value.forward(in);
  const Tensor scores = scale(bmm(q, transpose(k)), 1.0 / std::sqrt(d));
  const Tensor weights = softmax(scores);
  return {bmm(weights, v), weights};
}

EncoderBlock::EncoderBlock(std::size_t d, Rng& rng, bool post_norm_)
    : attention(d, rng),
      ff_in(d, 2 * d, rng),
      ff_out(2 * d, d, rng),
      norm1_gamma(Tensor::full({d}, 1.0, true)),
      norm1_beta(Tensor::zeros({d}, true)),
      norm2_gamma(Tensor::full({d}, 1.0, true)),
      norm2_beta(Tensor::zeros({d}, true)),
      post_norm(post_norm_) {}

void EncoderBlock::collect(ParameterList& out, const std::string& prefix) const {
  attention.query.collect(out, prefix + ".attn.query");
  attention.key.collect(out, prefix + ".attn.key");
  attention.value.collect(out, prefix + ".attn.value");
  ff_in.collect(out, prefix + ".ff_in");
  ff_out.collect(out, prefix + ".ff_out");
  out.push_back({prefix + ".norm1.gamma", norm1_gamma});
  out.push_back({prefix + ".norm1.beta", norm1_beta});
  out.push_back({prefix + ".norm2.gamma", norm2_gamma});
  out.push_back({prefix + ".norm2.beta", norm2_beta});
}

Tensor encoder_forward(const EncoderBlock& block, const Tensor& x, Tensor* attention_weights) {
  const bool unbatched = x.rank() == 2;
  Tensor h = unbatched ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  auto ffn = [&](const Tensor& t) { return block.ff_out.forward(relu(block.ff_in.forward(t))); };
  AttentionOutput attn;
  if (block.post_norm) {
    attn = single_head_attention(block.attention, h);
    h = layer_norm(add(h, attn.output), block.norm1_gamma, block.norm1_beta);
    h = layer_norm(add(h, ffn(h)), block.norm2_gamma, block.norm2_beta);
  } else {
    attn = single_head_attention(block.attention,
                                 layer_norm(h, block.norm1_gamma, block.norm1_beta));
    h = add(h, attn.output);
    h = add(h, ffn(layer_norm(h, block.norm2_gamma, block.norm2_beta)));
  }
  if (attention_weights) *attention_weights = attn.weights;
  return unbatched ? reshape(h, x.shape()) : h;
}

PointwiseTemporalConv::PointwiseTemporalConv(std::size_t length, Rng& rng)
    : weights(init_uniform({length}, length, rng)), bias(Tensor::scalar(0.0, true)) {}

void PointwiseTemporalConv::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weights", weights});
  out.push_back({prefix + ".bias", bias});
}

Tensor pointwise_combine(const PointwiseTemporalConv& conv, const Tensor& h) {
  const bool unbatched = h.rank() == 2;
  const Tensor in = unbatched ? reshape(h, {1, h.dim(0), h.dim(1)}) : h;
  if (in.rank() != 3 || in.dim(1) != conv.weights.dim(0)) {
    throw dimension_error("pointwise_combine: window " + shape_str(h.shape()) + " vs " +
                          std::to_string(conv.weights.dim(0)) + " weights");
  }
  const std::size_t batch = in.dim(0), len = in.dim(1), d = in.dim(2);
  // (B, L, d) -> (B·d, L) · (L, 1)
  const Tensor cols = reshape(transpose(in), {batch * d, len});
  const Tensor mixed = matmul(cols, reshape(conv.weights, {len, 1}));
  const Tensor out = tanh(add(reshape(mixed, {batch, d}), conv.bias));
  return unbatched ? reshape(out, {d}) : out;
}

}  // namespace dgm
