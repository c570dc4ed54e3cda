#pragma once

// Discrete state-space models: the diagonal LTI recurrence and its
// convolution-kernel form, the selective scan, and the Mamba block.

#include <cstddef>
#include <string>
#include <vector>

#include "dgm/nn.hpp"
#include "dgm/tensor.hpp"

namespace dgm {

// Diagonal state-space system h_t = Ā h_{t-1} + B̄ x_t, y_t = C h_t + D ⊙ x_t,
// with Ā = exp(Δ A), B̄ = Δ B.
struct SSMParams {
  Tensor a_diag;              // m, continuous-time diagonal (<= 0 for stability)
  Tensor b;                   // m × d_in
  Tensor c;                   // d_out × m
  Tensor d;                   // d_in skip; may be undefined (no skip)
  std::vector<double> delta;  // one step size (LTI) or one per position

  std::size_t state_size() const { return a_diag.dim(0); }
  bool time_invariant() const { return delta.size() == 1; }
};

struct Discretized {
  Tensor a_bar;  // m
  Tensor b_bar;  // m × d_in
};

// Zero-order hold on A, Euler on B.
Discretized discretize(const Tensor& a_diag, const Tensor& b, double delta);

// Sequential evaluation from h_0 = 0. x_seq is L × d_in, result L × d_out.
Tensor ssm_scan_recurrent(const SSMParams& p, const Tensor& x_seq);

// Taps K[k] = C · diag(Ā^k) · B̄ for k < length, shaped (length, d_out, d_in).
// Input-dependent (per-position Δ) parameters are rejected.
Tensor ssm_conv_kernel(const SSMParams& p, std::size_t length);
// Causal convolution y_t = Σ_{k<=t} K[k] x_{t-k} + D ⊙ x_t.
Tensor apply_conv_kernel(const Tensor& kernel, const Tensor& x_seq, const Tensor& d);

enum class ScanMode { kSequential, kPrefix };

struct ScanOptions {
  ScanMode mode = ScanMode::kSequential;
  std::size_t workers = 1;  // chunks for kPrefix; fixed count keeps results bitwise stable
};

// Selective scan over a batch of sequences.
//   u, delta: (B, L, C); a: (C, N); b, c: (B, L, N); d: (C)
//   h_t[c,n] = exp(delta_t[c] a[c,n]) h_{t-1}[c,n] + delta_t[c] b_t[n] u_t[c]
//   y_t[c]   = Σ_n c_t[n] h_t[c,n] + d[c] u_t[c]
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                      const Tensor& c, const Tensor& d, ScanOptions options = {});

struct MambaConfig {
  std::size_t d_model = 16;
  std::size_t d_state = 16;
  std::size_t d_conv = 4;
  std::size_t expand = 2;
};

// Intermediate values of one forward pass, kept for inspection.
struct MambaTrace {
  Tensor x_hat;  // (B, L, d_inner) after conv + silu
  Tensor delta;  // (B, L, d_inner) after softplus
  Tensor b;      // (B, L, d_state)
  Tensor c;      // (B, L, d_state)
  Tensor a;      // (d_inner, d_state), negative
};

class MambaBlock {
 public:
  MambaBlock() = default;
  MambaBlock(const MambaConfig& config, Rng& rng);

  const MambaConfig& config() const { return config_; }
  std::size_t d_inner() const { return config_.expand * config_.d_model; }

  // (B, L, d_model) -> (B, L, d_model); strictly causal along L.
  Tensor forward(const Tensor& x, ScanOptions scan = {}, MambaTrace* trace = nullptr) const;

  // Continuous state matrix A = -exp(a_log), (d_inner, d_state).
  Tensor state_matrix() const;

  void collect(ParameterList& out, const std::string& prefix) const;

  Linear in_proj;      // d_model -> 2·d_inner (x branch, gate branch)
  Tensor conv_weight;  // (d_inner, d_conv)
  Tensor conv_bias;    // (d_inner)
  Linear proj_b;       // S_B: d_inner -> d_state
  Linear proj_c;       // S_C: d_inner -> d_state
  Linear proj_delta;   // S_Δ: d_inner -> d_inner
  Tensor a_log;        // (d_inner, d_state)
  Tensor skip;         // D, (d_inner)
  Linear out_proj;     // d_inner -> d_model

 private:
  MambaConfig config_;
};

// L×L channel-aggregated implicit attention of a Mamba block, one matrix per
// batch element. Entry (i, j) is the mean over model channels of
// |Σ_n C_i[n] exp(A[c,n] Σ_{k=j+1..i} Δ_k[c]) Δ_j[c] B_j[n]|; zero for j > i.
std::vector<Tensor> hidden_attention(const MambaBlock& block, const Tensor& x);

}  // namespace dgm
