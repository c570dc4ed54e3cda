#include "dgm/ssm.hpp"

#include <cmath>
#include <thread>

#include "dgm/error.hpp"
#include "dgm/ops.hpp"

namespace dgm {

namespace {

void check_lti_shapes(const SSMParams& p, const Tensor& x_seq) {
  if (p.a_diag.rank() != 1) throw dimension_error("ssm: A must be a vector");
  const std::size_t m = p.a_diag.dim(0);
  if (p.b.rank() != 2 || p.b.dim(0) != m) {
    throw dimension_error("ssm: B " + shape_str(p.b.shape()) + " does not match state size " +
                          std::to_string(m));
  }
  if (p.c.rank() != 2 || p.c.dim(1) != m) {
    throw dimension_error("ssm: C " + shape_str(p.c.shape()) + " does not match state size " +
                          std::to_string(m));
  }
  if (x_seq.defined() && (x_seq.rank() != 2 || x_seq.dim(1) != p.b.dim(1))) {
    throw dimension_error("ssm: input " + shape_str(x_seq.shape()) + " vs B " +
                          shape_str(p.b.shape()));
  }
  if (p.d.defined() && (p.d.shape() != Shape{p.b.dim(1)} || p.b.dim(1) != p.c.dim(0))) {
    throw dimension_error("ssm: skip D needs d_in == d_out == " + shape_str(p.d.shape()));
  }
  if (p.delta.empty()) throw contract_error("ssm: missing step size");
  for (double dt : p.delta) {
    if (!(dt > 0.0)) throw contract_error("ssm: step size must be positive");
  }
}

// h_t = a_t h_{t-1} + x_t for every lane, given per-(t, lane) a and x laid
// out as [t][lane]. Writes all states into h.
void linear_recurrence_sequential(std::size_t len, std::size_t lanes, const double* a,
                                  const double* x, double* h) {
  for (std::size_t l = 0; l < lanes; ++l) h[l] = x[l];
  for (std::size_t t = 1; t < len; ++t) {
    const double* at = a + t * lanes;
    const double* xt = x + t * lanes;
    const double* hp = h + (t - 1) * lanes;
    double* ht = h + t * lanes;
    for (std::size_t l = 0; l < lanes; ++l) ht[l] = at[l] * hp[l] + xt[l];
  }
}

// Chunked two-pass scan over the associative operator
// (a1, x1) ∘ (a2, x2) = (a1 a2, a2 x1 + x2).
void linear_recurrence_prefix(std::size_t len, std::size_t lanes, const double* a,
                              const double* x, double* h, std::size_t workers) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min(workers, len));
  const std::size_t per = (len + chunks - 1) / chunks;
  std::vector<double> cumprod(len * lanes);
  auto local = [&](std::size_t k) {
    const std::size_t t0 = k * per;
    const std::size_t t1 = std::min(len, t0 + per);
    for (std::size_t t = t0; t < t1; ++t) {
      for (std::size_t l = 0; l < lanes; ++l) {
        const std::size_t i = t * lanes + l;
        if (t == t0) {
          cumprod[i] = a[i];
          h[i] = x[i];
        } else {
          cumprod[i] = cumprod[i - lanes] * a[i];
          h[i] = a[i] * h[i - lanes] + x[i];
        }
      }
    }
  };
  auto run_parallel = [&](auto&& fn) {
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < chunks; ++k) {
      if (k * per < len) pool.emplace_back(fn, k);
    }
    fn(0);
    for (auto& th : pool) th.join();
  };
  run_parallel(local);

  // carry[k] = state entering chunk k.
  std::vector<double> carry(chunks * lanes, 0.0);
  for (std::size_t k = 1; k < chunks && k * per < len; ++k) {
    const std::size_t last = std::min(len, k * per) - 1;
    for (std::size_t l = 0; l < lanes; ++l) {
      carry[k * lanes + l] = cumprod[last * lanes + l] * carry[(k - 1) * lanes + l] +
                             h[last * lanes + l];
    }
  }
  auto fixup = [&](std::size_t k) {
    if (k == 0) return;
    const std::size_t t0 = k * per;
    const std::size_t t1 = std::min(len, t0 + per);
    for (std::size_t t = t0; t < t1; ++t) {
      for (std::size_t l = 0; l < lanes; ++l) {
        const std::size_t i = t * lanes + l;
        h[i] += cumprod[i] * carry[k * lanes + l];
      }
    }
  };
  run_parallel(fixup);
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

}  // namespace

Discretized discretize(const Tensor& a_diag, const Tensor& b, double delta) {
  if (!(delta > 0.0)) throw contract_error("discretize: step size must be positive");
  return {exp(scale(a_diag, delta)), scale(b, delta)};
}

Tensor ssm_scan_recurrent(const SSMParams& p, const Tensor& x_seq) {
  check_lti_shapes(p, x_seq);
  const std::size_t len = x_seq.dim(0);
  if (!p.time_invariant() && p.delta.size() != len) {
    throw dimension_error("ssm: " + std::to_string(p.delta.size()) + " step sizes for length " +
                          std::to_string(len));
  }
  const Tensor c_t = transpose(p.c);
  Discretized disc = discretize(p.a_diag, p.b, p.delta[0]);
  Tensor b_bar_t = transpose(disc.b_bar);
  Tensor h = Tensor::zeros({1, p.state_size()});
  std::vector<Tensor> ys;
  ys.reserve(len);
  for (std::size_t t = 0; t < len; ++t) {
    if (!p.time_invariant() && t > 0) {
      disc = discretize(p.a_diag, p.b, p.delta[t]);
      b_bar_t = transpose(disc.b_bar);
    }
    const std::size_t row[] = {t};
    const Tensor xt = index_rows(x_seq, row);
    h = mul(h, disc.a_bar) + matmul(xt, b_bar_t);
    Tensor yt = matmul(h, c_t);
    if (p.d.defined()) yt = yt + mul(xt, p.d);
    ys.push_back(yt);
  }
  return reshape(stack(ys, 0), {len, p.c.dim(0)});
}

Tensor ssm_conv_kernel(const SSMParams& p, std::size_t length) {
  check_lti_shapes(p, Tensor());
  if (!p.time_invariant()) {
    throw contract_error("ssm_conv_kernel: parameters vary with the input; no fixed kernel");
  }
  NoGradGuard no_grad;
  const auto disc = discretize(p.a_diag, p.b, p.delta[0]);
  const std::size_t m = p.state_size(), d_in = p.b.dim(1), d_out = p.c.dim(0);
  auto a_bar = disc.a_bar.data();
  auto b_bar = disc.b_bar.data();
  auto c = p.c.data();
  std::vector<double> power(m, 1.0);
  std::vector<double> taps(length * d_out * d_in, 0.0);
  for (std::size_t k = 0; k < length; ++k) {
    for (std::size_t o = 0; o < d_out; ++o) {
      for (std::size_t i = 0; i < d_in; ++i) {
        double acc = 0.0;
        for (std::size_t s = 0; s < m; ++s) acc += c[o * m + s] * power[s] * b_bar[s * d_in + i];
        taps[(k * d_out + o) * d_in + i] = acc;
      }
    }
    for (std::size_t s = 0; s < m; ++s) power[s] *= a_bar[s];
  }
  return Tensor::from({length, d_out, d_in}, std::move(taps));
}

Tensor apply_conv_kernel(const Tensor& kernel, const Tensor& x_seq, const Tensor& d) {
  if (kernel.rank() != 3 || x_seq.rank() != 2 || x_seq.dim(1) != kernel.dim(2) ||
      kernel.dim(0) < x_seq.dim(0)) {
    throw dimension_error("apply_conv_kernel: kernel " + shape_str(kernel.shape()) +
                          " vs input " + shape_str(x_seq.shape()));
  }
  const std::size_t len = x_seq.dim(0), d_out = kernel.dim(1), d_in = kernel.dim(2);
  if (d.defined() && (d.shape() != Shape{d_in} || d_in != d_out)) {
    throw dimension_error("apply_conv_kernel: skip D needs d_in == d_out");
  }
  auto kv = kernel.data();
  auto xv = x_seq.data();
  std::vector<double> y(len * d_out, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t k = 0; k <= t; ++k) {
      const double* x = xv.data() + (t - k) * d_in;
      for (std::size_t o = 0; o < d_out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d_in; ++i) acc += kv[(k * d_out + o) * d_in + i] * x[i];
        y[t * d_out + o] += acc;
      }
    }
    if (d.defined()) {
      for (std::size_t o = 0; o < d_out; ++o) y[t * d_out + o] += d.at(o) * xv[t * d_in + o];
    }
  }
  return Tensor::from({len, d_out}, std::move(y));
}

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& b,
                      const Tensor& c, const Tensor& d, ScanOptions options) {
  if (u.rank() != 3 || delta.shape() != u.shape()) {
    throw dimension_error("selective_scan: u " + shape_str(u.shape()) + " and delta " +
                          shape_str(delta.shape()) + " must share a (B, L, C) shape");
  }
  const std::size_t bs = u.dim(0), len = u.dim(1), ch = u.dim(2);
  if (a.rank() != 2 || a.dim(0) != ch) {
    throw dimension_error("selective_scan: A " + shape_str(a.shape()) + " vs " +
                          std::to_string(ch) + " channels");
  }
  const std::size_t ns = a.dim(1);
  const Shape bc_shape{bs, len, ns};
  if (b.shape() != bc_shape || c.shape() != bc_shape || d.shape() != Shape{ch}) {
    throw dimension_error("selective_scan: B " + shape_str(b.shape()) + ", C " +
                          shape_str(c.shape()) + ", D " + shape_str(d.shape()) +
                          " inconsistent with u " + shape_str(u.shape()) + " and A " +
                          shape_str(a.shape()));
  }
  auto uv = u.data();
  auto dv = delta.data();
  auto av = a.data();
  auto bv = b.data();
  auto cv = c.data();
  auto skip = d.data();

  // Per batch element, lanes = C·N, laid out [t][c][n].
  const std::size_t lanes = ch * ns;
  std::vector<double> states(bs * len * lanes);
  std::vector<double> decay(len * lanes), drive(len * lanes);
  for (std::size_t s = 0; s < bs; ++s) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t row = s * len + t;
      for (std::size_t k = 0; k < ch; ++k) {
        const double dt = dv[row * ch + k];
        const double x = uv[row * ch + k];
        for (std::size_t n = 0; n < ns; ++n) {
          decay[t * lanes + k * ns + n] = std::exp(dt * av[k * ns + n]);
          drive[t * lanes + k * ns + n] = dt * bv[row * ns + n] * x;
        }
      }
    }
    double* h = states.data() + s * len * lanes;
    if (options.mode == ScanMode::kPrefix) {
      linear_recurrence_prefix(len, lanes, decay.data(), drive.data(), h, options.workers);
    } else {
      linear_recurrence_sequential(len, lanes, decay.data(), drive.data(), h);
    }
  }

  std::vector<double> y(bs * len * ch);
  for (std::size_t row = 0; row < bs * len; ++row) {
    const double* h = states.data() + row * lanes;
    for (std::size_t k = 0; k < ch; ++k) {
      double acc = 0.0;
      for (std::size_t n = 0; n < ns; ++n) acc += cv[row * ns + n] * h[k * ns + n];
      y[row * ch + k] = acc + skip[k] * uv[row * ch + k];
    }
  }

  return record_op(
      u.shape(), std::move(y), {u, delta, a, b, c, d},
      [bs, len, ch, ns, lanes, states = std::move(states)](BackwardContext& ctx) {
        auto gy = ctx.grad_out();
        auto uv = ctx.input(0);
        auto dv = ctx.input(1);
        auto av = ctx.input(2);
        auto bv = ctx.input(3);
        auto cv = ctx.input(4);
        auto skip = ctx.input(5);
        auto gu = ctx.grad_in(0);
        auto gdelta = ctx.grad_in(1);
        auto ga = ctx.grad_in(2);
        auto gb = ctx.grad_in(3);
        auto gc = ctx.grad_in(4);
        auto gd = ctx.grad_in(5);
        std::vector<double> dh(ns);
        for (std::size_t s = 0; s < bs; ++s) {
          for (std::size_t k = 0; k < ch; ++k) {
            std::fill(dh.begin(), dh.end(), 0.0);
            for (std::size_t t = len; t-- > 0;) {
              const std::size_t row = s * len + t;
              const double g = gy[row * ch + k];
              const double x = uv[row * ch + k];
              const double dt = dv[row * ch + k];
              if (!gd.empty()) gd[k] += g * x;
              double du = g * skip[k];
              double ddt = 0.0;
              const double* h = states.data() + row * lanes + k * ns;
              const double* hp = t > 0 ? h - lanes : nullptr;
              for (std::size_t n = 0; n < ns; ++n) {
                if (!gc.empty()) gc[row * ns + n] += g * h[n];
                dh[n] += g * cv[row * ns + n];
                const double an = av[k * ns + n];
                const double decay = std::exp(dt * an);
                const double prev = hp ? hp[n] : 0.0;
                const double dd = dh[n] * prev;  // d/d(decay)
                const double bn = bv[row * ns + n];
                ddt += dd * decay * an + dh[n] * bn * x;
                if (!ga.empty()) ga[k * ns + n] += dd * decay * dt;
                if (!gb.empty()) gb[row * ns + n] += dh[n] * dt * x;
                du += dh[n] * dt * bn;
                dh[n] *= decay;
              }
              if (!gdelta.empty()) gdelta[row * ch + k] += ddt;
              if (!gu.empty()) gu[row * ch + k] += du;
            }
          }
        }
      });
}

MambaBlock::MambaBlock(const MambaConfig& config, Rng& rng) : config_(config) {
  if (config.d_model < 1 || config.d_state < 1 || config.expand < 1) {
    throw config_error("mamba: d_model, d_state and expand must be >= 1");
  }
  if (config.d_conv < 1) throw config_error("mamba: d_conv must be >= 1");
  const std::size_t di = d_inner();
  in_proj = Linear(config.d_model, 2 * di, rng, false);
  conv_weight = init_uniform({di, config.d_conv}, config.d_conv, rng);
  conv_bias = init_uniform({di}, config.d_conv, rng);
  proj_b = Linear(di, config.d_state, rng, false);
  proj_c = Linear(di, config.d_state, rng, false);
  proj_delta = Linear(di, di, rng, true);
  {
    // Step sizes start log-uniform in [1e-3, 1e-1].
    std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
    auto bias = proj_delta.bias.mutable_data();
    for (auto& v : bias) v = inverse_softplus(std::exp(u(rng)));
  }
  std::vector<double> alog(di * config.d_state);
  for (std::size_t k = 0; k < di; ++k) {
    for (std::size_t n = 0; n < config.d_state; ++n) {
      alog[k * config.d_state + n] = std::log(static_cast<double>(n + 1));
    }
  }
  a_log = Tensor::from({di, config.d_state}, std::move(alog), true);
  skip = Tensor::full({di}, 1.0, true);
  out_proj = Linear(di, config.d_model, rng, false);
}

Tensor MambaBlock::state_matrix() const { return neg(exp(a_log)); }

Tensor MambaBlock::forward(const Tensor& x, ScanOptions scan, MambaTrace* trace) const {
  if (x.rank() != 3 || x.dim(2) != config_.d_model) {
    throw dimension_error("mamba: expected (B, L, " + std::to_string(config_.d_model) +
                          ") input, got " + shape_str(x.shape()));
  }
  if (x.dim(1) < 1) throw contract_error("mamba: empty sequence");
  const std::size_t di = d_inner();
  const Tensor xz = in_proj.forward(x);
  const Tensor xs = slice_last(xz, 0, di);
  const Tensor gate = slice_last(xz, di, di);
  const Tensor x_hat = silu(causal_depthwise_conv(xs, conv_weight, conv_bias));
  const Tensor b = proj_b.forward(x_hat);
  const Tensor c = proj_c.forward(x_hat);
  const Tensor delta = softplus(proj_delta.forward(x_hat));
  const Tensor a = state_matrix();
  const Tensor y = selective_scan(x_hat, delta, a, b, c, skip, scan);
  if (trace) *trace = {x_hat, delta, b, c, a};
  return out_proj.forward(mul(y, silu(gate)));
}

void MambaBlock::collect(ParameterList& out, const std::string& prefix) const {
  in_proj.collect(out, prefix + ".in_proj");
  out.push_back({prefix + ".conv.weight", conv_weight});
  out.push_back({prefix + ".conv.bias", conv_bias});
  proj_b.collect(out, prefix + ".proj_b");
  proj_c.collect(out, prefix + ".proj_c");
  proj_delta.collect(out, prefix + ".proj_delta");
  out.push_back({prefix + ".a_log", a_log});
  out.push_back({prefix + ".skip", skip});
  out_proj.collect(out, prefix + ".out_proj");
}

std::vector<Tensor> hidden_attention(const MambaBlock& block, const Tensor& x) {
  NoGradGuard no_grad;
  const Tensor input = x.rank() == 2 ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  MambaTrace trace;
  block.forward(input, {}, &trace);
  const std::size_t bs = input.dim(0), len = input.dim(1);
  const std::size_t ch = block.d_inner(), ns = block.config().d_state;
  auto dv = trace.delta.data();
  auto bv = trace.b.data();
  auto cv = trace.c.data();
  auto av = trace.a.data();
  std::vector<Tensor> out;
  out.reserve(bs);
  for (std::size_t s = 0; s < bs; ++s) {
    std::vector<double> alpha(len * len, 0.0);
    for (std::size_t k = 0; k < ch; ++k) {
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t rj = s * len + j;
        const double dt_j = dv[rj * ch + k];
        // Accumulated Σ_{q=j+1..i} Δ_q, grown as i advances.
        double span = 0.0;
        for (std::size_t i = j; i < len; ++i) {
          const std::size_t ri = s * len + i;
          if (i > j) span += dv[ri * ch + k];
          double acc = 0.0;
          for (std::size_t n = 0; n < ns; ++n) {
            acc += cv[ri * ns + n] * std::exp(av[k * ns + n] * span) * dt_j * bv[rj * ns + n];
          }
          alpha[i * len + j] += std::abs(acc);
        }
      }
    }
    for (auto& v : alpha) v /= static_cast<double>(ch);
    out.push_back(Tensor::from({len, len}, std::move(alpha)));
  }
  return out;
}

}  // namespace dgm
