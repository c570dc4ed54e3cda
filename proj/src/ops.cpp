#include "dgm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dgm/error.hpp"

namespace dgm {

namespace {

enum class Broadcast { kSame, kTrailing, kScalar };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.numel() == 1 && b.rank() <= 1) return Broadcast::kScalar;
  if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0)) {
    return Broadcast::kTrailing;
  }
  throw dimension_error(std::string(op) + ": cannot combine shapes " + shape_str(a.shape()) +
                        " and " + shape_str(b.shape()));
}

inline std::size_t b_index(Broadcast mode, std::size_t i, std::size_t k) {
  switch (mode) {
    case Broadcast::kSame: return i;
    case Broadcast::kTrailing: return i % k;
    case Broadcast::kScalar: return 0;
  }
  return 0;
}

// Shared driver for elementwise binary ops with derivative callbacks
// da(a,b) and db(a,b).
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  const auto mode = broadcast_mode(a, b, name);
  const std::size_t k = b.numel();
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[b_index(mode, i, k)]);
  return record_op(a.shape(), std::move(out), {a, b}, [mode, k, da, db](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto x = ctx.input(0);
    auto y = ctx.input(1);
    auto gx = ctx.grad_in(0);
    auto gy = ctx.grad_in(1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t j = b_index(mode, i, k);
      if (!gx.empty()) gx[i] += g[i] * da(x[i], y[j]);
      if (!gy.empty()) gy[j] += g[i] * db(x[i], y[j]);
    }
  });
}

template <class F, class D>
Tensor unary(const Tensor& x, F f, D d) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return record_op(x.shape(), std::move(out), {x}, [d](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto xi = ctx.input(0);
    auto yo = ctx.value_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d(xi[i], yo[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw dimension_error("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(s));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw dimension_error(std::string(op) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_str(x.shape()));
  }
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "elu") return Activation::kElu;
  if (name == "relu") return Activation::kRelu;
  if (name == "exp") return Activation::kExp;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "silu") return Activation::kSilu;
  if (name == "softplus") return Activation::kSoftplus;
  throw config_error("unknown activation '" + std::string(name) + "'");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor apply_activation(const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::kTanh:
      return unary(
          x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
    case Activation::kElu:
      return unary(
          x, [](double v) { return v > 0 ? v : std::expm1(v); },
          [](double v, double y) { return v > 0 ? 1.0 : y + 1.0; });
    case Activation::kRelu:
      return unary(
          x, [](double v) { return v > 0 ? v : 0.0; },
          [](double v, double) { return v > 0 ? 1.0 : 0.0; });
    case Activation::kExp:
      return unary(
          x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
    case Activation::kSigmoid:
      return unary(
          x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
    case Activation::kSilu:
      return unary(
          x, [](double v) { return v * stable_sigmoid(v); },
          [](double v, double) {
            const double s = stable_sigmoid(v);
            return s * (1.0 + v * (1.0 - s));
          });
    case Activation::kSoftplus:
      return unary(
          x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
  }
  throw config_error("unknown activation");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw dimension_error("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return record_op({m, n}, std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto av = ctx.input(0);
    auto bv = ctx.input(1);
    auto ga = ctx.grad_in(0);
    auto gb = ctx.grad_in(1);
    if (!ga.empty()) {  // dA = dOut · Bᵀ
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (!gb.empty()) {  // dB = Aᵀ · dOut
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw dimension_error("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
  }
  const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(bs * m * n, 0.0);
  for (std::size_t s = 0; s < bs; ++s) {
    const double* A = av.data() + s * m * k;
    const double* B = bv.data() + s * k * n;
    double* C = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
      }
    }
  }
  return record_op({bs, m, n}, std::move(out), {a, b}, [bs, m, k, n](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto av = ctx.input(0);
    auto bv = ctx.input(1);
    auto ga = ctx.grad_in(0);
    auto gb = ctx.grad_in(1);
    for (std::size_t s = 0; s < bs; ++s) {
      const double* G = g.data() + s * m * n;
      const double* A = av.data() + s * m * k;
      const double* B = bv.data() + s * k * n;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          if (!ga.empty()) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
            ga[s * m * k + i * k + p] += acc;
          }
          if (!gb.empty()) {
            const double aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[s * k * n + p * n + j] += aip * G[i * n + j];
          }
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw dimension_error("transpose: rank < 2 for " + shape_str(x.shape()));
  Shape s = x.shape();
  const std::size_t m = s[s.size() - 2], n = s[s.size() - 1];
  const std::size_t batch = x.numel() / (m * n);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = xv[b * m * n + i * n + j];
    }
  }
  return record_op(std::move(s), std::move(out), {x}, [batch, m, n](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gx[b * m * n + i * n + j] += g[b * m * n + j * m + i];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return record_op({}, {acc}, {x}, [](BackwardContext& ctx) {
    const double g = ctx.grad_out()[0];
    for (auto& v : ctx.grad_in(0)) v += g;
  });
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const auto v = axis_view(x.shape(), axis);
  Shape s = x.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  auto xv = x.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t e = 0; e < v.extent; ++e) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        out[o * v.inner + i] += xv[(o * v.extent + e) * v.inner + i];
      }
    }
  }
  return record_op(std::move(s), std::move(out), {x}, [v](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t e = 0; e < v.extent; ++e) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          gx[(o * v.extent + e) * v.inner + i] += g[o * v.inner + i];
        }
      }
    }
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reduce_mean(const Tensor& x, std::size_t axis) {
  const auto extent = axis_view(x.shape(), axis).extent;
  return scale(sum(x, axis), 1.0 / static_cast<double>(extent));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw dimension_error("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  return record_op(std::move(shape), x.to_vector(), {x}, [](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  if (x.rank() == 0 || start + length > x.shape().back()) {
    throw dimension_error("slice_last: [" + std::to_string(start) + ", " +
                          std::to_string(start + length) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  Shape s = x.shape();
  s.back() = length;
  auto xv = x.data();
  std::vector<double> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r * width + start), length,
                out.begin() + static_cast<std::ptrdiff_t>(r * length));
  }
  return record_op(std::move(s), std::move(out), {x},
                   [rows, width, start, length](BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto gx = ctx.grad_in(0);
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t j = 0; j < length; ++j) {
                         gx[r * width + start + j] += g[r * length + j];
                       }
                     }
                   });
}

Tensor stack(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw dimension_error("stack: no tensors");
  const Shape& base = parts.front().shape();
  if (axis > base.size()) throw dimension_error("stack: axis out of range");
  for (const auto& p : parts) {
    if (p.shape() != base) {
      throw dimension_error("stack: shape " + shape_str(p.shape()) + " differs from " +
                            shape_str(base));
    }
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= base[i];
  for (std::size_t i = axis; i < base.size(); ++i) inner *= base[i];
  const std::size_t count = parts.size();
  Shape s = base;
  s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), count);
  std::vector<double> out(outer * count * inner);
  for (std::size_t p = 0; p < count; ++p) {
    auto pv = parts[p].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * inner), inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * count + p) * inner));
    }
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record_op(std::move(s), std::move(out), std::move(inputs),
                   [outer, inner, count](BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     for (std::size_t p = 0; p < count; ++p) {
                       auto gp = ctx.grad_in(p);
                       if (gp.empty()) continue;
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < inner; ++i) {
                           gp[o * inner + i] += g[(o * count + p) * inner + i];
                         }
                       }
                     }
                   });
}

Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw dimension_error("index_rows: scalar input");
  const std::size_t n = x.dim(0);
  const std::size_t width = x.numel() / std::max<std::size_t>(n, 1);
  for (auto r : rows) {
    if (r >= n) {
      throw dimension_error("index_rows: row " + std::to_string(r) + " out of range for " +
                            shape_str(x.shape()));
    }
  }
  Shape s = x.shape();
  s[0] = rows.size();
  auto xv = x.data();
  std::vector<double> out(rows.size() * width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[i] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return record_op(std::move(s), std::move(out), {x},
                   [idx = std::move(idx), width](BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto gx = ctx.grad_in(0);
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       for (std::size_t j = 0; j < width; ++j) {
                         gx[idx[i] * width + j] += g[i * width + j];
                       }
                     }
                   });
}

Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> index,
                        std::size_t rows) {
  if (src.rank() != 2 || src.dim(0) != index.size()) {
    throw dimension_error("scatter_add_rows: source " + shape_str(src.shape()) + " with " +
                          std::to_string(index.size()) + " indices");
  }
  const std::size_t width = src.dim(1);
  for (auto r : index) {
    if (r >= rows) throw dimension_error("scatter_add_rows: target row out of range");
  }
  auto sv = src.data();
  std::vector<double> out(rows * width, 0.0);
  for (std::size_t e = 0; e < index.size(); ++e) {
    for (std::size_t j = 0; j < width; ++j) out[index[e] * width + j] += sv[e * width + j];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return record_op({rows, width}, std::move(out), {src},
                   [idx = std::move(idx), width](BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto gs = ctx.grad_in(0);
                     for (std::size_t e = 0; e < idx.size(); ++e) {
                       for (std::size_t j = 0; j < width; ++j) {
                         gs[e * width + j] += g[idx[e] * width + j];
                       }
                     }
                   });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw dimension_error("softmax: scalar input");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * width;
    double* o = out.data() + r * width;
    const double mx = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < width; ++j) o[j] /= total;
  }
  return record_op(x.shape(), std::move(out), {x}, [rows, width](BackwardContext& ctx) {
    auto g = ctx.grad_out();
    auto y = ctx.value_out();
    auto gx = ctx.grad_in(0);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += g[r * width + j] * y[r * width + j];
      for (std::size_t j = 0; j < width; ++j) {
        gx[r * width + j] += y[r * width + j] * (g[r * width + j] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw dimension_error("layer_norm: scalar input");
  const std::size_t width = x.shape().back();
  if (gamma.shape() != Shape{width} || beta.shape() != Shape{width}) {
    throw dimension_error("layer_norm: affine parameters must have shape [" +
                          std::to_string(width) + "]");
  }
  const std::size_t rows = x.numel() / width;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv(rows);
  const double w = static_cast<double>(width);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += in[j];
    mu /= w;
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= w;
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (in[j] - mu) * inv[r];
      xhat[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  return record_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, width, w, xhat = std::move(xhat), inv = std::move(inv)](BackwardContext& ctx) {
        auto g = ctx.grad_out();
        auto gv = ctx.input(1);
        auto gx = ctx.grad_in(0);
        auto ggamma = ctx.grad_in(1);
        auto gbeta = ctx.grad_in(2);
        std::vector<double> dh(width);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            const std::size_t i = r * width + j;
            if (!ggamma.empty()) ggamma[j] += g[i] * xhat[i];
            if (!gbeta.empty()) gbeta[j] += g[i];
            dh[j] = g[i] * gv[j];
            s1 += dh[j];
            s2 += dh[j] * xhat[i];
          }
          if (gx.empty()) continue;
          for (std::size_t j = 0; j < width; ++j) {
            const std::size_t i = r * width + j;
            gx[i] += inv[r] / w * (w * dh[j] - s1 - xhat[i] * s2);
          }
        }
      });
}

Tensor causal_depthwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 3, "causal_depthwise_conv");
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (weight.rank() != 2 || weight.dim(0) != ch || bias.shape() != Shape{ch}) {
    throw dimension_error("causal_depthwise_conv: weight " + shape_str(weight.shape()) +
                          " / bias " + shape_str(bias.shape()) + " do not match " +
                          std::to_string(ch) + " channels");
  }
  const std::size_t width = weight.dim(1);
  if (width < 1) throw config_error("causal_depthwise_conv: kernel width must be >= 1");
  auto xv = x.data();
  auto wv = weight.data();
  auto bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = bv[c];
        for (std::size_t k = 0; k < width; ++k) {
          // Tap k reads position t - (width-1) + k.
          if (t + k + 1 < width) continue;
          const std::size_t src = t + k + 1 - width;
          acc += wv[c * width + k] * xv[(b * len + src) * ch + c];
        }
        out[(b * len + t) * ch + c] = acc;
      }
    }
  }
  return record_op(x.shape(), std::move(out), {x, weight, bias},
                   [batch, len, ch, width](BackwardContext& ctx) {
                     auto g = ctx.grad_out();
                     auto xv = ctx.input(0);
                     auto wv = ctx.input(1);
                     auto gx = ctx.grad_in(0);
                     auto gw = ctx.grad_in(1);
                     auto gb = ctx.grad_in(2);
                     for (std::size_t b = 0; b < batch; ++b) {
                       for (std::size_t t = 0; t < len; ++t) {
                         for (std::size_t c = 0; c < ch; ++c) {
                           const double go = g[(b * len + t) * ch + c];
                           if (!gb.empty()) gb[c] += go;
                           for (std::size_t k = 0; k < width; ++k) {
                             if (t + k + 1 < width) continue;
                             const std::size_t src = (b * len + t + k + 1 - width) * ch + c;
                             if (!gw.empty()) gw[c * width + k] += go * xv[src];
                             if (!gx.empty()) gx[src] += go * wv[c * width + k];
                           }
                         }
                       }
                     }
                   });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw config_error("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(x.numel());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = u(rng) < rate ? 0.0 : keep;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

}  // namespace dgm
