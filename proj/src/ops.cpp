#include "mscmhmst/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "mscmhmst/errors.hpp"

namespace mscmhmst {

namespace debug {
namespace {
std::atomic<bool> g_gradient_fault{false};
}
void set_gradient_fault(bool enabled) { g_gradient_fault.store(enabled); }
bool gradient_fault() { return g_gradient_fault.load(); }
}  // namespace debug

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.raw();
  const double* s = src.raw();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

// [C, L] or [B, C, L] viewed as (batch, channels, length).
struct ChannelLayout {
  std::size_t batch, channels, length;
};

ChannelLayout channel_layout(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw ConfigError(std::string(op) + ": expected [C, L] or [B, C, L], got " + shape_string(s));
}

}  // namespace

Var conv1d_same(const Var& input, const Var& weights, const Var& bias) {
  const auto lay = channel_layout(input.shape(), "conv1d_same");
  const Shape& ws = weights.shape();
  if (ws.size() != 3) throw ConfigError("conv1d_same: weights must be [C_out, C_in, k]");
  const std::size_t c_out = ws[0], c_in = ws[1], k = ws[2];
  if (c_in != lay.channels) {
    throw ConfigError("conv1d_same: input has " + std::to_string(lay.channels) + " channels, weights expect " +
                      std::to_string(c_in));
  }
  if (k % 2 == 0) throw ConfigError("conv1d_same: kernel size must be odd, got " + std::to_string(k));
  if (bias.shape() != Shape{c_out}) throw ConfigError("conv1d_same: bias must be [C_out]");

  const std::size_t L = lay.length;
  const long half = static_cast<long>(k / 2);
  Shape out_shape = input.shape().size() == 3 ? Shape{lay.batch, c_out, L} : Shape{c_out, L};
  Tensor out(out_shape);
  const double* x = input.value().raw();
  const double* w = weights.value().raw();
  const double* bv = bias.value().raw();
  double* y = out.raw();

  // Valid output range for tap offset `off`: i in [lo, hi).
  auto tap_range = [L](long off) {
    const long lo = std::max(0L, -off);
    const long hi = std::min(static_cast<long>(L), static_cast<long>(L) - off);
    return std::pair<long, long>{lo, hi};
  };

  for (std::size_t b = 0; b < lay.batch; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      double* yrow = y + (b * c_out + co) * L;
      std::fill(yrow, yrow + L, bv[co]);
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double* xrow = x + (b * c_in + ci) * L;
        const double* wrow = w + (co * c_in + ci) * k;
        for (std::size_t m = 0; m < k; ++m) {
          const long off = static_cast<long>(m) - half;
          const auto [lo, hi] = tap_range(off);
          const double wv = wrow[m];
          for (long i = lo; i < hi; ++i) yrow[i] += wv * xrow[i + off];
        }
      }
    }
  }

  return input.graph().emit(
      std::move(out), {input, weights, bias},
      [input, weights, bias, lay, c_out, c_in, k, half, tap_range](const Tensor& gy, Graph& g) {
        Tensor* gx = g.grad_target(input);
        Tensor* gw = g.grad_target(weights);
        Tensor* gb = g.grad_target(bias);
        const std::size_t L = lay.length;
        const double* x = input.value().raw();
        const double* w = weights.value().raw();
        const double* dy = gy.raw();
        for (std::size_t b = 0; b < lay.batch; ++b) {
          for (std::size_t co = 0; co < c_out; ++co) {
            const double* dyrow = dy + (b * c_out + co) * L;
            if (gb) {
              double s = 0.0;
              for (std::size_t i = 0; i < L; ++i) s += dyrow[i];
              gb->raw()[co] += s;
            }
            for (std::size_t ci = 0; ci < c_in; ++ci) {
              const double* xrow = x + (b * c_in + ci) * L;
              for (std::size_t m = 0; m < k; ++m) {
                const long off = static_cast<long>(m) - half;
                const auto [lo, hi] = tap_range(off);
                if (gw) {
                  double s = 0.0;
                  for (long i = lo; i < hi; ++i) s += dyrow[i] * xrow[i + off];
                  gw->raw()[(co * c_in + ci) * k + m] += s;
                }
                if (gx) {
                  double* gxrow = gx->raw() + (b * c_in + ci) * L;
                  const double wv = w[(co * c_in + ci) * k + m];
                  for (long i = lo; i < hi; ++i) gxrow[i + off] += wv * dyrow[i];
                }
              }
            }
          }
        }
      });
}

Var pointwise(const Var& x, Pointwise kind) {
  Tensor out(x.shape());
  const double* in = x.value().raw();
  double* o = out.raw();
  const std::size_t n = out.size();
  if (kind == Pointwise::relu) {
    for (std::size_t i = 0; i < n; ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = in[i];
      if (v >= 0.0) {
        o[i] = 1.0 / (1.0 + std::exp(-v));
      } else {
        const double e = std::exp(v);
        o[i] = e / (1.0 + e);
      }
    }
  }
  Graph& g = x.graph();
  const std::size_t out_id = g.size();
  return g.emit(std::move(out), {x}, [x, kind, out_id](const Tensor& gy, Graph& g) {
    Tensor* gx = g.grad_target(x);
    const double* dy = gy.raw();
    double* dx = gx->raw();
    const std::size_t n = gy.size();
    if (kind == Pointwise::relu) {
      const double* in = x.value().raw();
      for (std::size_t i = 0; i < n; ++i) dx[i] += in[i] > 0.0 ? dy[i] : 0.0;
    } else {
      const double* s = g.value(out_id).raw();
      const double fault = debug::gradient_fault() ? 1.5 : 1.0;
      for (std::size_t i = 0; i < n; ++i) dx[i] += fault * dy[i] * s[i] * (1.0 - s[i]);
    }
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  const double* pa = a.value().raw();
  const double* pb = b.value().raw();
  double* o = out.raw();
  for (std::size_t i = 0, n = out.size(); i < n; ++i) o[i] = pa[i] * pb[i];
  return a.graph().emit(std::move(out), {a, b}, [a, b](const Tensor& gy, Graph& g) {
    const double* dy = gy.raw();
    if (Tensor* ga = g.grad_target(a)) {
      const double* pb = b.value().raw();
      double* d = ga->raw();
      for (std::size_t i = 0, n = gy.size(); i < n; ++i) d[i] += dy[i] * pb[i];
    }
    if (Tensor* gb = g.grad_target(b)) {
      const double* pa = a.value().raw();
      double* d = gb->raw();
      for (std::size_t i = 0, n = gy.size(); i < n; ++i) d[i] += dy[i] * pa[i];
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  add_into(out, b.value());
  return a.graph().emit(std::move(out), {a, b}, [a, b](const Tensor& gy, Graph& g) {
    if (Tensor* ga = g.grad_target(a)) add_into(*ga, gy);
    if (Tensor* gb = g.grad_target(b)) add_into(*gb, gy);
  });
}

Var add_broadcast(const Var& x, const Var& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw ConfigError("add_broadcast: " + shape_string(ys) + " is not a trailing shape of " + shape_string(xs));
  }
  const std::size_t inner = y.value().size();
  const std::size_t outer = x.value().size() / inner;
  Tensor out = x.value();
  for (std::size_t r = 0; r < outer; ++r) {
    double* o = out.raw() + r * inner;
    const double* py = y.value().raw();
    for (std::size_t i = 0; i < inner; ++i) o[i] += py[i];
  }
  return x.graph().emit(std::move(out), {x, y}, [x, y, inner, outer](const Tensor& gy, Graph& g) {
    if (Tensor* gx = g.grad_target(x)) add_into(*gx, gy);
    if (Tensor* gyy = g.grad_target(y)) {
      double* d = gyy->raw();
      for (std::size_t r = 0; r < outer; ++r) {
        const double* src = gy.raw() + r * inner;
        for (std::size_t i = 0; i < inner; ++i) d[i] += src[i];
      }
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return x.graph().emit(std::move(out), {x}, [x, factor](const Tensor& gy, Graph& g) {
    Tensor* gx = g.grad_target(x);
    double* d = gx->raw();
    const double* dy = gy.raw();
    for (std::size_t i = 0, n = gy.size(); i < n; ++i) d[i] += factor * dy[i];
  });
}

Var prune_below(const Var& x, double threshold) {
  if (threshold <= 0.0) return x;
  Tensor out = x.value();
  for (auto& v : out.data()) {
    if (v < threshold) v = 0.0;
  }
  return x.graph().emit(std::move(out), {x}, [x, threshold](const Tensor& gy, Graph& g) {
    Tensor* gx = g.grad_target(x);
    const double* in = x.value().raw();
    const double* dy = gy.raw();
    double* d = gx->raw();
    for (std::size_t i = 0, n = gy.size(); i < n; ++i) {
      if (in[i] >= threshold) d[i] += dy[i];
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_channels: empty part list");
  const Shape& first = parts[0].shape();
  const auto lay0 = channel_layout(first, "concat_channels");
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    const auto lay = channel_layout(p.shape(), "concat_channels");
    if (p.shape().size() != first.size() || lay.length != lay0.length || lay.batch != lay0.batch) {
      throw ConfigError("concat_channels: part shape " + shape_string(p.shape()) + " incompatible with " +
                        shape_string(first));
    }
    sizes.push_back(lay.channels);
    total += lay.channels;
  }
  if (parts.size() == 1) return parts[0];

  const std::size_t L = lay0.length;
  Shape out_shape = first.size() == 3 ? Shape{lay0.batch, total, L} : Shape{total, L};
  Tensor out(out_shape);
  std::size_t start = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].value().raw();
    for (std::size_t b = 0; b < lay0.batch; ++b) {
      std::copy(src + b * sizes[p] * L, src + (b + 1) * sizes[p] * L, out.raw() + (b * total + start) * L);
    }
    start += sizes[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  const std::size_t batch = lay0.batch;
  return parts[0].graph().emit(std::move(out), inputs, [inputs, sizes, total, L, batch](const Tensor& gy, Graph& g) {
    std::size_t start = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (Tensor* gp = g.grad_target(inputs[p])) {
        for (std::size_t b = 0; b < batch; ++b) {
          const double* src = gy.raw() + (b * total + start) * L;
          double* dst = gp->raw() + b * sizes[p] * L;
          for (std::size_t i = 0; i < sizes[p] * L; ++i) dst[i] += src[i];
        }
      }
      start += sizes[p];
    }
  });
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_last: empty part list");
  const Shape& first = parts[0].shape();
  const std::size_t rows = parts[0].value().size() / first.back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw ConfigError("concat_last: part shape " + shape_string(s) + " incompatible with " + shape_string(first));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  if (parts.size() == 1) return parts[0];
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t start = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].value().raw();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(src + r * widths[p], src + (r + 1) * widths[p], out.raw() + r * total + start);
    }
    start += widths[p];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().emit(std::move(out), inputs, [inputs, widths, total, rows](const Tensor& gy, Graph& g) {
    std::size_t start = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (Tensor* gp = g.grad_target(inputs[p])) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* src = gy.raw() + r * total + start;
          double* dst = gp->raw() + r * widths[p];
          for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
        }
      }
      start += widths[p];
    }
  });
}

Var slice_last(const Var& x, std::size_t offset, std::size_t width) {
  const Shape& s = x.shape();
  const std::size_t full = s.back();
  if (width == 0 || offset + width > full) throw ConfigError("slice_last: range out of bounds");
  const std::size_t rows = x.value().size() / full;
  Shape out_shape = s;
  out_shape.back() = width;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = x.value().raw() + r * full + offset;
    std::copy(src, src + width, out.raw() + r * width);
  }
  return x.graph().emit(std::move(out), {x}, [x, offset, width, full, rows](const Tensor& gy, Graph& g) {
    Tensor* gx = g.grad_target(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double* dst = gx->raw() + r * full + offset;
      const double* src = gy.raw() + r * width;
      for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
    }
  });
}

Var linear(const Var& x, const Var& weights, const Var& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weights.shape();
  if (ws.size() != 2 || xs.back() != ws[0]) {
    throw ConfigError("linear: input " + shape_string(xs) + " incompatible with weights " + shape_string(ws));
  }
  const std::size_t d_in = ws[0], d_out = ws[1];
  if (bias.shape() != Shape{d_out}) throw ConfigError("linear: bias must be [D_out]");
  const std::size_t rows = x.value().size() / d_in;
  Shape out_shape = xs;
  out_shape.back() = d_out;
  Tensor out(out_shape);
  const double* px = x.value().raw();
  const double* pw = weights.value().raw();
  const double* pb = bias.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.raw() + r * d_out;
    std::copy(pb, pb + d_out, o);
    for (std::size_t i = 0; i < d_in; ++i) {
      const double xv = px[r * d_in + i];
      const double* wrow = pw + i * d_out;
      for (std::size_t j = 0; j < d_out; ++j) o[j] += xv * wrow[j];
    }
  }
  return x.graph().emit(std::move(out), {x, weights, bias},
                        [x, weights, bias, rows, d_in, d_out](const Tensor& gy, Graph& g) {
                          const double* dy = gy.raw();
                          if (Tensor* gx = g.grad_target(x)) {
                            const double* pw = weights.value().raw();
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t i = 0; i < d_in; ++i) {
                                double s = 0.0;
                                const double* wrow = pw + i * d_out;
                                const double* dyrow = dy + r * d_out;
                                for (std::size_t j = 0; j < d_out; ++j) s += wrow[j] * dyrow[j];
                                gx->raw()[r * d_in + i] += s;
                              }
                            }
                          }
                          if (Tensor* gw = g.grad_target(weights)) {
                            const double* px = x.value().raw();
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t i = 0; i < d_in; ++i) {
                                const double xv = px[r * d_in + i];
                                double* gwrow = gw->raw() + i * d_out;
                                const double* dyrow = dy + r * d_out;
                                for (std::size_t j = 0; j < d_out; ++j) gwrow[j] += xv * dyrow[j];
                              }
                            }
                          }
                          if (Tensor* gb = g.grad_target(bias)) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < d_out; ++j) gb->raw()[j] += dy[r * d_out + j];
                            }
                          }
                        });
}

Var batched_matmul(const Var& a, const Var& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0]) {
    throw ConfigError("batched_matmul: expected [B,N,K] and [B,K,M], got " + shape_string(as) + " and " +
                      shape_string(bs));
  }
  const std::size_t B = as[0], N = as[1], K = as[2];
  const std::size_t M = transpose_b ? bs[1] : bs[2];
  if ((transpose_b ? bs[2] : bs[1]) != K) throw ConfigError("batched_matmul: inner dimensions differ");
  // b element (k, m) of batch s
  auto b_index = [=](std::size_t s, std::size_t k, std::size_t m) {
    return transpose_b ? (s * M + m) * K + k : (s * K + k) * M + m;
  };
  Tensor out({B, N, M});
  const double* pa = a.value().raw();
  const double* pb = b.value().raw();
  for (std::size_t s = 0; s < B; ++s) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += pa[(s * N + n) * K + k] * pb[b_index(s, k, m)];
        out.raw()[(s * N + n) * M + m] = acc;
      }
    }
  }
  return a.graph().emit(std::move(out), {a, b}, [a, b, B, N, K, M, b_index](const Tensor& gy, Graph& g) {
    const double* dy = gy.raw();
    const double* pa = a.value().raw();
    const double* pb = b.value().raw();
    Tensor* ga = g.grad_target(a);
    Tensor* gb = g.grad_target(b);
    for (std::size_t s = 0; s < B; ++s) {
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
          const double d = dy[(s * N + n) * M + m];
          for (std::size_t k = 0; k < K; ++k) {
            if (ga) ga->raw()[(s * N + n) * K + k] += d * pb[b_index(s, k, m)];
            if (gb) gb->raw()[b_index(s, k, m)] += d * pa[(s * N + n) * K + k];
          }
        }
      }
    }
  });
}

Var softmax_rows(const Var& x) {
  const std::size_t M = x.shape().back();
  const std::size_t rows = x.value().size() / M;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value().raw() + r * M;
    double* o = out.raw() + r * M;
    const double peak = *std::max_element(in, in + M);
    double total = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      o[j] = std::exp(in[j] - peak);
      total += o[j];
    }
    for (std::size_t j = 0; j < M; ++j) o[j] /= total;
  }
  Graph& g = x.graph();
  const std::size_t out_id = g.size();
  return g.emit(std::move(out), {x}, [x, M, rows, out_id](const Tensor& gy, Graph& g) {
    Tensor* gx = g.grad_target(x);
    const double* s = g.value(out_id).raw();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* sr = s + r * M;
      const double* dy = gy.raw() + r * M;
      double dot = 0.0;
      for (std::size_t j = 0; j < M; ++j) dot += dy[j] * sr[j];
      double* d = gx->raw() + r * M;
      for (std::size_t j = 0; j < M; ++j) d[j] += sr[j] * (dy[j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps) {
  const std::size_t D = x.shape().back();
  if (gain.shape() != Shape{D} || shift.shape() != Shape{D}) {
    throw ConfigError("layer_norm: gain/shift must be [" + std::to_string(D) + "]");
  }
  const std::size_t rows = x.value().size() / D;
  Tensor normalized(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.value().raw() + r * D;
    double mean = 0.0;
    for (std::size_t j = 0; j < D; ++j) mean += in[j];
    mean /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(D);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < D; ++j) normalized.raw()[r * D + j] = (in[j] - mean) * inv_std[r];
  }
  Tensor out(x.shape());
  const double* pg = gain.value().raw();
  const double* ps = shift.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < D; ++j) {
      out.raw()[r * D + j] = pg[j] * normalized.raw()[r * D + j] + ps[j];
    }
  }
  return x.graph().emit(
      std::move(out), {x, gain, shift},
      [x, gain, shift, D, rows, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          const Tensor& gy, Graph& g) {
        const double* dy = gy.raw();
        const double* yhat = normalized.raw();
        if (Tensor* gg = g.grad_target(gain)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < D; ++j) gg->raw()[j] += dy[r * D + j] * yhat[r * D + j];
          }
        }
        if (Tensor* gs = g.grad_target(shift)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < D; ++j) gs->raw()[j] += dy[r * D + j];
          }
        }
        if (Tensor* gx = g.grad_target(x)) {
          const double* pg = gain.value().raw();
          std::vector<double> dn(D);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dn = 0.0, mean_dn_y = 0.0;
            for (std::size_t j = 0; j < D; ++j) {
              dn[j] = dy[r * D + j] * pg[j];
              mean_dn += dn[j];
              mean_dn_y += dn[j] * yhat[r * D + j];
            }
            mean_dn /= static_cast<double>(D);
            mean_dn_y /= static_cast<double>(D);
            for (std::size_t j = 0; j < D; ++j) {
              gx->raw()[r * D + j] += inv_std[r] * (dn[j] - mean_dn - yhat[r * D + j] * mean_dn_y);
            }
          }
        }
      });
}

Var transpose_last2(const Var& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ConfigError("transpose_last2: rank must be >= 2");
  const std::size_t R = s[s.size() - 2], C = s[s.size() - 1];
  const std::size_t outer = x.value().size() / (R * C);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = x.value().raw() + o * R * C;
    double* dst = out.raw() + o * R * C;
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) dst[c * R + r] = src[r * C + c];
    }
  }
  return x.graph().emit(std::move(out), {x}, [x, R, C, outer](const Tensor& gy, Graph& g) {
    Tensor* gx = g.grad_target(x);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = gy.raw() + o * R * C;
      double* dst = gx->raw() + o * R * C;
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) dst[r * C + c] += src[c * R + r];
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().emit(std::move(out), {x}, [x](const Tensor& gy, Graph& g) {
    add_into(*g.grad_target(x), gy);
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.graph().emit(Tensor::scalar(total), {x}, [x](const Tensor& gy, Graph& g) {
    Tensor* gx = g.grad_target(x);
    const double d = gy[0];
    for (auto& v : gx->data()) v += d;
  });
}

Var mse_loss(const Var& pred, const Var& target) {
  require_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.value().size();
  const double* p = pred.value().raw();
  const double* t = target.value().raw();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
  return pred.graph().emit(Tensor::scalar(total / static_cast<double>(n)), {pred, target},
                           [pred, target, n](const Tensor& gy, Graph& g) {
                             const double* p = pred.value().raw();
                             const double* t = target.value().raw();
                             const double c = 2.0 * gy[0] / static_cast<double>(n);
                             if (Tensor* gp = g.grad_target(pred)) {
                               for (std::size_t i = 0; i < n; ++i) gp->raw()[i] += c * (p[i] - t[i]);
                             }
                             if (Tensor* gt = g.grad_target(target)) {
                               for (std::size_t i = 0; i < n; ++i) gt->raw()[i] -= c * (p[i] - t[i]);
                             }
                           });
}

Var mae_loss(const Var& pred, const Var& target) {
  require_same_shape(pred, target, "mae_loss");
  const std::size_t n = pred.value().size();
  const double* p = pred.value().raw();
  const double* t = target.value().raw();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(p[i] - t[i]);
  return pred.graph().emit(Tensor::scalar(total / static_cast<double>(n)), {pred, target},
                           [pred, target, n](const Tensor& gy, Graph& g) {
                             const double* p = pred.value().raw();
                             const double* t = target.value().raw();
                             const double c = gy[0] / static_cast<double>(n);
                             auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
                             if (Tensor* gp = g.grad_target(pred)) {
                               for (std::size_t i = 0; i < n; ++i) gp->raw()[i] += c * sign(p[i] - t[i]);
                             }
                             if (Tensor* gt = g.grad_target(target)) {
                               for (std::size_t i = 0; i < n; ++i) gt->raw()[i] -= c * sign(p[i] - t[i]);
                             }
                           });
}

}  // namespace mscmhmst
