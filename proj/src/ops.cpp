#include "fadnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "fadnet/errors.hpp"

namespace fadnet::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         (t.defined() ? ", got " + shape_str(t.shape()) : std::string()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t c_in, h, w, k, stride, pad, h_out, w_out;
};

// Unrolls [C_in, H, W] into [C_in*k*k, H_out*W_out].
void im2col(std::span<const double> x, const ConvGeometry& g, Buffer& col) {
  const std::size_t cols = g.h_out * g.w_out;
  col.assign(g.c_in * g.k * g.k * cols, 0.0);
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col.data() + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const double* src = x.data() + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            row[oy * g.w_out + ox] = src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const Buffer& col, const ConvGeometry& g, std::span<double> dx) {
  const std::size_t cols = g.h_out * g.w_out;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col.data() + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::size_t oy = 0; oy < g.h_out; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = dx.data() + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.w_out; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dst[ix] += row[oy * g.w_out + ox];
          }
        }
      }
    }
  }
}

template <class Fwd>
Tensor unary_map(const Tensor& a, Fwd f) {
  Tensor out(a.shape());
  auto in = a.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

// 1-D interpolation taps for a factor-f bilinear resize with half-pixel centers.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_hi;
};

Taps bilinear_taps(std::size_t n_in, int factor) {
  const std::size_t n_out = n_in * static_cast<std::size_t>(factor);
  Taps t;
  t.lo.resize(n_out);
  t.hi.resize(n_out);
  t.w_hi.resize(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, n_in - 1);
    t.lo[o] = lo;
    t.hi[o] = hi;
    t.w_hi[o] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t c_out = weight.dim(0);
  const std::size_t k = weight.dim(2);
  if (weight.dim(3) != k) throw DimensionError("conv2d: kernel must be square");
  if (k < 1 || stride < 1) throw ParameterError("conv2d: kernel and stride must be >= 1");
  if (weight.dim(1) != input.dim(0)) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(0)) +
                         " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), k, stride, padding, 0, 0};
  const long span_h = static_cast<long>(g.h + 2 * padding) - static_cast<long>(k);
  const long span_w = static_cast<long>(g.w + 2 * padding) - static_cast<long>(k);
  if (span_h < 0 || span_w < 0 || span_h % static_cast<long>(stride) != 0 ||
      span_w % static_cast<long>(stride) != 0) {
    throw GeometryError("conv2d: output extent is not a positive integer for input " +
                        shape_str(input.shape()) + ", k=" + std::to_string(k) +
                        ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(padding));
  }
  g.h_out = static_cast<std::size_t>(span_h) / stride + 1;
  g.w_out = static_cast<std::size_t>(span_w) / stride + 1;
  const std::size_t cols = g.h_out * g.w_out;
  const std::size_t kk = g.c_in * k * k;

  auto col = std::make_shared<Buffer>();
  im2col(input.values(), g, *col);

  Tensor out(Shape{c_out, g.h_out, g.w_out});
  MapMat y(out.values().data(), static_cast<long>(c_out), static_cast<long>(cols));
  ConstMapMat wm(weight.values().data(), static_cast<long>(c_out), static_cast<long>(kk));
  ConstMapMat cm(col->data(), static_cast<long>(kk), static_cast<long>(cols));
  y.noalias() = wm * cm;
  if (bias.defined()) {
    for (std::size_t o = 0; o < c_out; ++o) y.row(static_cast<long>(o)).array() += bias.values()[o];
  }

  if (tape.needs_grad({&input, &weight, &bias})) {
    tape.record("conv2d", {input, weight, bias}, out,
                [input, weight, bias, out, col, g, c_out, cols, kk]() mutable {
                  ConstMapMat dy(out.grad().data(), static_cast<long>(c_out), static_cast<long>(cols));
                  if (weight.requires_grad()) {
                    MapMat dw(weight.grad().data(), static_cast<long>(c_out), static_cast<long>(kk));
                    ConstMapMat cm(col->data(), static_cast<long>(kk), static_cast<long>(cols));
                    dw.noalias() += dy * cm.transpose();
                  }
                  if (bias.defined() && bias.requires_grad()) {
                    auto db = bias.grad();
                    for (std::size_t o = 0; o < c_out; ++o) db[o] += dy.row(static_cast<long>(o)).sum();
                  }
                  if (input.requires_grad()) {
                    Buffer dcol(kk * cols);
                    MapMat dc(dcol.data(), static_cast<long>(kk), static_cast<long>(cols));
                    ConstMapMat wm(weight.values().data(), static_cast<long>(c_out), static_cast<long>(kk));
                    dc.noalias() = wm.transpose() * dy;
                    col2im_add(dcol, g, input.grad());
                  }
                });
  }
  return out;
}

Tensor conv_transpose2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::size_t stride) {
  require_rank(input, 3, "conv_transpose2d input");
  require_rank(weight, 4, "conv_transpose2d weight");
  if (stride < 1) throw ParameterError("conv_transpose2d: stride must be >= 1");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (weight.dim(0) != c_in) throw DimensionError("conv_transpose2d: channel mismatch");
  const std::size_t c_out = weight.dim(1), k = weight.dim(2);
  if (weight.dim(3) != k) throw DimensionError("conv_transpose2d: kernel must be square");
  const std::size_t h_out = (h - 1) * stride + k, w_out = (w - 1) * stride + k;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw DimensionError("conv_transpose2d: bias shape " + shape_str(bias.shape()));
  }

  Tensor out(Shape{c_out, h_out, w_out});
  auto x = input.values();
  auto wt = weight.values();
  auto y = out.values();
  auto widx = [&](std::size_t ci, std::size_t co, std::size_t ky, std::size_t kx) {
    return ((ci * c_out + co) * k + ky) * k + kx;
  };
  for (std::size_t ci = 0; ci < c_in; ++ci)
    for (std::size_t iy = 0; iy < h; ++iy)
      for (std::size_t ix = 0; ix < w; ++ix) {
        const double v = x[(ci * h + iy) * w + ix];
        for (std::size_t co = 0; co < c_out; ++co)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx)
              y[(co * h_out + iy * stride + ky) * w_out + ix * stride + kx] += v * wt[widx(ci, co, ky, kx)];
      }
  if (bias.defined()) {
    for (std::size_t co = 0; co < c_out; ++co)
      for (std::size_t i = 0; i < h_out * w_out; ++i) y[co * h_out * w_out + i] += bias.values()[co];
  }

  if (tape.needs_grad({&input, &weight, &bias})) {
    tape.record("conv_transpose2d", {input, weight, bias}, out,
                [=]() mutable {
                  auto dy = out.grad();
                  auto xv = input.values();
                  auto wv = weight.values();
                  const bool gx = input.requires_grad(), gw = weight.requires_grad();
                  std::span<double> dx, dw;
                  if (gx) dx = input.grad();
                  if (gw) dw = weight.grad();
                  auto wi = [&](std::size_t ci, std::size_t co, std::size_t ky, std::size_t kx) {
                    return ((ci * c_out + co) * k + ky) * k + kx;
                  };
                  for (std::size_t ci = 0; ci < c_in; ++ci)
                    for (std::size_t iy = 0; iy < h; ++iy)
                      for (std::size_t ix = 0; ix < w; ++ix) {
                        const std::size_t xi = (ci * h + iy) * w + ix;
                        double acc = 0.0;
                        for (std::size_t co = 0; co < c_out; ++co)
                          for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                              const double g = dy[(co * h_out + iy * stride + ky) * w_out + ix * stride + kx];
                              acc += g * wv[wi(ci, co, ky, kx)];
                              if (gw) dw[wi(ci, co, ky, kx)] += g * xv[xi];
                            }
                        if (gx) dx[xi] += acc;
                      }
                  if (bias.defined() && bias.requires_grad()) {
                    auto db = bias.grad();
                    for (std::size_t co = 0; co < c_out; ++co)
                      for (std::size_t i = 0; i < h_out * w_out; ++i) db[co] += dy[co * h_out * w_out + i];
                  }
                });
  }
  return out;
}

Tensor upsample_bilinear(Tape& tape, const Tensor& input, int factor) {
  require_rank(input, 3, "upsample_bilinear input");
  if (factor < 1) throw ParameterError("upsample factor must be >= 1, got " + std::to_string(factor));
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ho = h * static_cast<std::size_t>(factor), wo = w * static_cast<std::size_t>(factor);
  auto ty = std::make_shared<Taps>(bilinear_taps(h, factor));
  auto tx = std::make_shared<Taps>(bilinear_taps(w, factor));
  Tensor out(Shape{c, ho, wo});
  auto x = input.values();
  auto y = out.values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = x.data() + ch * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const double wy = ty->w_hi[oy];
      const double* r0 = src + ty->lo[oy] * w;
      const double* r1 = src + ty->hi[oy] * w;
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double wx = tx->w_hi[ox];
        const double top = (1 - wx) * r0[tx->lo[ox]] + wx * r0[tx->hi[ox]];
        const double bot = (1 - wx) * r1[tx->lo[ox]] + wx * r1[tx->hi[ox]];
        y[(ch * ho + oy) * wo + ox] = (1 - wy) * top + wy * bot;
      }
    }
  }
  if (tape.needs_grad({&input})) {
    tape.record("upsample_bilinear", {input}, out, [=]() mutable {
      auto dy = out.grad();
      auto dx = input.grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        double* dst = dx.data() + ch * h * w;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const double wy = ty->w_hi[oy];
          double* r0 = dst + ty->lo[oy] * w;
          double* r1 = dst + ty->hi[oy] * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double g = dy[(ch * ho + oy) * wo + ox];
            const double wx = tx->w_hi[ox];
            r0[tx->lo[ox]] += (1 - wy) * (1 - wx) * g;
            r0[tx->hi[ox]] += (1 - wy) * wx * g;
            r1[tx->lo[ox]] += wy * (1 - wx) * g;
            r1[tx->hi[ox]] += wy * wx * g;
          }
        }
      }
    });
  }
  return out;
}

Tensor group_norm(Tape& tape, const Tensor& input, std::size_t groups, const Tensor& gamma,
                  const Tensor& beta, double eps) {
  require_rank(input, 3, "group_norm input");
  const std::size_t c = input.dim(0);
  if (groups == 0 || c % groups != 0) {
    throw ParameterError("group_norm: " + std::to_string(c) + " channels not divisible by " +
                         std::to_string(groups) + " groups");
  }
  if (eps <= 0) throw ParameterError("group_norm: eps must be positive");
  if (gamma.numel() != c || beta.numel() != c) throw DimensionError("group_norm: affine size mismatch");
  const std::size_t hw = input.dim(1) * input.dim(2);
  const std::size_t per = (c / groups) * hw;

  Tensor out(input.shape());
  auto xhat = std::make_shared<std::vector<double>>(input.numel());
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  auto x = input.values();
  auto y = out.values();
  for (std::size_t g = 0; g < groups; ++g) {
    const double* xs = x.data() + g * per;
    double mu = 0.0;
    for (std::size_t i = 0; i < per; ++i) mu += xs[i];
    mu /= static_cast<double>(per);
    double var = 0.0;
    for (std::size_t i = 0; i < per; ++i) var += (xs[i] - mu) * (xs[i] - mu);
    var /= static_cast<double>(per);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[g] = is;
    for (std::size_t i = 0; i < per; ++i) (*xhat)[g * per + i] = (xs[i] - mu) * is;
  }
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i)
      y[ch * hw + i] = gamma.values()[ch] * (*xhat)[ch * hw + i] + beta.values()[ch];

  if (tape.needs_grad({&input, &gamma, &beta})) {
    tape.record("group_norm", {input, gamma, beta}, out, [=]() mutable {
      auto dy = out.grad();
      if (gamma.requires_grad() || beta.requires_grad()) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double dg = 0.0, db = 0.0;
          for (std::size_t i = 0; i < hw; ++i) {
            dg += dy[ch * hw + i] * (*xhat)[ch * hw + i];
            db += dy[ch * hw + i];
          }
          if (gamma.requires_grad()) gamma.grad()[ch] += dg;
          if (beta.requires_grad()) beta.grad()[ch] += db;
        }
      }
      if (!input.requires_grad()) return;
      auto dx = input.grad();
      const std::size_t cpg = c / groups;
      const double n = static_cast<double>(per);
      for (std::size_t g = 0; g < groups; ++g) {
        // dxhat = dy * gamma; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t cc = 0; cc < cpg; ++cc) {
          const std::size_t ch = g * cpg + cc;
          const double gm = gamma.values()[ch];
          for (std::size_t i = 0; i < hw; ++i) {
            const double d = dy[ch * hw + i] * gm;
            s1 += d;
            s2 += d * (*xhat)[ch * hw + i];
          }
        }
        s1 /= n;
        s2 /= n;
        const double is = (*inv_std)[g];
        for (std::size_t cc = 0; cc < cpg; ++cc) {
          const std::size_t ch = g * cpg + cc;
          const double gm = gamma.values()[ch];
          for (std::size_t i = 0; i < hw; ++i) {
            const std::size_t j = ch * hw + i;
            dx[j] += is * (dy[j] * gm - s1 - (*xhat)[j] * s2);
          }
        }
      }
    });
  }
  return out;
}

Tensor pointwise(Tape& tape, const Tensor& input, Pointwise kind) {
  Tensor out;
  switch (kind) {
    case Pointwise::relu:
      out = unary_map(input, [](double v) { return v > 0 ? v : 0.0; });
      break;
    case Pointwise::sigmoid:
      out = unary_map(input, [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
      break;
    case Pointwise::tanh:
      out = unary_map(input, [](double v) { return std::tanh(v); });
      break;
  }
  if (tape.needs_grad({&input})) {
    const char* name = kind == Pointwise::relu ? "relu" : kind == Pointwise::sigmoid ? "sigmoid" : "tanh";
    tape.record(name, {input}, out, [=]() mutable {
      auto dy = out.grad();
      auto dx = input.grad();
      auto x = input.values();
      auto y = out.values();
      for (std::size_t i = 0; i < dx.size(); ++i) {
        double d = 0.0;
        switch (kind) {
          case Pointwise::relu: d = x[i] > 0 ? 1.0 : 0.0; break;
          case Pointwise::sigmoid: d = y[i] * (1.0 - y[i]); break;
          case Pointwise::tanh: d = 1.0 - y[i] * y[i]; break;
        }
        dx[i] += dy[i] * d;
      }
    });
  }
  return out;
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels lhs");
  require_rank(b, 3, "concat_channels rhs");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t na = a.numel();
  Tensor out(Shape{a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<long>(na));
  if (tape.needs_grad({&a, &b})) {
    tape.record("concat_channels", {a, b}, out, [=]() mutable {
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = a.grad();
        for (std::size_t i = 0; i < na; ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad();
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[na + i];
      }
    });
  }
  return out;
}

Tensor slice_channels(Tape& tape, const Tensor& input, std::size_t begin, std::size_t end) {
  require_rank(input, 3, "slice_channels input");
  if (begin >= end || end > input.dim(0)) throw DimensionError("slice_channels: bad channel range");
  const std::size_t hw = input.dim(1) * input.dim(2);
  Tensor out(Shape{end - begin, input.dim(1), input.dim(2)});
  auto src = input.values().subspan(begin * hw, (end - begin) * hw);
  std::copy(src.begin(), src.end(), out.values().begin());
  if (tape.needs_grad({&input})) {
    tape.record("slice_channels", {input}, out, [=]() mutable {
      auto dy = out.grad();
      auto dx = input.grad().subspan(begin * hw, (end - begin) * hw);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record("add", {a, b}, out, [=]() mutable {
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto d = a.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto d = b.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record("sub", {a, b}, out, [=]() mutable {
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto d = a.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto d = b.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record("mul", {a, b}, out, [=]() mutable {
      auto dy = out.grad();
      if (a.requires_grad()) {
        auto d = a.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto d = b.grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * a.values()[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double s) {
  Tensor out = unary_map(a, [s](double v) { return v * s; });
  if (tape.needs_grad({&a})) {
    tape.record("scale", {a}, out, [=]() mutable {
      auto dy = out.grad();
      auto d = a.grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * dy[i];
    });
  }
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, double s) {
  Tensor out = unary_map(a, [s](double v) { return v + s; });
  if (tape.needs_grad({&a})) {
    tape.record("add_scalar", {a}, out, [=]() mutable {
      auto dy = out.grad();
      auto d = a.grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    });
  }
  return out;
}

Tensor scale_channels(Tape& tape, const Tensor& a, const std::vector<double>& s) {
  if (a.rank() != 3 || a.dim(0) != s.size()) {
    throw DimensionError("scale_channels: " + std::to_string(s.size()) + " scales for " + shape_str(a.shape()));
  }
  const std::size_t hw = a.dim(1) * a.dim(2);
  Tensor out(a.shape(), 0.0);
  for (std::size_t c = 0; c < s.size(); ++c)
    for (std::size_t i = 0; i < hw; ++i) out.values()[c * hw + i] = s[c] * a.values()[c * hw + i];
  if (tape.needs_grad({&a})) {
    tape.record("scale_channels", {a}, out, [=]() mutable {
      auto dy = out.grad();
      auto d = a.grad();
      for (std::size_t c = 0; c < s.size(); ++c)
        for (std::size_t i = 0; i < hw; ++i) d[c * hw + i] += s[c] * dy[c * hw + i];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tape.needs_grad({&a})) {
    tape.record("sum", {a}, out, [=]() mutable {
      const double g = out.grad()[0];
      for (double& d : a.grad()) d += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.numel()));
}

Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& parts, const std::vector<double>& weights) {
  if (parts.size() != weights.size()) throw DimensionError("weighted_sum: parts/weights length mismatch");
  double s = 0.0;
  bool track = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    s += weights[i] * parts[i].item();
    track = track || tape.needs_grad({&parts[i]});
  }
  Tensor out = Tensor::scalar(s);
  if (track) {
    tape.record("weighted_sum", parts, out, [=]() mutable {
      const double g = out.grad()[0];
      for (std::size_t i = 0; i < parts.size(); ++i) {
        Tensor p = parts[i];
        if (p.requires_grad()) p.grad()[0] += weights[i] * g;
      }
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& input, Shape shape) {
  Tensor out = input.reshaped(std::move(shape));
  if (tape.needs_grad({&input})) {
    tape.record("reshape", {input}, out, [=]() mutable {
      auto dy = out.grad();
      auto dx = input.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

Tensor gather(Tape& tape, const Tensor& input, const std::vector<std::size_t>& flat_indices) {
  if (flat_indices.empty()) throw DimensionError("gather: empty index list");
  Tensor out(Shape{flat_indices.size()});
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= input.numel()) throw DimensionError("gather: index out of range");
    out.values()[i] = input.values()[flat_indices[i]];
  }
  if (tape.needs_grad({&input})) {
    tape.record("gather", {input}, out, [=]() mutable {
      auto dy = out.grad();
      auto dx = input.grad();
      for (std::size_t i = 0; i < flat_indices.size(); ++i) dx[flat_indices[i]] += dy[i];
    });
  }
  return out;
}

Tensor swap_channel_width(Tape& tape, const Tensor& input) {
  require_rank(input, 3, "swap_channel_width input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out(Shape{w, h, c});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(x, y, ch) = input.at(ch, y, x);
  if (tape.needs_grad({&input})) {
    tape.record("swap_channel_width", {input}, out, [=]() mutable {
      auto dy = out.grad();
      auto dx = input.grad();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) dx[(ch * h + y) * w + x] += dy[(x * h + y) * c + ch];
    });
  }
  return out;
}

Tensor replicate_rows(Tape& tape, const Tensor& vec, std::size_t rows_per_entry, std::size_t width) {
  require_rank(vec, 1, "replicate_rows input");
  if (rows_per_entry == 0 || width == 0) throw ParameterError("replicate_rows: zero extent");
  const std::size_t n = vec.dim(0);
  const std::size_t rows = n * rows_per_entry;
  Tensor out(Shape{1, rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t x = 0; x < width; ++x) out.at(0, r, x) = vec.values()[r / rows_per_entry];
  if (tape.needs_grad({&vec})) {
    tape.record("replicate_rows", {vec}, out, [=]() mutable {
      auto dy = out.grad();
      auto dx = vec.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t x = 0; x < width; ++x) dx[r / rows_per_entry] += dy[r * width + x];
    });
  }
  return out;
}

}  // namespace fadnet::ops
