#include "cdnet/conv.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace cdnet {

namespace {

constexpr std::size_t kChannelBlock = 4;
constexpr std::size_t kPixelTile = 128;

struct Geometry {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, out_h, out_w;
  std::size_t kh, kw;
  long stride, pad;

  [[nodiscard]] std::size_t taps() const { return in_c * kh * kw; }
  [[nodiscard]] std::size_t pixels() const { return out_h * out_w; }
};

Geometry geometry(const Shape& in, const ConvParams& p) {
  const Shape out = conv2d_output_shape(in, p);
  return {in.c,    in.h,       in.w,       out.c,       out.h,
          out.w,   p.kernel_h(), p.kernel_w(), p.stride, p.padding};
}

// col[(ic * kh + ky) * kw + kx][oy * out_w + ox]
void im2col(const float* in, const Geometry& g, std::vector<float>& col) {
  col.assign(g.taps() * g.pixels(), 0.0f);
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < g.taps(); ++k) {
    const std::size_t ic = k / (g.kh * g.kw);
    const long ky = static_cast<long>((k / g.kw) % g.kh);
    const long kx = static_cast<long>(k % g.kw);
    const float* src = in + ic * g.in_h * g.in_w;
    float* dst = col.data() + k * g.pixels();
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      const long iy = static_cast<long>(oy) * g.stride - g.pad + ky;
      if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const long ix = static_cast<long>(ox) * g.stride - g.pad + kx;
        if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
        dst[oy * g.out_w + ox] = src[iy * static_cast<long>(g.in_w) + ix];
      }
    }
  }
}

// Scatters column gradients back onto the input grid, one input channel per
// task so no two tasks touch the same output.
void col2im(const std::vector<double>& col, const Geometry& g, float* grad_in) {
#pragma omp parallel for schedule(static)
  for (std::size_t ic = 0; ic < g.in_c; ++ic) {
    std::vector<double> acc(g.in_h * g.in_w, 0.0);
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* src = col.data() + ((ic * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
            if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
            acc[iy * static_cast<long>(g.in_w) + ix] += src[oy * g.out_w + ox];
          }
        }
      }
    }
    float* dst = grad_in + ic * g.in_h * g.in_w;
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
  }
}

void check_upstream(const Tensor& input, const ConvParams& params, const Tensor& upstream) {
  const Shape expected = conv2d_output_shape(input.shape(), params);
  if (upstream.shape() != expected) {
    require_same_shape(upstream, Tensor(expected), "conv2d_backward upstream");
  }
}

}  // namespace

ConvParams ConvParams::make(std::size_t in_channels, std::size_t out_channels, int kernel,
                            int stride) {
  ConvParams p;
  const auto k = static_cast<std::size_t>(kernel);
  p.weight = Tensor({out_channels, in_channels, k, k});
  p.bias.assign(out_channels, 0.0f);
  p.stride = stride;
  p.padding = kernel / 2;
  return p;
}

Shape conv2d_output_shape(const Shape& input, const ConvParams& params) {
  const Shape& w = params.weight.shape();
  if (input.c != w.c) {
    throw ShapeError(fmt::format("conv2d: input channel dimension c={} but kernel expects {}",
                                 input.c, w.c));
  }
  if (params.bias.size() != w.n) {
    throw ShapeError(fmt::format("conv2d: bias length {} but out_c={}", params.bias.size(), w.n));
  }
  if (params.stride < 1 || params.padding < 0) {
    throw std::invalid_argument(fmt::format("conv2d: invalid stride {} / padding {}",
                                            params.stride, params.padding));
  }
  const long padded_h = static_cast<long>(input.h) + 2L * params.padding;
  const long padded_w = static_cast<long>(input.w) + 2L * params.padding;
  if (padded_h < static_cast<long>(w.h)) {
    throw ShapeError(fmt::format("conv2d: height h={} too small for kernel height {}", input.h,
                                 w.h));
  }
  if (padded_w < static_cast<long>(w.w)) {
    throw ShapeError(fmt::format("conv2d: width w={} too small for kernel width {}", input.w,
                                 w.w));
  }
  return {input.n, w.n,
          static_cast<std::size_t>((padded_h - static_cast<long>(w.h)) / params.stride + 1),
          static_cast<std::size_t>((padded_w - static_cast<long>(w.w)) / params.stride + 1)};
}

Tensor conv2d_forward(const Tensor& input, const ConvParams& params) {
  const Geometry g = geometry(input.shape(), params);
  Tensor out(conv2d_output_shape(input.shape(), params));
  const std::size_t taps = g.taps();
  const std::size_t pixels = g.pixels();
  const float* weight = params.weight.data();
  const bool direct = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
  std::vector<float> col;

  const std::size_t oc_blocks = (g.out_c + kChannelBlock - 1) / kChannelBlock;
  const std::size_t tiles = (pixels + kPixelTile - 1) / kPixelTile;

  for (std::size_t n = 0; n < input.shape().n; ++n) {
    const float* col_data = nullptr;
    if (direct) {
      col_data = input.plane(n, 0);
    } else {
      im2col(input.plane(n, 0), g, col);
      col_data = col.data();
    }
    float* out_n = out.plane(n, 0);

#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t ob = 0; ob < oc_blocks; ++ob) {
      for (std::size_t t = 0; t < tiles; ++t) {
        const std::size_t oc0 = ob * kChannelBlock;
        const std::size_t oc_count = std::min(kChannelBlock, g.out_c - oc0);
        const std::size_t p0 = t * kPixelTile;
        const std::size_t len = std::min(kPixelTile, pixels - p0);
        double acc[kChannelBlock][kPixelTile];
        for (std::size_t b = 0; b < kChannelBlock; ++b) {
          const double init = b < oc_count ? params.bias[oc0 + b] : 0.0;
          for (std::size_t p = 0; p < kPixelTile; ++p) acc[b][p] = init;
        }
        for (std::size_t k = 0; k < taps; ++k) {
          const float* c = col_data + k * pixels + p0;
          double w[kChannelBlock];
          for (std::size_t b = 0; b < kChannelBlock; ++b) {
            w[b] = b < oc_count ? weight[(oc0 + b) * taps + k] : 0.0;
          }
          for (std::size_t p = 0; p < len; ++p) {
            const double v = c[p];
            acc[0][p] += w[0] * v;
            acc[1][p] += w[1] * v;
            acc[2][p] += w[2] * v;
            acc[3][p] += w[3] * v;
          }
        }
        for (std::size_t b = 0; b < oc_count; ++b) {
          float* dst = out_n + (oc0 + b) * pixels + p0;
          for (std::size_t p = 0; p < len; ++p) dst[p] = static_cast<float>(acc[b][p]);
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& upstream) {
  check_upstream(input, params, upstream);
  const Geometry g = geometry(input.shape(), params);
  const std::size_t taps = g.taps();
  const std::size_t pixels = g.pixels();
  const float* weight = params.weight.data();
  const bool direct = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;

  std::vector<double> gw(g.out_c * taps, 0.0);
  std::vector<double> gb(g.out_c, 0.0);
  std::vector<float> col;
  std::vector<double> grad_col(taps * pixels);
  Tensor grad_input(input.shape());

  const std::size_t oc_blocks = (g.out_c + kChannelBlock - 1) / kChannelBlock;
  const std::size_t k_blocks = (taps + kChannelBlock - 1) / kChannelBlock;
  const std::size_t tiles = (pixels + kPixelTile - 1) / kPixelTile;

  for (std::size_t n = 0; n < input.shape().n; ++n) {
    const float* col_data = nullptr;
    if (direct) {
      col_data = input.plane(n, 0);
    } else {
      im2col(input.plane(n, 0), g, col);
      col_data = col.data();
    }
    const float* up = upstream.plane(n, 0);

    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      double s = 0.0;
      const float* u = up + oc * pixels;
#pragma omp simd reduction(+ : s)
      for (std::size_t p = 0; p < pixels; ++p) s += u[p];
      gb[oc] += s;
    }

    // grad_weight[oc][k] += <up[oc], col[k]>
#pragma omp parallel for schedule(static)
    for (std::size_t ob = 0; ob < oc_blocks; ++ob) {
      const std::size_t oc0 = ob * kChannelBlock;
      const std::size_t oc_count = std::min(kChannelBlock, g.out_c - oc0);
      const float* u0 = up + oc0 * pixels;
      const float* u1 = oc_count > 1 ? u0 + pixels : u0;
      const float* u2 = oc_count > 2 ? u0 + 2 * pixels : u0;
      const float* u3 = oc_count > 3 ? u0 + 3 * pixels : u0;
      for (std::size_t k = 0; k < taps; ++k) {
        const float* c = col_data + k * pixels;
        double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
#pragma omp simd reduction(+ : a0, a1, a2, a3)
        for (std::size_t p = 0; p < pixels; ++p) {
          const double v = c[p];
          a0 += v * u0[p];
          a1 += v * u1[p];
          a2 += v * u2[p];
          a3 += v * u3[p];
        }
        const double sums[kChannelBlock] = {a0, a1, a2, a3};
        for (std::size_t b = 0; b < oc_count; ++b) gw[(oc0 + b) * taps + k] += sums[b];
      }
    }

    // grad_col[k][p] = sum_oc W[oc][k] * up[oc][p]
#pragma omp parallel for collapse(2) schedule(static)
    for (std::size_t kb = 0; kb < k_blocks; ++kb) {
      for (std::size_t t = 0; t < tiles; ++t) {
        const std::size_t k0 = kb * kChannelBlock;
        const std::size_t k_count = std::min(kChannelBlock, taps - k0);
        const std::size_t p0 = t * kPixelTile;
        const std::size_t len = std::min(kPixelTile, pixels - p0);
        double acc[kChannelBlock][kPixelTile] = {};
        for (std::size_t oc = 0; oc < g.out_c; ++oc) {
          const float* u = up + oc * pixels + p0;
          double w[kChannelBlock];
          for (std::size_t b = 0; b < kChannelBlock; ++b) {
            w[b] = b < k_count ? weight[oc * taps + k0 + b] : 0.0;
          }
          for (std::size_t p = 0; p < len; ++p) {
            const double v = u[p];
            acc[0][p] += w[0] * v;
            acc[1][p] += w[1] * v;
            acc[2][p] += w[2] * v;
            acc[3][p] += w[3] * v;
          }
        }
        for (std::size_t b = 0; b < k_count; ++b) {
          std::copy_n(acc[b], len, grad_col.data() + (k0 + b) * pixels + p0);
        }
      }
    }

    if (direct) {
      float* dst = grad_input.plane(n, 0);
      for (std::size_t i = 0; i < taps * pixels; ++i) dst[i] = static_cast<float>(grad_col[i]);
    } else {
      col2im(grad_col, g, grad_input.plane(n, 0));
    }
  }

  ConvGrads grads;
  grads.grad_input = std::move(grad_input);
  grads.grad_weight = Tensor(params.weight.shape());
  for (std::size_t i = 0; i < gw.size(); ++i) grads.grad_weight[i] = static_cast<float>(gw[i]);
  grads.grad_bias.resize(g.out_c);
  for (std::size_t i = 0; i < gb.size(); ++i) grads.grad_bias[i] = static_cast<float>(gb[i]);
  return grads;
}

namespace reference {

Tensor conv2d_forward(const Tensor& input, const ConvParams& params) {
  const Geometry g = geometry(input.shape(), params);
  Tensor out(conv2d_output_shape(input.shape(), params));
  for (std::size_t n = 0; n < input.shape().n; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          double sum = params.bias[oc];
          for (std::size_t ic = 0; ic < g.in_c; ++ic) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                sum += static_cast<double>(params.weight(oc, ic, ky, kx)) *
                       input(n, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          }
          out(n, oc, oy, ox) = static_cast<float>(sum);
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                                     const Tensor& upstream) {
  check_upstream(input, params, upstream);
  const Geometry g = geometry(input.shape(), params);
  std::vector<double> gi(input.numel(), 0.0);
  std::vector<double> gw(params.weight.numel(), 0.0);
  std::vector<double> gb(g.out_c, 0.0);
  for (std::size_t n = 0; n < input.shape().n; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const double u = upstream(n, oc, oy, ox);
          gb[oc] += u;
          for (std::size_t ic = 0; ic < g.in_c; ++ic) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                const auto y = static_cast<std::size_t>(iy);
                const auto x = static_cast<std::size_t>(ix);
                gw[params.weight.offset(oc, ic, ky, kx)] += u * input(n, ic, y, x);
                gi[input.offset(n, ic, y, x)] += u * params.weight(oc, ic, ky, kx);
              }
            }
          }
        }
      }
    }
  }
  ConvGrads grads{Tensor(input.shape()), Tensor(params.weight.shape()),
                  std::vector<float>(g.out_c)};
  for (std::size_t i = 0; i < gi.size(); ++i) grads.grad_input[i] = static_cast<float>(gi[i]);
  for (std::size_t i = 0; i < gw.size(); ++i) grads.grad_weight[i] = static_cast<float>(gw[i]);
  for (std::size_t i = 0; i < gb.size(); ++i) grads.grad_bias[i] = static_cast<float>(gb[i]);
  return grads;
}

}  // namespace reference

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, int kernel, int stride)
    : params(ConvParams::make(in_channels, out_channels, kernel, stride)),
      grad_weight(params.weight.shape()),
      grad_bias(out_channels, 0.0f) {}

Tensor Conv2d::forward(const Tensor& input) {
  input_ = input;
  return conv2d_forward(input, params);
}

Tensor Conv2d::backward(const Tensor& upstream) {
  if (input_.empty()) throw std::logic_error("Conv2d::backward called before forward");
  ConvGrads g = conv2d_backward(input_, params, upstream);
  for (std::size_t i = 0; i < grad_weight.numel(); ++i) grad_weight[i] += g.grad_weight[i];
  for (std::size_t i = 0; i < grad_bias.size(); ++i) grad_bias[i] += g.grad_bias[i];
  return std::move(g.grad_input);
}

void Conv2d::zero_grad() {
  grad_weight.fill(0.0f);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0f);
}

void Conv2d::collect_parameters(const std::string& prefix, std::vector<ParamRef>& out) {
  const Shape& s = params.weight.shape();
  out.push_back({prefix + ".weight", params.weight.values(), grad_weight.values(),
                 {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                  static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)}});
  out.push_back({prefix + ".bias", params.bias, grad_bias,
                 {static_cast<std::uint32_t>(params.bias.size())}});
}

}  // namespace cdnet
