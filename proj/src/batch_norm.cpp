#include "cdnet/batch_norm.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace cdnet {

BatchNormState::BatchNormState(std::size_t channels)
    : gamma(channels, 1.0f),
      beta(channels, 0.0f),
      running_mean(channels, 0.0f),
      running_var(channels, 1.0f) {}

Tensor batch_norm(const Tensor& input, BatchNormState& state, BatchNormCache* cache) {
  const Shape s = input.shape();
  if (s.c != state.channels()) {
    throw ShapeError(fmt::format("batch_norm: input channel dimension c={} but state has {}", s.c,
                                 state.channels()));
  }
  const std::size_t count = s.n * s.h * s.w;
  if (count == 0) throw ShapeError("batch_norm: zero spatial extent");

  Tensor out(s);
  Tensor normalized(s);
  std::vector<double> inv_std(s.c);

#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (state.mode == NormMode::training) {
      for (std::size_t n = 0; n < s.n; ++n) {
        const float* p = input.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) mean += p[i];
      }
      mean /= static_cast<double>(count);
      for (std::size_t n = 0; n < s.n; ++n) {
        const float* p = input.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const double d = p[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * count / static_cast<double>(count - 1) : var;
      const double m = state.momentum;
      state.running_mean[c] = static_cast<float>((1.0 - m) * state.running_mean[c] + m * mean);
      state.running_var[c] = static_cast<float>((1.0 - m) * state.running_var[c] + m * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + state.epsilon);
    inv_std[c] = inv;
    const double g = state.gamma[c];
    const double b = state.beta[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const float* src = input.plane(n, c);
      float* xh = normalized.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const double x_hat = (src[i] - mean) * inv;
        xh[i] = static_cast<float>(x_hat);
        dst[i] = static_cast<float>(g * x_hat + b);
      }
    }
  }

  if (cache != nullptr) {
    cache->mode = state.mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

BatchNormGrads batch_norm_backward(const Tensor& upstream, const BatchNormState& state,
                                   const BatchNormCache& cache) {
  require_same_shape(upstream, cache.normalized, "batch_norm_backward");
  const Shape s = upstream.shape();
  const auto count = static_cast<double>(s.n * s.h * s.w);
  BatchNormGrads grads{Tensor(s), std::vector<float>(s.c), std::vector<float>(s.c)};

#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const float* dy = upstream.plane(n, c);
      const float* xh = cache.normalized.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
      }
    }
    grads.grad_beta[c] = static_cast<float>(sum_dy);
    grads.grad_gamma[c] = static_cast<float>(sum_dy_xhat);
    const double scale = state.gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const float* dy = upstream.plane(n, c);
      const float* xh = cache.normalized.plane(n, c);
      float* dx = grads.grad_input.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        if (cache.mode == NormMode::training) {
          dx[i] = static_cast<float>(scale / count *
                                     (count * dy[i] - sum_dy - xh[i] * sum_dy_xhat));
        } else {
          dx[i] = static_cast<float>(scale * dy[i]);
        }
      }
    }
  }
  return grads;
}

Tensor BatchNorm2d::backward(const Tensor& upstream) {
  BatchNormGrads g = batch_norm_backward(upstream, state, cache_);
  for (std::size_t c = 0; c < grad_gamma.size(); ++c) {
    grad_gamma[c] += g.grad_gamma[c];
    grad_beta[c] += g.grad_beta[c];
  }
  return std::move(g.grad_input);
}

void BatchNorm2d::zero_grad() {
  std::fill(grad_gamma.begin(), grad_gamma.end(), 0.0f);
  std::fill(grad_beta.begin(), grad_beta.end(), 0.0f);
}

void BatchNorm2d::collect_parameters(const std::string& prefix, std::vector<ParamRef>& out) {
  const auto c = static_cast<std::uint32_t>(state.channels());
  out.push_back({prefix + ".gamma", state.gamma, grad_gamma, {c}});
  out.push_back({prefix + ".beta", state.beta, grad_beta, {c}});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  const auto c = static_cast<std::uint32_t>(state.channels());
  out.push_back({prefix + ".running_mean", state.running_mean, {c}});
  out.push_back({prefix + ".running_var", state.running_var, {c}});
}

}  // namespace cdnet
