#include "cdnet/losses.hpp"

#include <cmath>
#include <fmt/format.h>

namespace cdnet {

Tensor downsample_gt(const Tensor& image, int factor) {
  const Shape s = image.shape();
  const auto f = static_cast<std::size_t>(factor);
  if (factor < 1 || s.h % f != 0 || s.w % f != 0) {
    throw ShapeError(fmt::format("downsample_gt: size {}x{} not divisible by {}", s.h, s.w,
                                 factor));
  }
  Tensor out({s.n, s.c, s.h / f, s.w / f});
  const double area = static_cast<double>(f * f);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < s.h / f; ++y) {
        for (std::size_t x = 0; x < s.w / f; ++x) {
          double sum = 0.0;
          for (std::size_t dy = 0; dy < f; ++dy) {
            for (std::size_t dx = 0; dx < f; ++dx) sum += image(n, c, y * f + dy, x * f + dx);
          }
          out(n, c, y, x) = static_cast<float>(sum / area);
        }
      }
    }
  }
  return out;
}

double l1_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) sum += std::abs(static_cast<double>(a[i]) - b[i]);
  return sum / static_cast<double>(a.numel());
}

double l2_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l2_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.numel());
}

Tensor l1_loss_backward(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_loss_backward");
  Tensor g(a.shape());
  const float scale = 1.0f / static_cast<float>(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    g[i] = a[i] > b[i] ? scale : (a[i] < b[i] ? -scale : 0.0f);
  }
  return g;
}

Tensor l2_loss_backward(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l2_loss_backward");
  Tensor g(a.shape());
  const double scale = 2.0 / static_cast<double>(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    g[i] = static_cast<float>(scale * (static_cast<double>(a[i]) - b[i]));
  }
  return g;
}

namespace {

void require_variance_extent(const Shape& s) {
  if (s.h < 3 || s.w < 3) {
    throw ShapeError(fmt::format("variance_loss: spatial size {}x{} below 3x3", s.h, s.w));
  }
}

double neighbourhood_mean(const float* p, std::size_t w, std::size_t y, std::size_t x) {
  double sum = 0.0;
  for (std::size_t dy = 0; dy < 3; ++dy) {
    for (std::size_t dx = 0; dx < 3; ++dx) sum += p[(y + dy - 1) * w + (x + dx - 1)];
  }
  return sum / 9.0;
}

}  // namespace

double variance_loss(const Tensor& image) {
  const Shape s = image.shape();
  require_variance_extent(s);
  const std::size_t count = s.n * s.c * (s.h - 2) * (s.w - 2);
  double sum = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* p = image.plane(n, c);
      for (std::size_t y = 1; y + 1 < s.h; ++y) {
        for (std::size_t x = 1; x + 1 < s.w; ++x) {
          const double d = p[y * s.w + x] - neighbourhood_mean(p, s.w, y, x);
          sum += d * d;
        }
      }
    }
  }
  return sum / static_cast<double>(count);
}

Tensor variance_loss_backward(const Tensor& image) {
  const Shape s = image.shape();
  require_variance_extent(s);
  const double count = static_cast<double>(s.n * s.c * (s.h - 2) * (s.w - 2));
  Tensor grad(s);
  std::vector<double> acc(s.plane());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* p = image.plane(n, c);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t y = 1; y + 1 < s.h; ++y) {
        for (std::size_t x = 1; x + 1 < s.w; ++x) {
          const double d = p[y * s.w + x] - neighbourhood_mean(p, s.w, y, x);
          const double g = 2.0 * d / count;
          acc[y * s.w + x] += g;
          for (std::size_t dy = 0; dy < 3; ++dy) {
            for (std::size_t dx = 0; dx < 3; ++dx) acc[(y + dy - 1) * s.w + (x + dx - 1)] -= g / 9.0;
          }
        }
      }
      float* out = grad.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) out[i] = static_cast<float>(acc[i]);
    }
  }
  return grad;
}

GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake) {
  require_same_shape(d_real, d_fake, "gan_losses");
  double real = 0.0;
  double fake = 0.0;
  double gen = 0.0;
  for (std::size_t i = 0; i < d_real.numel(); ++i) {
    real += std::max(0.0, 1.0 - d_real[i]);
    fake += std::max(0.0, 1.0 + d_fake[i]);
    gen += d_fake[i];
  }
  const auto count = static_cast<double>(d_real.numel());
  return {real / count + fake / count, -gen / count};
}

GanDiscriminatorGrads gan_discriminator_backward(const Tensor& d_real, const Tensor& d_fake) {
  require_same_shape(d_real, d_fake, "gan_discriminator_backward");
  const float scale = 1.0f / static_cast<float>(d_real.numel());
  GanDiscriminatorGrads g{Tensor(d_real.shape()), Tensor(d_fake.shape())};
  for (std::size_t i = 0; i < d_real.numel(); ++i) {
    g.grad_real[i] = d_real[i] < 1.0f ? -scale : 0.0f;
    g.grad_fake[i] = d_fake[i] > -1.0f ? scale : 0.0f;
  }
  return g;
}

Tensor gan_generator_backward(const Tensor& d_fake) {
  return Tensor(d_fake.shape(), -1.0f / static_cast<float>(d_fake.numel()));
}

}  // namespace cdnet
