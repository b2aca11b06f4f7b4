#include "cdnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <fmt/format.h>

namespace cdnet {

namespace {

struct Decoded {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> pixels;
};

Decoded decode(const std::string& path, std::uint32_t format) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    throw ImageIoError(fmt::format("{}: cannot decode PNG ({})", path, image.message));
  }
  image.format = format;
  Decoded out;
  out.h = image.height;
  out.w = image.width;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    const std::string message = image.message;
    png_image_free(&image);
    throw ImageIoError(fmt::format("{}: cannot decode PNG ({})", path, message));
  }
  return out;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  const Shape& s = image.shape();
  if (out_h == 0 || out_w == 0 || s.h == 0 || s.w == 0) {
    throw ShapeError(fmt::format("resize_bilinear: {} -> {}x{}", s.str(), out_h, out_w));
  }
  Tensor out({s.n, s.c, out_h, out_w});
  const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(s.h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, s.h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t q = 0; q < out_w; ++q) {
      const double fx = std::clamp((static_cast<double>(q) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(s.w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, s.w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
          const double top = image(n, c, y0, x0) * (1.0 - wx) + image(n, c, y0, x1) * wx;
          const double bottom = image(n, c, y1, x0) * (1.0 - wx) + image(n, c, y1, x1) * wx;
          out(n, c, r, q) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
        }
      }
    }
  }
  return out;
}

Tensor fit_square(const Tensor& image, std::size_t side) {
  const Shape& s = image.shape();
  if (s.h == side && s.w == side) return image;
  const std::size_t shorter = std::min(s.h, s.w);
  const auto scaled = [&](std::size_t extent) {
    return std::max(side, static_cast<std::size_t>(std::lround(
                              static_cast<double>(extent) * static_cast<double>(side) /
                              static_cast<double>(shorter))));
  };
  const std::size_t rh = scaled(s.h);
  const std::size_t rw = scaled(s.w);
  const Tensor resized = (rh == s.h && rw == s.w) ? image : resize_bilinear(image, rh, rw);
  const std::size_t top = (rh - side) / 2;
  const std::size_t left = (rw - side) / 2;
  Tensor out({s.n, s.c, side, side});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t r = 0; r < side; ++r) {
        std::copy_n(resized.plane(n, c) + (top + r) * rw + left, side, out.plane(n, c) + r * side);
      }
    }
  }
  return out;
}

Tensor load_image(const std::string& path, std::size_t side) {
  const Decoded d = decode(path, PNG_FORMAT_RGB);
  Tensor img({1, 3, d.h, d.w});
  for (std::size_t r = 0; r < d.h; ++r) {
    for (std::size_t q = 0; q < d.w; ++q) {
      for (std::size_t c = 0; c < 3; ++c) {
        img(0, c, r, q) = static_cast<float>(d.pixels[(r * d.w + q) * 3 + c]) / 255.0f;
      }
    }
  }
  return side == 0 ? img : fit_square(img, side);
}

Tensor load_mask(const std::string& path, std::size_t side) {
  const Decoded d = decode(path, PNG_FORMAT_GRAY);
  if (side != 0 && (d.h != side || d.w != side)) {
    throw ImageIoError(
        fmt::format("{}: mask is {}x{}, expected {}x{}", path, d.h, d.w, side, side));
  }
  Tensor mask({1, 1, d.h, d.w});
  for (std::size_t i = 0; i < d.h * d.w; ++i) mask[i] = d.pixels[i] >= 128 ? 1.0f : 0.0f;
  return mask;
}

void save_image(const Tensor& image, const std::string& path) {
  const Shape& s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3)) {
    throw ShapeError(fmt::format("save_image: expected (1, 1|3, h, w), got {}", s.str()));
  }
  std::vector<std::uint8_t> pixels(s.c * s.plane());
  for (std::size_t r = 0; r < s.h; ++r) {
    for (std::size_t q = 0; q < s.w; ++q) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const float v = std::clamp(image(0, c, r, q), 0.0f, 1.0f);
        pixels[(r * s.w + q) * s.c + c] =
            static_cast<std::uint8_t>(std::floor(static_cast<double>(v) * 255.0 + 0.5));
      }
    }
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(s.w);
  out.height = static_cast<png_uint_32>(s.h);
  out.format = s.c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (png_image_write_to_file(&out, path.c_str(), 0, pixels.data(), 0, nullptr) == 0) {
    throw ImageIoError(fmt::format("{}: cannot write PNG ({})", path, out.message));
  }
}

}  // namespace cdnet
