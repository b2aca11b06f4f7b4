#include "cdnet/masks.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace cdnet {

EdgeSide parse_edge_side(const std::string& name) {
  if (name == "top") return EdgeSide::top;
  if (name == "bottom") return EdgeSide::bottom;
  if (name == "left") return EdgeSide::left;
  if (name == "right") return EdgeSide::right;
  throw std::invalid_argument(fmt::format("unknown edge side '{}'", name));
}

const char* edge_side_name(EdgeSide side) {
  switch (side) {
    case EdgeSide::top:
      return "top";
    case EdgeSide::bottom:
      return "bottom";
    case EdgeSide::left:
      return "left";
    case EdgeSide::right:
      return "right";
  }
  return "?";
}

Tensor edge_mask(EdgeSide side, double fraction, std::size_t h, std::size_t w) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw std::invalid_argument(fmt::format("edge_mask: fraction {} outside [0, 1)", fraction));
  }
  Tensor mask({1, 1, h, w}, 1.0f);
  const bool rows = side == EdgeSide::top || side == EdgeSide::bottom;
  const std::size_t extent = rows ? h : w;
  const auto band = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(extent)));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      bool hole = false;
      switch (side) {
        case EdgeSide::top:
          hole = r < band;
          break;
        case EdgeSide::bottom:
          hole = r >= h - band;
          break;
        case EdgeSide::left:
          hole = c < band;
          break;
        case EdgeSide::right:
          hole = c >= w - band;
          break;
      }
      if (hole) mask(0, 0, r, c) = 0.0f;
    }
  }
  return mask;
}

Tensor rect_mask(std::size_t x0, std::size_t y0, std::size_t hole_h, std::size_t hole_w,
                 std::size_t h, std::size_t w) {
  if (y0 + hole_h > h || x0 + hole_w > w) {
    throw std::invalid_argument(fmt::format(
        "rect_mask: hole at (x0={}, y0={}) of size {}x{} leaves the {}x{} frame", x0, y0, hole_h,
        hole_w, h, w));
  }
  Tensor mask({1, 1, h, w}, 1.0f);
  for (std::size_t r = y0; r < y0 + hole_h; ++r) {
    for (std::size_t c = x0; c < x0 + hole_w; ++c) mask(0, 0, r, c) = 0.0f;
  }
  return mask;
}

Tensor irregular_mask(std::uint64_t seed, double target_fraction, std::size_t h, std::size_t w) {
  if (!(target_fraction > 0.0 && target_fraction <= 0.9)) {
    throw std::invalid_argument(
        fmt::format("irregular_mask: target fraction {} outside (0, 0.9]", target_fraction));
  }
  Tensor mask({1, 1, h, w}, 1.0f);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> radius_dist(4, 16);
  std::uniform_int_distribution<int> vertex_dist(4, 12);
  const double total = static_cast<double>(h * w);
  std::size_t missing = 0;

  auto stamp = [&](double cy, double cx, int radius) {
    const long r = radius;
    const long y_lo = std::max(0L, static_cast<long>(std::floor(cy)) - r);
    const long y_hi = std::min(static_cast<long>(h) - 1, static_cast<long>(std::floor(cy)) + r);
    const long x_lo = std::max(0L, static_cast<long>(std::floor(cx)) - r);
    const long x_hi = std::min(static_cast<long>(w) - 1, static_cast<long>(std::floor(cx)) + r);
    for (long y = y_lo; y <= y_hi; ++y) {
      for (long x = x_lo; x <= x_hi; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        if (dy * dy + dx * dx > static_cast<double>(r * r)) continue;
        float& v = mask(0, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        if (v != 0.0f) {
          v = 0.0f;
          ++missing;
        }
      }
    }
  };

  while (static_cast<double>(missing) / total < target_fraction) {
    double y = unit(rng) * static_cast<double>(h);
    double x = unit(rng) * static_cast<double>(w);
    const int radius = radius_dist(rng);
    const int vertices = vertex_dist(rng);
    double angle = unit(rng) * 2.0 * std::numbers::pi;
    for (int v = 0; v < vertices && static_cast<double>(missing) / total < target_fraction; ++v) {
      angle += (unit(rng) - 0.5) * std::numbers::pi / 2.0;
      const double length = radius * (1.0 + 2.0 * unit(rng));
      // Stamp along the segment at half-radius spacing.
      const int steps = std::max(1, static_cast<int>(2.0 * length / radius));
      for (int s = 0; s < steps && static_cast<double>(missing) / total < target_fraction; ++s) {
        y = std::clamp(y + std::sin(angle) * length / steps, 0.0, static_cast<double>(h - 1));
        x = std::clamp(x + std::cos(angle) * length / steps, 0.0, static_cast<double>(w - 1));
        stamp(y, x, radius);
      }
    }
  }
  return mask;
}

TrainingMask sample_training_mask(std::uint64_t seed, std::size_t h, std::size_t w) {
  std::mt19937_64 rng(seed);
  const auto side = static_cast<EdgeSide>(rng() % 4);
  return {side, edge_mask(side, kDefaultEdgeFraction, h, w)};
}

double missing_fraction(const Tensor& mask) {
  std::size_t zeros = 0;
  for (float v : mask.values()) zeros += v == 0.0f ? 1 : 0;
  return mask.numel() == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(mask.numel());
}

}  // namespace cdnet
