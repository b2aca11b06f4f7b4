#pragma once

#include <cstdint>
#include <string>

#include "cdnet/tensor.hpp"

namespace cdnet {

// Masks are (1, 1, h, w) tensors: 1 = valid pixel, 0 = missing.

enum class EdgeSide { top, bottom, left, right };

inline constexpr double kDefaultEdgeFraction = 0.30;

EdgeSide parse_edge_side(const std::string& name);
const char* edge_side_name(EdgeSide side);

/// Zeroes a band of round(fraction * extent) rows or columns on `side`.
Tensor edge_mask(EdgeSide side, double fraction, std::size_t h, std::size_t w);

/// Zeroes exactly the rectangle [y0, y0 + hole_h) x [x0, x0 + hole_w).
Tensor rect_mask(std::size_t x0, std::size_t y0, std::size_t hole_h, std::size_t hole_w,
                 std::size_t h, std::size_t w);

/// Random thick strokes (disc radius 4-16 stamped along random walks) until
/// the missing fraction reaches `target_fraction`. Coverage is checked after
/// every stamp, so overshoot is at most one disc.
Tensor irregular_mask(std::uint64_t seed, double target_fraction, std::size_t h, std::size_t w);

struct TrainingMask {
  EdgeSide side;
  Tensor mask;
};

/// One of the four edge masks at 30% missing, chosen uniformly by seed.
TrainingMask sample_training_mask(std::uint64_t seed, std::size_t h = 256, std::size_t w = 256);

double missing_fraction(const Tensor& mask);

}  // namespace cdnet
