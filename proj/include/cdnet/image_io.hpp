#pragma once

#include <stdexcept>
#include <string>

#include "cdnet/tensor.hpp"

namespace cdnet {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kImageSide = 256;

/// Decodes an 8-bit PNG to (1, 3, side, side) in [0, 1] (value / 255).
/// Other sizes are resized so the shorter side equals `side` (bilinear,
/// half-pixel centres) and centre-cropped. side = 0 keeps the native size.
Tensor load_image(const std::string& path, std::size_t side = kImageSide);

/// Decodes a PNG as a (1, 1, h, w) binary mask: gray >= 128 -> 1.
/// side = 0 keeps the native size; otherwise the size must match.
Tensor load_mask(const std::string& path, std::size_t side = 0);

/// Writes a (1, 1, h, w) or (1, 3, h, w) tensor; values are clamped to
/// [0, 1] and quantised with floor(v * 255 + 0.5).
void save_image(const Tensor& image, const std::string& path);

/// Bilinear resize with half-pixel centres and clamped borders.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Shorter-side resize to `side`, then centre crop to side x side.
Tensor fit_square(const Tensor& image, std::size_t side);

}  // namespace cdnet
