#include "cdnet/decompression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include <fmt/format.h>

#include "cdnet/losses.hpp"

namespace cdnet {

namespace {

void require_rgb_image(const Tensor& t, const char* what) {
  const Shape s = t.shape();
  if (s.n != 1 || s.c != 3 || s.h == 0 || s.w == 0) {
    throw ShapeError(fmt::format("{} must be a (1, 3, h, w) image, got {}", what, s.str()));
  }
}

void require_mask_like(const Tensor& mask, std::size_t h, std::size_t w, const char* what) {
  const Shape s = mask.shape();
  if (s.n != 1 || s.c != 1 || s.h != h || s.w != w) {
    throw ShapeError(fmt::format("{} must be (1, 1, {}, {}), got {}", what, h, w, s.str()));
  }
}

void check_reference_mask(const Tensor& lr_reference, const SelectionConfig& cfg) {
  if (!cfg.reference_mask) return;
  const Shape s = lr_reference.shape();
  require_mask_like(*cfg.reference_mask, s.h, s.w, "reference_mask");
  const auto& v = cfg.reference_mask->values();
  if (std::none_of(v.begin(), v.end(), [](float m) { return m != 0.0f; })) {
    throw std::invalid_argument("find_similar_pixel: reference mask leaves no candidates");
  }
}

inline double rgb_loss(double a0, double a1, double a2, double b0, double b1, double b2) {
  return std::abs(a0 - b0) + std::abs(a1 - b1) + std::abs(a2 - b2);
}

void check_hr_reference(const Tensor& lr_reference, const Tensor& hr_reference, int block) {
  require_rgb_image(hr_reference, "hr_reference");
  const Shape lr = lr_reference.shape();
  const Shape hr = hr_reference.shape();
  const auto b = static_cast<std::size_t>(block);
  if (hr.h != lr.h * b || hr.w != lr.w * b) {
    throw ShapeError(fmt::format("hr_reference {} is not the {}x upscale of lr_reference {}",
                                 hr.str(), block, lr.str()));
  }
}

}  // namespace

double pixel_loss(const Tensor& a, std::size_t ay, std::size_t ax, const Tensor& b,
                  std::size_t by, std::size_t bx) {
  return rgb_loss(a(0, 0, ay, ax), a(0, 1, ay, ax), a(0, 2, ay, ax), b(0, 0, by, bx),
                  b(0, 1, by, bx), b(0, 2, by, bx));
}

PixelIndex find_similar_pixel(const Tensor& lr_output, const Tensor& lr_reference, int x, int y,
                              const SelectionConfig& cfg) {
  require_rgb_image(lr_output, "lr_output");
  require_rgb_image(lr_reference, "lr_reference");
  const Shape out = lr_output.shape();
  if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= out.h ||
      static_cast<std::size_t>(y) >= out.w) {
    throw std::out_of_range(fmt::format("pixel ({}, {}) outside {}x{}", x, y, out.h, out.w));
  }
  check_reference_mask(lr_reference, cfg);
  const Shape ref = lr_reference.shape();
  double best = std::numeric_limits<double>::infinity();
  PixelIndex best_index{-1, -1};
  for (std::size_t i = 0; i < ref.h; ++i) {
    for (std::size_t j = 0; j < ref.w; ++j) {
      if (cfg.reference_mask && (*cfg.reference_mask)(0, 0, i, j) == 0.0f) continue;
      const double loss = pixel_loss(lr_output, static_cast<std::size_t>(x),
                                     static_cast<std::size_t>(y), lr_reference, i, j);
      if (loss < best) {
        best = loss;
        best_index = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  }
  return best_index;
}

SimilarPixelIndex::SimilarPixelIndex(const Tensor& lr_reference,
                                     const std::optional<Tensor>& reference_mask) {
  require_rgb_image(lr_reference, "lr_reference");
  SelectionConfig cfg;
  cfg.reference_mask = reference_mask;
  check_reference_mask(lr_reference, cfg);
  const Shape s = lr_reference.shape();
  width_ = s.w;
  for (std::size_t i = 0; i < s.h; ++i) {
    for (std::size_t j = 0; j < s.w; ++j) {
      if (reference_mask && (*reference_mask)(0, 0, i, j) == 0.0f) continue;
      Candidate c{};
      c.rgb[0] = lr_reference(0, 0, i, j);
      c.rgb[1] = lr_reference(0, 1, i, j);
      c.rgb[2] = lr_reference(0, 2, i, j);
      c.sum = static_cast<double>(c.rgb[0]) + c.rgb[1] + c.rgb[2];
      c.order = static_cast<std::uint32_t>(i * s.w + j);
      candidates_.push_back(c);
    }
  }
  std::sort(candidates_.begin(), candidates_.end(), [](const Candidate& a, const Candidate& b) {
    return a.sum != b.sum ? a.sum < b.sum : a.order < b.order;
  });
}

PixelIndex SimilarPixelIndex::find(const Tensor& lr_output, std::size_t x, std::size_t y) const {
  const double q0 = lr_output(0, 0, x, y);
  const double q1 = lr_output(0, 1, x, y);
  const double q2 = lr_output(0, 2, x, y);
  const double q = q0 + q1 + q2;
  const double slack = 1e-9 * (1.0 + std::abs(q));

  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_order = std::numeric_limits<std::uint32_t>::max();
  auto visit = [&](const Candidate& c) {
    const double loss = rgb_loss(q0, q1, q2, c.rgb[0], c.rgb[1], c.rgb[2]);
    if (loss < best || (loss == best && c.order < best_order)) {
      best = loss;
      best_order = c.order;
    }
  };

  const auto start = std::lower_bound(candidates_.begin(), candidates_.end(), q,
                                      [](const Candidate& c, double v) { return c.sum < v; });
  auto up = start;
  auto down = start;
  while (true) {
    const bool can_up = up != candidates_.end() && up->sum - q <= best + slack;
    const bool can_down = down != candidates_.begin() && q - std::prev(down)->sum <= best + slack;
    if (!can_up && !can_down) break;
    if (can_up && (!can_down || up->sum - q <= q - std::prev(down)->sum)) {
      visit(*up++);
    } else {
      visit(*--down);
    }
  }
  return {static_cast<int>(best_order / width_), static_cast<int>(best_order % width_)};
}

std::vector<PixelIndex> match_all(const Tensor& lr_output, const Tensor& lr_reference,
                                  const SelectionConfig& cfg) {
  require_rgb_image(lr_output, "lr_output");
  const SimilarPixelIndex index(lr_reference, cfg.reference_mask);
  const Shape s = lr_output.shape();
  std::vector<PixelIndex> matches(s.h * s.w);
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < matches.size(); ++p) {
    matches[p] = index.find(lr_output, p / s.w, p % s.w);
  }
  return matches;
}

Tensor copy_blocks(const std::vector<PixelIndex>& matches, const Tensor& hr_reference,
                   std::size_t lr_h, std::size_t lr_w, int block) {
  const auto b = static_cast<std::size_t>(block);
  if (matches.size() != lr_h * lr_w) throw ShapeError("copy_blocks: match count mismatch");
  Tensor out({1, 3, lr_h * b, lr_w * b});
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < matches.size(); ++p) {
    const std::size_t x = p / lr_w;
    const std::size_t y = p % lr_w;
    const auto i = static_cast<std::size_t>(matches[p].row);
    const auto j = static_cast<std::size_t>(matches[p].col);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t n = 0; n < b; ++n) {
        const float* src = hr_reference.data() + hr_reference.offset(0, c, i * b + n, j * b);
        float* dst = &out(0, c, x * b + n, y * b);
        std::copy_n(src, b, dst);
      }
    }
  }
  return out;
}

Tensor select_textures(const Tensor& lr_output, const Tensor& lr_reference,
                       const Tensor& hr_reference, const SelectionConfig& cfg) {
  check_hr_reference(lr_reference, hr_reference, cfg.block);
  const std::vector<PixelIndex> matches = match_all(lr_output, lr_reference, cfg);
  return copy_blocks(matches, hr_reference, lr_output.shape().h, lr_output.shape().w, cfg.block);
}

namespace reference {

std::vector<PixelIndex> match_all(const Tensor& lr_output, const Tensor& lr_reference,
                                  const SelectionConfig& cfg) {
  const Shape s = lr_output.shape();
  std::vector<PixelIndex> matches;
  matches.reserve(s.h * s.w);
  for (std::size_t x = 0; x < s.h; ++x) {
    for (std::size_t y = 0; y < s.w; ++y) {
      matches.push_back(find_similar_pixel(lr_output, lr_reference, static_cast<int>(x),
                                           static_cast<int>(y), cfg));
    }
  }
  return matches;
}

Tensor select_textures(const Tensor& lr_output, const Tensor& lr_reference,
                       const Tensor& hr_reference, const SelectionConfig& cfg) {
  check_hr_reference(lr_reference, hr_reference, cfg.block);
  const Shape s = lr_output.shape();
  const auto b = static_cast<std::size_t>(cfg.block);
  Tensor out({1, 3, s.h * b, s.w * b});
  for (std::size_t x = 0; x < s.h; ++x) {
    for (std::size_t y = 0; y < s.w; ++y) {
      const PixelIndex m = find_similar_pixel(lr_output, lr_reference, static_cast<int>(x),
                                              static_cast<int>(y), cfg);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t n = 0; n < b; ++n) {
          for (std::size_t k = 0; k < b; ++k) {
            out(0, c, x * b + n, y * b + k) =
                hr_reference(0, c, static_cast<std::size_t>(m.row) * b + n,
                             static_cast<std::size_t>(m.col) * b + k);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace reference

BoundingBox valid_bounding_box(const Tensor& mask) {
  const Shape s = mask.shape();
  require_mask_like(mask, s.h, s.w, "mask");
  std::size_t top = s.h, bottom = 0, left = s.w, right = 0;
  bool any = false;
  for (std::size_t r = 0; r < s.h; ++r) {
    for (std::size_t c = 0; c < s.w; ++c) {
      if (mask(0, 0, r, c) == 0.0f) continue;
      any = true;
      top = std::min(top, r);
      bottom = std::max(bottom, r);
      left = std::min(left, c);
      right = std::max(right, c);
    }
  }
  if (!any) throw std::invalid_argument("stretch_damaged: mask has no valid pixels");
  return {top, left, bottom - top + 1, right - left + 1};
}

Tensor stretch_damaged(const Tensor& image, const Tensor& mask) {
  require_rgb_image(image, "damaged image");
  const Shape s = image.shape();
  require_mask_like(mask, s.h, s.w, "mask");
  const BoundingBox box = valid_bounding_box(mask);
  const double sy = static_cast<double>(box.height) / static_cast<double>(s.h);
  const double sx = static_cast<double>(box.width) / static_cast<double>(s.w);
  Tensor out(s);
  for (std::size_t r = 0; r < s.h; ++r) {
    const double fy = r * sy;
    const auto y0 = std::min(static_cast<std::size_t>(fy), box.height - 1);
    const std::size_t y1 = std::min(y0 + 1, box.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t col = 0; col < s.w; ++col) {
      const double fx = col * sx;
      const auto x0 = std::min(static_cast<std::size_t>(fx), box.width - 1);
      const std::size_t x1 = std::min(x0 + 1, box.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double a = image(0, c, box.top + y0, box.left + x0);
        const double b = image(0, c, box.top + y0, box.left + x1);
        const double d = image(0, c, box.top + y1, box.left + x0);
        const double e = image(0, c, box.top + y1, box.left + x1);
        const double top = a + (b - a) * wx;
        const double bottom = d + (e - d) * wx;
        out(0, c, r, col) = static_cast<float>(top + (bottom - top) * wy);
      }
    }
  }
  return out;
}

Tensor finetune(const Tensor& hr_output, const Tensor& stretched, double threshold) {
  require_same_shape(hr_output, stretched, "finetune");
  require_rgb_image(hr_output, "hr_output");
  if (threshold < 0.0) throw std::invalid_argument("finetune: threshold must be >= 0");
  const Shape s = hr_output.shape();
  Tensor out = hr_output;
  for (std::size_t r = 0; r < s.h; ++r) {
    for (std::size_t c = 0; c < s.w; ++c) {
      if (pixel_loss(hr_output, r, c, stretched, r, c) < threshold) {
        for (std::size_t ch = 0; ch < 3; ++ch) out(0, ch, r, c) = stretched(0, ch, r, c);
      }
    }
  }
  return out;
}

Tensor upscale_baseline(const Tensor& lr, int factor) {
  require_rgb_image(lr, "upscale_baseline input");
  const Shape s = lr.shape();
  const auto f = static_cast<std::size_t>(factor);
  Tensor out({1, 3, s.h * f, s.w * f});
  auto source = [](std::size_t dst, std::size_t size, std::size_t f) {
    const double pos = (static_cast<double>(dst) + 0.5) / static_cast<double>(f) - 0.5;
    const double clamped = std::clamp(pos, 0.0, static_cast<double>(size - 1));
    const auto i0 = static_cast<std::size_t>(clamped);
    const std::size_t i1 = std::min(i0 + 1, size - 1);
    return std::tuple{i0, i1, clamped - static_cast<double>(i0)};
  };
  for (std::size_t r = 0; r < s.h * f; ++r) {
    const auto [y0, y1, wy] = source(r, s.h, f);
    for (std::size_t col = 0; col < s.w * f; ++col) {
      const auto [x0, x1, wx] = source(col, s.w, f);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = lr(0, c, y0, x0) + (lr(0, c, y0, x1) - lr(0, c, y0, x0)) * wx;
        const double bottom = lr(0, c, y1, x0) + (lr(0, c, y1, x1) - lr(0, c, y1, x0)) * wx;
        out(0, c, r, col) = static_cast<float>(top + (bottom - top) * wy);
      }
    }
  }
  return out;
}

ReferencePack ground_truth_references(const Tensor& truth, const Tensor& damaged,
                                      const Tensor& mask, int block) {
  ReferencePack refs;
  refs.lr_reference = downsample_gt(truth, block);
  refs.hr_reference = truth;
  refs.damaged = damaged;
  refs.mask = mask;
  return refs;
}

ReferencePack damaged_input_references(const Tensor& damaged, const Tensor& mask, int block) {
  require_rgb_image(damaged, "damaged image");
  const Shape s = damaged.shape();
  require_mask_like(mask, s.h, s.w, "mask");
  const Tensor block_valid = downsample_gt(mask, block);
  Tensor reference_mask(block_valid.shape());
  for (std::size_t i = 0; i < block_valid.numel(); ++i) {
    reference_mask[i] = block_valid[i] == 1.0f ? 1.0f : 0.0f;
  }
  ReferencePack refs;
  refs.lr_reference = downsample_gt(damaged, block);
  refs.hr_reference = damaged;
  refs.reference_mask = std::move(reference_mask);
  refs.damaged = damaged;
  refs.mask = mask;
  return refs;
}

Tensor decompress(const Tensor& lr_output, const ReferencePack& refs, DecompressMode mode,
                  double threshold, int block) {
  if (mode == DecompressMode::baseline) return upscale_baseline(lr_output, block);
  if (!refs.lr_reference || !refs.hr_reference || !refs.damaged || !refs.mask) {
    throw std::invalid_argument(
        "decompress: selection mode needs lr/hr references, the damaged image and its mask");
  }
  SelectionConfig cfg;
  cfg.block = block;
  cfg.reference_mask = refs.reference_mask;
  const Tensor selected = select_textures(lr_output, *refs.lr_reference, *refs.hr_reference, cfg);
  return finetune(selected, stretch_damaged(*refs.damaged, *refs.mask), threshold);
}

}  // namespace cdnet
