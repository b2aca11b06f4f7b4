#pragma once

#include <optional>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

struct PixelIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

struct SelectionConfig {
  int block = 8;
  /// Optional (1, 1, h, w) binary mask over the low-resolution reference;
  /// only pixels with value 1 are candidates.
  std::optional<Tensor> reference_mask;
};

inline constexpr double kDefaultFinetuneThreshold = 0.15;

/// Sum of absolute RGB differences between pixel (ay, ax) of `a` and
/// (by, bx) of `b`.
double pixel_loss(const Tensor& a, std::size_t ay, std::size_t ax, const Tensor& b,
                  std::size_t by, std::size_t bx);

/// Exhaustive argmin over every candidate (i, j) of the reference, ties to
/// the smallest row-major index.
PixelIndex find_similar_pixel(const Tensor& lr_output, const Tensor& lr_reference, int x, int y,
                              const SelectionConfig& cfg = {});

/// Candidate index sorted by RGB channel sum. Because
/// |sum(a) - sum(b)| <= L1(a, b), a query only scans outward from its own
/// sum until the sum gap exceeds the best loss seen. Returns exactly the
/// exhaustive-scan answer, tie-break included.
class SimilarPixelIndex {
 public:
  SimilarPixelIndex(const Tensor& lr_reference, const std::optional<Tensor>& reference_mask);

  [[nodiscard]] PixelIndex find(const Tensor& lr_output, std::size_t x, std::size_t y) const;
  [[nodiscard]] std::size_t candidate_count() const { return candidates_.size(); }

 private:
  struct Candidate {
    double sum;
    std::uint32_t order;  // row-major index in the reference
    float rgb[3];
  };
  std::vector<Candidate> candidates_;
  std::size_t width_ = 0;
};

/// Nearest reference pixel for every low-resolution output pixel, row-major.
/// Parallel over output pixels.
std::vector<PixelIndex> match_all(const Tensor& lr_output, const Tensor& lr_reference,
                                  const SelectionConfig& cfg = {});

/// For every (x, y): copy the block x block tile of hr_reference anchored at
/// (i * block, j * block) to (x * block, y * block) in the output.
Tensor select_textures(const Tensor& lr_output, const Tensor& lr_reference,
                       const Tensor& hr_reference, const SelectionConfig& cfg = {});

/// Copies blocks for an already computed match list.
Tensor copy_blocks(const std::vector<PixelIndex>& matches, const Tensor& hr_reference,
                   std::size_t lr_h, std::size_t lr_w, int block);

namespace reference {

// Serial exhaustive scan per pixel; the oracle for match_all/select_textures.
std::vector<PixelIndex> match_all(const Tensor& lr_output, const Tensor& lr_reference,
                                  const SelectionConfig& cfg = {});
Tensor select_textures(const Tensor& lr_output, const Tensor& lr_reference,
                       const Tensor& hr_reference, const SelectionConfig& cfg = {});

}  // namespace reference

struct BoundingBox {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Tight bounding box of the 1-pixels of a (1, 1, h, w) mask.
BoundingBox valid_bounding_box(const Tensor& mask);

/// Crops the valid bounding box and resamples it bilinearly to the full
/// frame. Output column c samples source column c * (box_w / w), clamped at
/// the last column; rows alike.
Tensor stretch_damaged(const Tensor& image, const Tensor& mask);

/// Per pixel: take `stretched` where pixel_loss(hr_output, stretched) < t.
Tensor finetune(const Tensor& hr_output, const Tensor& stretched, double threshold);

/// Bilinear x factor upscaling with half-pixel centres, edge clamped.
Tensor upscale_baseline(const Tensor& lr, int factor = 8);

enum class DecompressMode { selection, baseline };

struct ReferencePack {
  std::optional<Tensor> lr_reference;
  std::optional<Tensor> hr_reference;
  std::optional<Tensor> reference_mask;
  std::optional<Tensor> damaged;
  std::optional<Tensor> mask;
};

/// References taken from the ground truth image.
ReferencePack ground_truth_references(const Tensor& truth, const Tensor& damaged,
                                      const Tensor& mask, int block = 8);

/// References taken from the damaged input only: candidates are thumbnail
/// pixels whose whole block is valid.
ReferencePack damaged_input_references(const Tensor& damaged, const Tensor& mask, int block = 8);

/// selection: select_textures then finetune against stretch_damaged.
/// baseline: upscale_baseline; references are ignored.
Tensor decompress(const Tensor& lr_output, const ReferencePack& refs, DecompressMode mode,
                  double threshold = kDefaultFinetuneThreshold, int block = 8);

}  // namespace cdnet
