#pragma once

#include <span>
#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

/// Lexicographically ordered *.png files under `root` (or `root/<split>`
/// when that directory exists), decoded to side x side RGB.
struct DatasetIndex {
  std::string root;
  std::string split = "train";
  std::size_t side = 256;
  std::vector<std::string> paths;

  static DatasetIndex scan(const std::string& root, const std::string& split = "train",
                           std::size_t side = 256);

  [[nodiscard]] std::size_t size() const { return paths.size(); }
  [[nodiscard]] Tensor load(std::size_t index) const;
  /// Decodes the given items concurrently into an (n, 3, side, side) batch.
  [[nodiscard]] Tensor load_batch(std::span<const std::size_t> indices) const;
};

/// Sorted *.png paths directly inside `dir`; throws if `dir` is missing.
std::vector<std::string> list_png_files(const std::string& dir);

}  // namespace cdnet
