#include "cdnet/dataset.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>

#include <fmt/format.h>

#include "cdnet/image_io.hpp"

namespace cdnet {

namespace fs = std::filesystem;

std::vector<std::string> list_png_files(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw std::invalid_argument(fmt::format("'{}' is not a directory", dir));
  }
  std::vector<std::string> out;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (ext == ".png") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

DatasetIndex DatasetIndex::scan(const std::string& root, const std::string& split,
                                std::size_t side) {
  DatasetIndex index;
  index.root = root;
  index.split = split;
  index.side = side;
  const fs::path nested = fs::path(root) / split;
  index.paths = list_png_files(fs::is_directory(nested) ? nested.string() : root);
  if (index.paths.empty()) {
    throw std::invalid_argument(fmt::format("no PNG images under '{}'", root));
  }
  return index;
}

Tensor DatasetIndex::load(std::size_t index) const {
  if (index >= paths.size()) {
    throw std::out_of_range(fmt::format("dataset index {} of {}", index, paths.size()));
  }
  return load_image(paths[index], side);
}

Tensor DatasetIndex::load_batch(std::span<const std::size_t> indices) const {
  std::vector<Tensor> items(indices.size());
  std::vector<std::exception_ptr> errors(indices.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < indices.size(); ++i) {
    try {
      items[i] = load(indices[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return stack_batch(items);
}

}  // namespace cdnet
