#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdnet {

/// Raised when tensor shapes do not line up. The message names the
/// offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  [[nodiscard]] std::size_t numel() const { return n * c * h * w; }
  [[nodiscard]] std::size_t plane() const { return h * w; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense (n, c, h, w) float tensor, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t numel() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] float* data() { return data_.data(); }
  [[nodiscard]] const float* data() const { return data_.data(); }
  [[nodiscard]] std::span<float> values() { return data_; }
  [[nodiscard]] std::span<const float> values() const { return data_; }
  [[nodiscard]] const std::vector<float>& storage() const { return data_; }

  [[nodiscard]] std::size_t offset(std::size_t n, std::size_t c, std::size_t h,
                                   std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  float& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  float operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the (n, c) image plane.
  [[nodiscard]] float* plane(std::size_t n, std::size_t c) {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }
  [[nodiscard]] const float* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  void fill(float value);
  [[nodiscard]] bool all_finite() const;

  /// Copies item `index` of the batch into a (1, c, h, w) tensor.
  [[nodiscard]] Tensor item(std::size_t index) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what);

/// Stacks (1, c, h, w) tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

/// Elementwise a * b (Hadamard).
Tensor multiply(const Tensor& a, const Tensor& b);

/// Multiplies every channel of `a` by the single-channel `mask`.
Tensor multiply_broadcast(const Tensor& a, const Tensor& mask);

double max_abs_difference(const Tensor& a, const Tensor& b);

/// A learnable parameter exposed by a layer: value and gradient views plus
/// the logical dimensions used for serialization.
struct ParamRef {
  std::string name;
  std::span<float> value;
  std::span<float> grad;
  std::vector<std::uint32_t> dims;
};

/// Non-learnable persistent state (batch-norm running statistics, power
/// iteration vectors).
struct BufferRef {
  std::string name;
  std::span<float> value;
  std::vector<std::uint32_t> dims;
};

}  // namespace cdnet
