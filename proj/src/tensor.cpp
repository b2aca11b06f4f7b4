#include "cdnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace cdnet {

std::string Shape::str() const { return fmt::format("({}, {}, {}, {})", n, c, h, w); }

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError(fmt::format("tensor data length {} does not match shape {}", data_.size(),
                                 shape_.str()));
  }
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::item(std::size_t index) const {
  if (index >= shape_.n) {
    throw ShapeError(fmt::format("batch index {} out of range for n={}", index, shape_.n));
  }
  const std::size_t stride = shape_.c * shape_.plane();
  Tensor out({1, shape_.c, shape_.h, shape_.w});
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index * stride), stride, out.data());
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  const Shape& x = a.shape();
  const Shape& y = b.shape();
  if (x == y) return;
  const char* dim = x.n != y.n ? "n" : x.c != y.c ? "c" : x.h != y.h ? "h" : "w";
  throw ShapeError(fmt::format("{}: shape mismatch in dimension {}: {} vs {}", what, dim, x.str(),
                               y.str()));
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  const Shape first = items.front().shape();
  Shape out_shape{0, first.c, first.h, first.w};
  for (const Tensor& t : items) {
    const Shape s = t.shape();
    if (s.c != first.c || s.h != first.h || s.w != first.w) {
      throw ShapeError(fmt::format("stack_batch: item shape {} differs from {}", s.str(),
                                   first.str()));
    }
    out_shape.n += s.n;
  }
  std::vector<float> data;
  data.reserve(out_shape.numel());
  for (const Tensor& t : items) data.insert(data.end(), t.values().begin(), t.values().end());
  return Tensor(out_shape, std::move(data));
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "multiply");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor multiply_broadcast(const Tensor& a, const Tensor& mask) {
  const Shape s = a.shape();
  const Shape m = mask.shape();
  if (m.c != 1 || m.n != s.n || m.h != s.h || m.w != s.w) {
    throw ShapeError(fmt::format("multiply_broadcast: mask {} incompatible with {}", m.str(),
                                 s.str()));
  }
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    const float* mp = mask.plane(n, 0);
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = a.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] * mp[i];
    }
  }
  return out;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_difference");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
  }
  return worst;
}

}  // namespace cdnet
