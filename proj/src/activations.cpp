#include "cdnet/activations.hpp"

#include <cmath>

namespace cdnet {

float leaky_relu(float x, float slope) { return x > 0.0f ? x : slope * x; }

float sigmoid(float x) {
  // Split by sign so exp never overflows; evaluated in double, rounded once.
  const double v = x;
  if (v >= 0.0) return static_cast<float>(1.0 / (1.0 + std::exp(-v)));
  const double e = std::exp(v);
  return static_cast<float>(e / (1.0 + e));
}

Tensor leaky_relu(const Tensor& x, float slope) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = leaky_relu(x[i], slope);
  return out;
}

Tensor leaky_relu_backward(const Tensor& input, const Tensor& upstream, float slope) {
  require_same_shape(input, upstream, "leaky_relu_backward");
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    out[i] = input[i] > 0.0f ? upstream[i] : slope * upstream[i];
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream) {
  require_same_shape(output, upstream, "sigmoid_backward");
  Tensor out(output.shape());
  for (std::size_t i = 0; i < output.numel(); ++i) {
    const double y = output[i];
    out[i] = static_cast<float>(upstream[i] * (y * (1.0 - y)));
  }
  return out;
}

Tensor elementwise_add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise_add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

AddGrads elementwise_add_backward(const Tensor& upstream) { return {upstream, upstream}; }

}  // namespace cdnet
