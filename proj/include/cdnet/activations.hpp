#pragma once

#include "cdnet/tensor.hpp"

namespace cdnet {

inline constexpr float kDefaultLeakySlope = 0.2f;

float leaky_relu(float x, float slope = kDefaultLeakySlope);
float sigmoid(float x);

Tensor leaky_relu(const Tensor& x, float slope = kDefaultLeakySlope);
/// Derivative taken at the forward *input*; 1 at x > 0, slope otherwise.
Tensor leaky_relu_backward(const Tensor& input, const Tensor& upstream,
                           float slope = kDefaultLeakySlope);

Tensor sigmoid(const Tensor& x);
/// Uses the forward *output* y: dy/dx = y (1 - y).
Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream);

Tensor elementwise_add(const Tensor& a, const Tensor& b);

struct AddGrads {
  Tensor grad_a;
  Tensor grad_b;
};
AddGrads elementwise_add_backward(const Tensor& upstream);

}  // namespace cdnet
