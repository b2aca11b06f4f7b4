#pragma once

#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

/// Weights (out_c, in_c, kh, kw), one bias per output channel, stride and
/// symmetric zero padding.
struct ConvParams {
  Tensor weight;
  std::vector<float> bias;
  int stride = 1;
  int padding = 0;

  /// Square kernel with padding kernel/2, which keeps the output at
  /// ceil(size / stride) for odd kernels.
  static ConvParams make(std::size_t in_channels, std::size_t out_channels, int kernel,
                         int stride);

  [[nodiscard]] std::size_t out_channels() const { return weight.shape().n; }
  [[nodiscard]] std::size_t in_channels() const { return weight.shape().c; }
  [[nodiscard]] std::size_t kernel_h() const { return weight.shape().h; }
  [[nodiscard]] std::size_t kernel_w() const { return weight.shape().w; }
};

struct ConvGrads {
  Tensor grad_input;
  Tensor grad_weight;
  std::vector<float> grad_bias;
};

/// Output shape of the convolution; throws ShapeError if the input does not
/// fit the parameters.
Shape conv2d_output_shape(const Shape& input, const ConvParams& params);

/// Cross-correlation with zero padding. Parallel over output channels and
/// pixel tiles; partial sums accumulate in double.
Tensor conv2d_forward(const Tensor& input, const ConvParams& params);

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& upstream);

namespace reference {

// Direct serial loops. Kept as the oracle for the parallel kernels.
Tensor conv2d_forward(const Tensor& input, const ConvParams& params);
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& upstream);

}  // namespace reference

/// Convolution layer: parameters, their gradients and the cached input
/// needed by backward.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, int kernel, int stride);

  Tensor forward(const Tensor& input);
  /// Accumulates parameter gradients and returns the input gradient.
  Tensor backward(const Tensor& upstream);

  void zero_grad();
  void collect_parameters(const std::string& prefix, std::vector<ParamRef>& out);

  ConvParams params;
  Tensor grad_weight;
  std::vector<float> grad_bias;

 private:
  Tensor input_;
};

}  // namespace cdnet
