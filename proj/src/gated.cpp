#include "cdnet/gated.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace cdnet {

GatedConv2d::GatedConv2d(const GatedConfig& config)
    : image_conv(config.in_channels, config.out_channels, config.kernel, config.stride),
      mask_conv(config.mask_in_channels, config.out_channels, config.kernel, config.stride),
      config_(config) {
  if (config.batch_norm) norm.emplace(config.out_channels);
}

StreamPair GatedConv2d::forward(const Tensor& image_feat, const Tensor& mask_feat) {
  const Shape a = image_feat.shape();
  const Shape b = mask_feat.shape();
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError(fmt::format("gated_forward: image stream {} and mask stream {} differ "
                                 "spatially",
                                 a.str(), b.str()));
  }
  pre_activation_ = image_conv.forward(image_feat);
  Tensor feature = pre_activation_;
  if (!frozen_slopes_.empty()) {
    require_same_shape(pre_activation_, frozen_slopes_, "gated_forward frozen pattern");
    feature = multiply(pre_activation_, frozen_slopes_);
  } else if (config_.feature == FeatureActivation::leaky_relu) {
    feature = leaky_relu(pre_activation_, config_.slope);
  }
  if (norm) feature = norm->forward(feature);
  feature_ = std::move(feature);

  Tensor gate = mask_conv.forward(mask_feat);
  if (config_.gate == GateActivation::sigmoid) gate = sigmoid(gate);
  gate_ = gate;

  return {multiply(feature_, gate_), std::move(gate)};
}

StreamPair GatedConv2d::backward(const Tensor& grad_image_out, const Tensor& grad_mask_out) {
  require_same_shape(grad_image_out, gate_, "gated_backward image gradient");
  const bool has_mask_grad = !grad_mask_out.empty();
  if (has_mask_grad) require_same_shape(grad_mask_out, gate_, "gated_backward mask gradient");

  Tensor grad_feature(gate_.shape());
  Tensor grad_gate(gate_.shape());
  for (std::size_t i = 0; i < gate_.numel(); ++i) {
    grad_feature[i] = grad_image_out[i] * gate_[i];
    grad_gate[i] = grad_image_out[i] * feature_[i] + (has_mask_grad ? grad_mask_out[i] : 0.0f);
  }
  if (config_.gate == GateActivation::sigmoid) grad_gate = sigmoid_backward(gate_, grad_gate);
  Tensor grad_mask_in = mask_conv.backward(grad_gate);

  if (norm) grad_feature = norm->backward(grad_feature);
  if (!frozen_slopes_.empty()) {
    grad_feature = multiply(grad_feature, frozen_slopes_);
  } else if (config_.feature == FeatureActivation::leaky_relu) {
    grad_feature = leaky_relu_backward(pre_activation_, grad_feature, config_.slope);
  }
  Tensor grad_image_in = image_conv.backward(grad_feature);
  return {std::move(grad_image_in), std::move(grad_mask_in)};
}

void GatedConv2d::freeze_activation_pattern(bool frozen) {
  if (!frozen) {
    frozen_slopes_ = Tensor();
    return;
  }
  if (pre_activation_.empty()) {
    throw std::logic_error("freeze_activation_pattern: no forward pass yet");
  }
  const Tensor ones(pre_activation_.shape(), 1.0f);
  frozen_slopes_ = config_.feature == FeatureActivation::leaky_relu
                       ? leaky_relu_backward(pre_activation_, ones, config_.slope)
                       : ones;
}

void GatedConv2d::zero_grad() {
  image_conv.zero_grad();
  mask_conv.zero_grad();
  if (norm) norm->zero_grad();
}

void GatedConv2d::collect_parameters(const std::string& prefix, std::vector<ParamRef>& out) {
  image_conv.collect_parameters(prefix, out);
  mask_conv.collect_parameters(prefix + ".gate", out);
  if (norm) norm->collect_parameters(prefix, out);
}

void GatedConv2d::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  if (norm) norm->collect_buffers(prefix, out);
}

void GatedConv2d::set_mode(NormMode mode) {
  if (norm) norm->state.mode = mode;
}

PartialConvLayer PartialConvLayer::make(std::size_t in_channels, std::size_t out_channels,
                                        int kernel, int stride) {
  return {ConvParams::make(in_channels, out_channels, kernel, stride)};
}

bool is_binary(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return v == 0.0f || v == 1.0f; });
}

Tensor partial_mask_update(const Tensor& mask, int kernel_h, int kernel_w, int stride,
                           int padding) {
  const Shape s = mask.shape();
  if (s.c != 1) {
    throw ShapeError(fmt::format("partial mask must have one channel, got c={}", s.c));
  }
  ConvParams window;
  window.weight = Tensor({1, 1, static_cast<std::size_t>(kernel_h),
                          static_cast<std::size_t>(kernel_w)});
  window.bias = {0.0f};
  window.stride = stride;
  window.padding = padding;
  const Shape out_shape = conv2d_output_shape(s, window);
  Tensor out(out_shape);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t oy = 0; oy < out_shape.h; ++oy) {
      for (std::size_t ox = 0; ox < out_shape.w; ++ox) {
        float sum = 0.0f;
        for (int ky = 0; ky < kernel_h; ++ky) {
          const long iy = static_cast<long>(oy) * stride - padding + ky;
          if (iy < 0 || iy >= static_cast<long>(s.h)) continue;
          for (int kx = 0; kx < kernel_w; ++kx) {
            const long ix = static_cast<long>(ox) * stride - padding + kx;
            if (ix < 0 || ix >= static_cast<long>(s.w)) continue;
            sum += mask(n, 0, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
          }
        }
        out(n, 0, oy, ox) = std::min(sum, 1.0f);
      }
    }
  }
  return out;
}

StreamPair partial_forward(const Tensor& image, const Tensor& mask, const PartialConvLayer& layer) {
  const Shape a = image.shape();
  const Shape b = mask.shape();
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError(fmt::format("partial_forward: image {} and mask {} differ spatially", a.str(),
                                 b.str()));
  }
  if (!is_binary(mask)) throw std::invalid_argument("partial_forward: mask is not binary");
  const ConvParams& p = layer.image_conv;
  Tensor window = partial_mask_update(mask, static_cast<int>(p.kernel_h()),
                                      static_cast<int>(p.kernel_w()), p.stride, p.padding);
  Tensor conv = conv2d_forward(image, p);
  return {multiply_broadcast(conv, window), std::move(window)};
}

}  // namespace cdnet
