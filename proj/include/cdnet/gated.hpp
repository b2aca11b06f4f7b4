#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cdnet/activations.hpp"
#include "cdnet/batch_norm.hpp"
#include "cdnet/conv.hpp"

namespace cdnet {

enum class GateActivation { sigmoid, identity };
enum class FeatureActivation { leaky_relu, identity };

struct GatedConfig {
  std::size_t in_channels = 3;
  std::size_t mask_in_channels = 1;
  std::size_t out_channels = 8;
  int kernel = 3;
  int stride = 1;
  GateActivation gate = GateActivation::sigmoid;
  FeatureActivation feature = FeatureActivation::leaky_relu;
  float slope = kDefaultLeakySlope;
  bool batch_norm = false;  // applied after the feature activation
};

struct StreamPair {
  Tensor image;
  Tensor mask;
};

/// Gated convolution:
///   gate      = gate_act(conv(mask_feat; mask_conv))
///   image_out = [norm](feature_act(conv(image_feat; image_conv))) * gate
///   mask_out  = gate
/// The mask stream carries the learned gate into the next layer.
class GatedConv2d {
 public:
  GatedConv2d() = default;
  explicit GatedConv2d(const GatedConfig& config);

  StreamPair forward(const Tensor& image_feat, const Tensor& mask_feat);
  /// Takes gradients w.r.t. both outputs (an empty mask gradient means
  /// zero), accumulates parameter gradients, returns input gradients.
  StreamPair backward(const Tensor& grad_image_out, const Tensor& grad_mask_out);

  void zero_grad();
  void collect_parameters(const std::string& prefix, std::vector<ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out);
  void set_mode(NormMode mode);
  /// While frozen, the leaky feature activation reuses the per-unit slopes of
  /// the last forward pass, which makes the layer smooth in its inputs and
  /// parameters. Used by finite-difference checks.
  void freeze_activation_pattern(bool frozen);

  [[nodiscard]] const GatedConfig& config() const { return config_; }

  Conv2d image_conv;
  Conv2d mask_conv;
  std::optional<BatchNorm2d> norm;

 private:
  GatedConfig config_;
  Tensor pre_activation_;  // image_conv output
  Tensor feature_;         // after activation and norm
  Tensor gate_;
  Tensor frozen_slopes_;  // empty unless frozen
};

/// Partial convolution with the sliding-window mask rule
///   window_out = min(sum(mask under kernel), 1)
///   image_out  = conv(image) * window_out
/// No valid-count renormalization.
struct PartialConvLayer {
  ConvParams image_conv;

  static PartialConvLayer make(std::size_t in_channels, std::size_t out_channels, int kernel,
                               int stride);
};

StreamPair partial_forward(const Tensor& image, const Tensor& mask, const PartialConvLayer& layer);

/// Just the mask update of partial_forward.
Tensor partial_mask_update(const Tensor& mask, int kernel_h, int kernel_w, int stride, int padding);

bool is_binary(const Tensor& t);

}  // namespace cdnet
