#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdnet/conv.hpp"
#include "cdnet/spectral_norm.hpp"

namespace cdnet {

struct DiscriminatorConfig {
  std::vector<std::size_t> channels{64, 128, 256};
  float slope = 0.2f;
};

/// Spectrally normalized patch discriminator: 5x5 stride-2 convs with leaky
/// ReLU, then a 3x3 stride-1 conv to a one-channel score map. Each forward
/// runs one power iteration per layer.
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(DiscriminatorConfig config, std::uint64_t seed = 1);

  Tensor forward(const Tensor& image);
  /// Returns the input gradient; parameter gradients are accumulated only
  /// when `accumulate` is set.
  Tensor backward(const Tensor& grad_output, bool accumulate = true);

  /// Reuse the leaky slopes of the last forward pass (finite-difference
  /// checks); see GatedConv2d::freeze_activation_pattern.
  void freeze_activation_pattern(bool frozen);

  void zero_grad();
  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();

  /// Largest singular value of every normalized weight, by a fresh power
  /// iteration.
  std::vector<double> normalized_singular_values(int iterations = 50) const;

 private:
  struct Layer {
    ConvParams raw;
    Tensor grad_weight;
    std::vector<float> grad_bias;
    PowerVectors vectors;
    bool activation = true;
    // forward cache
    ConvParams normalized;
    double sigma = 0.0;
    Tensor input;
    Tensor pre_activation;
    Tensor frozen_slopes;  // empty unless frozen
  };

  DiscriminatorConfig config_;
  std::vector<Layer> layers_;
};

}  // namespace cdnet
