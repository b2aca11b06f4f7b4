#include "cdnet/discriminator.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "cdnet/activations.hpp"

namespace cdnet {

Discriminator::Discriminator(DiscriminatorConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  std::mt19937_64 rng(seed);
  std::size_t in_c = 3;
  auto add = [&](std::size_t out_c, int kernel, int stride, bool activation) {
    Layer layer;
    layer.raw = ConvParams::make(in_c, out_c, kernel, stride);
    const double fan_in = static_cast<double>(in_c) * kernel * kernel;
    std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
    for (float& w : layer.raw.weight.values()) w = dist(rng);
    layer.grad_weight = Tensor(layer.raw.weight.shape());
    layer.grad_bias.assign(out_c, 0.0f);
    layer.vectors = PowerVectors::random(out_c, in_c * kernel * kernel, rng());
    layer.activation = activation;
    layers_.push_back(std::move(layer));
    in_c = out_c;
  };
  for (std::size_t c : config_.channels) add(c, 5, 2, true);
  add(1, 3, 1, false);
}

Tensor Discriminator::forward(const Tensor& image) {
  Tensor x = image;
  for (Layer& layer : layers_) {
    SpectralNormResult sn = spectral_normalize(layer.raw.weight, layer.vectors, 1);
    layer.sigma = sn.sigma;
    layer.normalized = layer.raw;
    layer.normalized.weight = std::move(sn.weight);
    layer.input = x;
    layer.pre_activation = conv2d_forward(x, layer.normalized);
    if (!layer.frozen_slopes.empty()) {
      require_same_shape(layer.pre_activation, layer.frozen_slopes, "discriminator frozen pattern");
      x = multiply(layer.pre_activation, layer.frozen_slopes);
    } else {
      x = layer.activation ? leaky_relu(layer.pre_activation, config_.slope) : layer.pre_activation;
    }
  }
  return x;
}

Tensor Discriminator::backward(const Tensor& grad_output, bool accumulate) {
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    Layer& layer = *it;
    if (!layer.frozen_slopes.empty()) {
      g = multiply(g, layer.frozen_slopes);
    } else if (layer.activation) {
      g = leaky_relu_backward(layer.pre_activation, g, config_.slope);
    }
    ConvGrads cg = conv2d_backward(layer.input, layer.normalized, g);
    if (accumulate) {
      const Tensor raw = spectral_norm_backward(cg.grad_weight, layer.normalized.weight,
                                                layer.vectors, layer.sigma);
      for (std::size_t i = 0; i < raw.numel(); ++i) layer.grad_weight[i] += raw[i];
      for (std::size_t i = 0; i < cg.grad_bias.size(); ++i) layer.grad_bias[i] += cg.grad_bias[i];
    }
    g = std::move(cg.grad_input);
  }
  return g;
}

void Discriminator::freeze_activation_pattern(bool frozen) {
  for (Layer& layer : layers_) {
    if (!frozen) {
      layer.frozen_slopes = Tensor();
      continue;
    }
    if (layer.pre_activation.empty()) {
      throw std::logic_error("freeze_activation_pattern: no forward pass yet");
    }
    const Tensor ones(layer.pre_activation.shape(), 1.0f);
    layer.frozen_slopes =
        layer.activation ? leaky_relu_backward(layer.pre_activation, ones, config_.slope) : ones;
  }
}

void Discriminator::zero_grad() {
  for (Layer& l : layers_) {
    l.grad_weight.fill(0.0f);
    std::fill(l.grad_bias.begin(), l.grad_bias.end(), 0.0f);
  }
}

std::vector<ParamRef> Discriminator::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    const Shape& s = l.raw.weight.shape();
    const std::string prefix = fmt::format("D.Conv_{}", i);
    out.push_back({prefix + ".weight", l.raw.weight.values(), l.grad_weight.values(),
                   {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                    static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)}});
    out.push_back({prefix + ".bias", l.raw.bias, l.grad_bias,
                   {static_cast<std::uint32_t>(l.raw.bias.size())}});
  }
  return out;
}

std::vector<BufferRef> Discriminator::buffers() {
  std::vector<BufferRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = layers_[i];
    const std::string prefix = fmt::format("D.Conv_{}", i);
    out.push_back({prefix + ".sn_u", l.vectors.u, {static_cast<std::uint32_t>(l.vectors.u.size())}});
    out.push_back({prefix + ".sn_v", l.vectors.v, {static_cast<std::uint32_t>(l.vectors.v.size())}});
  }
  return out;
}

std::vector<double> Discriminator::normalized_singular_values(int iterations) const {
  std::vector<double> out;
  for (const Layer& l : layers_) {
    PowerVectors v = l.vectors;
    SpectralNormResult sn = spectral_normalize(l.raw.weight, v, 1);
    out.push_back(estimate_top_singular_value(sn.weight, v, iterations));
  }
  return out;
}

}  // namespace cdnet
