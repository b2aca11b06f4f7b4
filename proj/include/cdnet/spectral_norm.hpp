#pragma once

#include <cstdint>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

/// Power-iteration state for a weight viewed as an (out_c x rest) matrix.
struct PowerVectors {
  std::vector<float> u;  // length rows
  std::vector<float> v;  // length cols

  static PowerVectors random(std::size_t rows, std::size_t cols, std::uint64_t seed);
};

struct SpectralNormResult {
  Tensor weight;       // weight / sigma
  double sigma = 0.0;  // u^T W v after the update
};

/// Runs `iterations` power-iteration updates of (u, v) and divides the
/// weight by the resulting top-singular-value estimate. A zero matrix is
/// returned unchanged with sigma 0.
SpectralNormResult spectral_normalize(const Tensor& weight, PowerVectors& vectors,
                                      int iterations = 1);

/// Gradient w.r.t. the raw weight given the gradient w.r.t. the normalized
/// one, treating u and v as constants:
///   dW = (G - <G, W_sn> u v^T) / sigma
Tensor spectral_norm_backward(const Tensor& grad_normalized, const Tensor& normalized,
                              const PowerVectors& vectors, double sigma);

/// Estimate of the largest singular value by repeated power iteration on a
/// copy of `vectors`.
double estimate_top_singular_value(const Tensor& weight, PowerVectors vectors, int iterations);

}  // namespace cdnet
