#pragma once

#include "cdnet/tensor.hpp"

namespace cdnet {

/// Box average over factor x factor blocks per channel. The thumbnail target
/// for the compression network (factor 8: 256 -> 32).
Tensor downsample_gt(const Tensor& image, int factor = 8);

double l1_loss(const Tensor& a, const Tensor& b);
double l2_loss(const Tensor& a, const Tensor& b);
/// Gradients w.r.t. `a`. sign(0) = 0.
Tensor l1_loss_backward(const Tensor& a, const Tensor& b);
Tensor l2_loss_backward(const Tensor& a, const Tensor& b);

/// Mean over (n, c) and interior pixels of (pixel - mean of its 3x3
/// neighbourhood, centre included)^2.
double variance_loss(const Tensor& image);
Tensor variance_loss_backward(const Tensor& image);

struct GanLosses {
  double loss_d = 0.0;
  double loss_g = 0.0;
};

/// Hinge losses on patch score maps:
///   loss_d = mean(relu(1 - d_real)) + mean(relu(1 + d_fake))
///   loss_g = -mean(d_fake)
GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake);

struct GanDiscriminatorGrads {
  Tensor grad_real;
  Tensor grad_fake;
};
GanDiscriminatorGrads gan_discriminator_backward(const Tensor& d_real, const Tensor& d_fake);
Tensor gan_generator_backward(const Tensor& d_fake);

}  // namespace cdnet
