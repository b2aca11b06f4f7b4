#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "cdnet/tensor.hpp"

namespace cdnet {

struct GradCheckReport {
  // max_i |analytic_i - numeric_i| / max_j max(|analytic_j|, |numeric_j|)
  double max_error = 0.0;
  double max_abs_diff = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of `analytic` = d loss / d values. `loss` must
/// read `values`, which are perturbed in place and restored. When there are
/// more than `max_coords` entries a seeded random subset is checked.
GradCheckReport check_gradient(std::span<float> values, std::span<const float> analytic,
                               const std::function<double()>& loss, double step,
                               std::size_t max_coords = 4096, std::uint64_t seed = 7);

using ForwardFn = std::function<Tensor(const Tensor&)>;
using BackwardFn = std::function<Tensor(const Tensor& input, const Tensor& upstream)>;

/// Projects f onto a random upstream vector r (L = <r, f(x)>) and compares
/// backward(x, r) against central differences of L.
GradCheckReport grad_check(const ForwardFn& f, const BackwardFn& backward, const Tensor& x,
                           double step = 1e-3, std::uint64_t seed = 7,
                           std::size_t max_coords = 4096);

/// Deterministic normal(0, stddev) tensor.
Tensor random_normal(Shape shape, std::uint64_t seed, float stddev = 1.0f);
/// Deterministic uniform[lo, hi) tensor.
Tensor random_uniform(Shape shape, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f);

/// <r, t> accumulated in double.
double dot(const Tensor& r, const Tensor& t);

}  // namespace cdnet
