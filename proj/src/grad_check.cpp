#include "cdnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cdnet {

GradCheckReport check_gradient(std::span<float> values, std::span<const float> analytic,
                               const std::function<double()>& loss, double step,
                               std::size_t max_coords, std::uint64_t seed) {
  if (values.size() != analytic.size()) {
    throw ShapeError("check_gradient: analytic gradient length differs from values");
  }
  std::vector<std::size_t> coords(values.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (coords.size() > max_coords) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }

  std::vector<double> numeric(coords.size());
  for (std::size_t k = 0; k < coords.size(); ++k) {
    float& v = values[coords[k]];
    const float original = v;
    const float plus = static_cast<float>(original + step);
    const float minus = static_cast<float>(original - step);
    v = plus;
    const double lp = loss();
    v = minus;
    const double lm = loss();
    v = original;
    // The realised float step, not the nominal one.
    numeric[k] = (lp - lm) / (static_cast<double>(plus) - static_cast<double>(minus));
  }

  double scale = 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const double a = analytic[coords[k]];
    scale = std::max({scale, std::abs(a), std::abs(numeric[k])});
    worst = std::max(worst, std::abs(a - numeric[k]));
  }
  GradCheckReport report;
  report.checked = coords.size();
  report.max_abs_diff = worst;
  report.max_error = scale > 0.0 ? worst / scale : 0.0;
  return report;
}

GradCheckReport grad_check(const ForwardFn& f, const BackwardFn& backward, const Tensor& x,
                           double step, std::uint64_t seed, std::size_t max_coords) {
  Tensor probe = x;
  const Tensor y = f(probe);
  const Tensor r = random_normal(y.shape(), seed ^ 0x9e3779b97f4a7c15ULL);
  const Tensor analytic = backward(probe, r);
  require_same_shape(analytic, x, "grad_check analytic gradient");
  return check_gradient(
      probe.values(), analytic.values(), [&] { return dot(r, f(probe)); }, step, max_coords,
      seed);
}

Tensor random_normal(Shape shape, std::uint64_t seed, float stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, stddev);
  Tensor t(shape);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

Tensor random_uniform(Shape shape, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(shape);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

double dot(const Tensor& r, const Tensor& t) {
  require_same_shape(r, t, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < r.numel(); ++i) s += static_cast<double>(r[i]) * t[i];
  return s;
}

}  // namespace cdnet
