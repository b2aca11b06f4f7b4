#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Thrown when a gradient contains NaN or Inf; the optimizer state is left
/// untouched.
class NonFiniteGradient : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Bias-corrected Adam. Moments are kept per parameter in the order the
/// parameters are passed, sized on the first step.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(std::span<const ParamRef> params);

  [[nodiscard]] const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  [[nodiscard]] std::uint64_t steps() const { return t_; }

  // Checkpoint access.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  void restore(std::uint64_t t, std::vector<std::vector<float>> m,
               std::vector<std::vector<float>> v);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

}  // namespace cdnet
