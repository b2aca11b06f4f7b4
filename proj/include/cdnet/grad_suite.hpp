#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cdnet {

struct GradSuiteEntry {
  std::string name;
  double max_error = 0.0;  // relative, see GradCheckReport
  double tolerance = 0.0;
  [[nodiscard]] bool passed() const { return max_error < tolerance; }
};

/// Finite-difference checks of conv2d, batch_norm, the gated layer, the L1
/// and variance losses (tolerance 1e-3) and the 4/8/8 shrunk network
/// (tolerance 5e-3) on seeded random instances.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 0);

}  // namespace cdnet
