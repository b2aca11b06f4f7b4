#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cdnet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every tunable of a run. Text form: `key = value` per line, `#` starts a
/// comment. Unknown keys and malformed values are rejected.
struct RunConfig {
  std::uint64_t seed = 1;

  std::string data_dir;
  std::string split = "train";
  std::string out_dir = "run";
  std::string architecture;  // empty: the full-size network
  std::string resume;
  std::size_t image_size = 256;

  std::uint64_t steps = 1000;
  std::size_t batch_size = 4;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double d_lr = 2e-4;
  std::vector<std::size_t> disc_channels{64, 128, 256};

  double w_l1 = 1.0;
  double w_var = 0.1;
  double w_gan = 0.1;

  double mask_fraction = 0.30;
  double threshold = 0.15;
  std::string gate = "sigmoid";
  double slope = 0.2;
  std::string mode = "selection";

  std::uint64_t checkpoint_every = 500;
  std::uint64_t log_every = 1;

  /// Sets one key from its text value.
  void set(std::string_view key, std::string_view value);
  /// Canonical `key = value` text, keys in a fixed order.
  [[nodiscard]] std::string to_text() const;

  static RunConfig parse(std::istream& in);
  static RunConfig load(const std::string& path);
  static const std::vector<std::string>& keys();
};

/// Applies `key=value` overrides in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// SplitMix64 finalizer.
std::uint64_t mix_seed(std::uint64_t x);

/// Per-component seed: mix_seed(global ^ FNV-1a(component)).
std::uint64_t derive_seed(std::uint64_t global, std::string_view component);

}  // namespace cdnet
