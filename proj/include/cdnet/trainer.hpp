#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cdnet/adam.hpp"
#include "cdnet/discriminator.hpp"
#include "cdnet/network.hpp"

namespace cdnet {

struct LossWeights {
  double l1 = 1.0;
  double var = 0.1;
  double gan = 0.1;
};

/// Raw (unweighted) loss components of one step. total is the weighted sum
/// of the generator terms.
struct LossReport {
  std::uint64_t step = 0;
  double l1 = 0.0;
  double var = 0.0;
  double gan_g = 0.0;
  double gan_d = 0.0;
  double total = 0.0;
  bool skipped = false;
  std::string reason;
};

struct TrainBatch {
  Tensor images;  // (n, 3, H, W) in [0, 1]
  Tensor masks;   // (n, 1, H, W) binary
  /// Thumbnail targets; defaults to downsample_gt(images).
  std::optional<Tensor> targets;
};

/// Owns the optimizer state for one generator and an optional
/// discriminator. Each step: generator forward, discriminator update on
/// (target, detached output), then one generator Adam step on
///   w_l1 * L1 + w_var * variance + w_gan * hinge_g.
class Trainer {
 public:
  Trainer(Network& net, LossWeights weights, AdamConfig generator_config = {},
          Discriminator* discriminator = nullptr, AdamConfig discriminator_config = {});

  LossReport step(const TrainBatch& batch);

  [[nodiscard]] const LossWeights& weights() const { return weights_; }
  Adam& generator_optimizer() { return gen_opt_; }
  Adam& discriminator_optimizer() { return disc_opt_; }
  [[nodiscard]] std::uint64_t steps() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

 private:
  Network& net_;
  Discriminator* disc_;
  LossWeights weights_;
  Adam gen_opt_;
  Adam disc_opt_;
  std::uint64_t step_ = 0;
};

/// `step l1 var gan_g gan_d total`, space separated.
std::string format_log_line(const LossReport& report);

}  // namespace cdnet
