#include "cdnet/trainer.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "cdnet/losses.hpp"

namespace cdnet {

Trainer::Trainer(Network& net, LossWeights weights, AdamConfig generator_config,
                 Discriminator* discriminator, AdamConfig discriminator_config)
    : net_(net),
      disc_(discriminator),
      weights_(weights),
      gen_opt_(generator_config),
      disc_opt_(discriminator_config) {
  if (weights.l1 < 0 || weights.var < 0 || weights.gan < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (weights.l1 == 0 && weights.var == 0 && weights.gan == 0) {
    throw std::invalid_argument("at least one loss weight must be positive");
  }
}

LossReport Trainer::step(const TrainBatch& batch) {
  LossReport report;
  report.step = step_ + 1;

  net_.set_mode(NormMode::training);
  net_.zero_grad();
  const Tensor output = net_.forward(batch.images, batch.masks);
  const Tensor target =
      batch.targets ? *batch.targets : downsample_gt(batch.images, net_.downsample_factor());
  require_same_shape(output, target, "train_step target");

  report.l1 = l1_loss(output, target);
  report.var = variance_loss(output);
  Tensor grad = l1_loss_backward(output, target);
  for (float& g : grad.values()) g = static_cast<float>(g * weights_.l1);
  const Tensor var_grad = variance_loss_backward(output);
  for (std::size_t i = 0; i < grad.numel(); ++i) {
    grad[i] += static_cast<float>(weights_.var * var_grad[i]);
  }

  const bool adversarial = disc_ != nullptr && weights_.gan > 0.0;
  if (adversarial) {
    disc_->zero_grad();
    const Tensor d_real = disc_->forward(target);
    const Tensor real_grad = gan_discriminator_backward(d_real, d_real).grad_real;
    disc_->backward(real_grad);
    const Tensor d_fake = disc_->forward(output);
    report.gan_d = gan_losses(d_real, d_fake).loss_d;
    disc_->backward(gan_discriminator_backward(d_real, d_fake).grad_fake);

    const Tensor d_fake_g = disc_->forward(output);
    report.gan_g = gan_losses(d_fake_g, d_fake_g).loss_g;
    const Tensor through =
        disc_->backward(gan_generator_backward(d_fake_g), /*accumulate=*/false);
    for (std::size_t i = 0; i < grad.numel(); ++i) {
      grad[i] += static_cast<float>(weights_.gan * through[i]);
    }
  }

  report.total = weights_.l1 * report.l1 + weights_.var * report.var +
                 (adversarial ? weights_.gan * report.gan_g : 0.0);
  if (!std::isfinite(report.total) || !std::isfinite(report.gan_d)) {
    report.skipped = true;
    report.reason = "non-finite loss";
    return report;
  }

  net_.backward(grad);
  try {
    if (adversarial) {
      const std::vector<ParamRef> dp = disc_->parameters();
      disc_opt_.step(dp);
    }
    const std::vector<ParamRef> gp = net_.parameters();
    gen_opt_.step(gp);
  } catch (const NonFiniteGradient& e) {
    report.skipped = true;
    report.reason = e.what();
    return report;
  }
  ++step_;
  return report;
}

std::string format_log_line(const LossReport& r) {
  return fmt::format("{} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f}{}", r.step, r.l1, r.var, r.gan_g,
                     r.gan_d, r.total, r.skipped ? " skipped" : "");
}

}  // namespace cdnet
