#include "cdnet/grad_suite.hpp"

#include <algorithm>
#include <cmath>

#include "cdnet/batch_norm.hpp"
#include "cdnet/conv.hpp"
#include "cdnet/gated.hpp"
#include "cdnet/grad_check.hpp"
#include "cdnet/losses.hpp"
#include "cdnet/network.hpp"

namespace cdnet {
namespace {

ConvParams random_conv(std::size_t in_c, std::size_t out_c, int kernel, int stride, std::uint64_t seed) {
  ConvParams p = ConvParams::make(in_c, out_c, kernel, stride);
  p.weight = random_normal(p.weight.shape(), seed, 0.5f);
  const Tensor b = random_normal({1, out_c, 1, 1}, seed + 1, 0.1f);
  p.bias.assign(b.values().begin(), b.values().end());
  return p;
}

std::vector<std::vector<float>> copy_grads(const std::vector<ParamRef>& params) {
  std::vector<std::vector<float>> out;
  for (const ParamRef& p : params) out.emplace_back(p.grad.begin(), p.grad.end());
  return out;
}

double conv_error(std::uint64_t base) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ConvParams p = random_conv(2, 3, seed % 2 ? 5 : 3, seed % 3 ? 1 : 2, base + 10 + seed);
    Tensor x = random_normal({2, 2, 7, 6}, base + 20 + seed);
    const Tensor r = random_normal(conv2d_output_shape(x.shape(), p), base + 30 + seed);
    const ConvGrads g = conv2d_backward(x, p, r);
    auto loss = [&] { return dot(r, conv2d_forward(x, p)); };
    worst = std::max({worst, check_gradient(x.values(), g.grad_input.values(), loss, 1e-3).max_error,
                      check_gradient(p.weight.values(), g.grad_weight.values(), loss, 1e-3).max_error,
                      check_gradient(p.bias, g.grad_bias, loss, 1e-3).max_error});
  }
  return worst;
}

double batch_norm_error(std::uint64_t base) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    BatchNormState st(2);
    st.gamma = {1.3f, 0.6f};
    st.beta = {0.2f, -0.4f};
    Tensor x = random_normal({2, 2, 3, 4}, base + 40 + seed);
    const Tensor r = random_normal(x.shape(), base + 50 + seed);
    BatchNormState s = st;
    BatchNormCache cache;
    batch_norm(x, s, &cache);
    const BatchNormGrads g = batch_norm_backward(r, s, cache);
    auto loss = [&] {
      BatchNormState t = st;
      return dot(r, batch_norm(x, t));
    };
    worst = std::max({worst, check_gradient(x.values(), g.grad_input.values(), loss, 1e-3).max_error,
                      check_gradient(st.gamma, g.grad_gamma, loss, 1e-3).max_error,
                      check_gradient(st.beta, g.grad_beta, loss, 1e-3).max_error});
  }
  return worst;
}

double gated_error(std::uint64_t base) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    GatedConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 3;
    cfg.stride = 1 + static_cast<int>(seed % 2);
    cfg.gate = seed == 3 ? GateActivation::identity : GateActivation::sigmoid;
    cfg.batch_norm = seed % 2 == 0;
    GatedConv2d layer(cfg);
    layer.image_conv.params = random_conv(2, 3, 3, cfg.stride, base + 60 + seed);
    layer.mask_conv.params = random_conv(1, 3, 3, cfg.stride, base + 70 + seed);
    Tensor x = random_normal({2, 2, 8, 8}, base + 80 + seed);
    Tensor m = random_uniform({2, 1, 8, 8}, base + 90 + seed);
    const StreamPair out = layer.forward(x, m);
    const Tensor r1 = random_normal(out.image.shape(), base + 100 + seed);
    const Tensor r2 = random_normal(out.mask.shape(), base + 110 + seed);
    layer.zero_grad();
    const StreamPair g = layer.backward(r1, r2);
    std::vector<ParamRef> params;
    layer.collect_parameters("L", params);
    const auto grads = copy_grads(params);
    layer.freeze_activation_pattern(true);
    auto loss = [&] {
      const StreamPair o = layer.forward(x, m);
      return dot(r1, o.image) + dot(r2, o.mask);
    };
    worst = std::max({worst, check_gradient(x.values(), g.image.values(), loss, 1e-3).max_error,
                      check_gradient(m.values(), g.mask.values(), loss, 1e-3).max_error});
    for (std::size_t i = 0; i < params.size(); ++i) {
      worst = std::max(worst, check_gradient(params[i].value, grads[i], loss, 1e-3).max_error);
    }
  }
  return worst;
}

double l1_error(std::uint64_t base) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Tensor a = random_uniform({2, 3, 5, 5}, base + 120 + seed);
    const Tensor b = random_uniform({2, 3, 5, 5}, base + 130 + seed);
    for (std::size_t i = 0; i < a.numel(); ++i) {
      if (std::abs(a[i] - b[i]) < 0.01f) a[i] += 0.05f;
    }
    worst = std::max(worst, check_gradient(a.values(), l1_loss_backward(a, b).values(),
                                           [&] { return l1_loss(a, b); }, 1e-3)
                                .max_error);
  }
  return worst;
}

double variance_error(std::uint64_t base) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Tensor image = random_uniform({2, 3, 6, 7}, base + 140 + seed);
    const Tensor g = variance_loss_backward(image);
    worst = std::max(worst, check_gradient(image.values(), g.values(),
                                           [&] { return variance_loss(image); }, 1e-3)
                                .max_error);
  }
  return worst;
}

double network_error(std::uint64_t base) {
  Network net = Network::build(scaled_spec(4, 8, 8));
  net.init_parameters(base + 150);
  Tensor x = random_uniform({2, 3, 32, 32}, base + 151);
  Tensor m = random_uniform({2, 1, 32, 32}, base + 152);
  for (float& v : m.values()) v = v < 0.75f ? 1.0f : 0.0f;
  const Tensor y = net.forward(x, m);
  const Tensor r = random_normal(y.shape(), base + 153);
  net.zero_grad();
  const Tensor gx = net.backward(r);
  const std::vector<ParamRef> params = net.parameters();
  const auto grads = copy_grads(params);
  net.freeze_activation_patterns(true);
  auto loss = [&] { return dot(r, net.forward(x, m)); };
  double worst = check_gradient(x.values(), gx.values(), loss, 3e-3, 512).max_error;
  for (std::size_t i = 0; i < params.size(); ++i) {
    worst = std::max(worst, check_gradient(params[i].value, grads[i], loss, 3e-3, 64, i).max_error);
  }
  return worst;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  const std::uint64_t base = seed * 1000;
  return {{"conv2d", conv_error(base), 1e-3},
          {"batch_norm", batch_norm_error(base), 1e-3},
          {"gated_forward", gated_error(base), 1e-3},
          {"l1_loss", l1_error(base), 1e-3},
          {"variance_loss", variance_error(base), 1e-3},
          {"shrunk_network", network_error(base), 5e-3}};
}

}  // namespace cdnet
