#include <gtest/gtest.h>

#include "cdnet/gated.hpp"
#include "cdnet/grad_check.hpp"
#include "test_util.hpp"

namespace cdnet {
namespace {

using testing::random_conv;

GatedConv2d make_layer(std::size_t in_c, std::size_t mask_c, std::size_t out_c, int kernel,
                       int stride, GateActivation gate, bool bn, std::uint64_t seed) {
  GatedConfig cfg;
  cfg.in_channels = in_c;
  cfg.mask_in_channels = mask_c;
  cfg.out_channels = out_c;
  cfg.kernel = kernel;
  cfg.stride = stride;
  cfg.gate = gate;
  cfg.batch_norm = bn;
  GatedConv2d layer(cfg);
  layer.image_conv.params = random_conv(in_c, out_c, kernel, stride, seed);
  layer.mask_conv.params = random_conv(mask_c, out_c, kernel, stride, seed + 7);
  return layer;
}

TEST(Gated, SaturatedGatePassesFeatures) {
  GatedConv2d layer = make_layer(2, 1, 3, 3, 1, GateActivation::sigmoid, false, 1);
  layer.mask_conv.params.weight.fill(0.0f);
  std::fill(layer.mask_conv.params.bias.begin(), layer.mask_conv.params.bias.end(), 20.0f);
  const Tensor x = random_normal({1, 2, 6, 6}, 2);
  const Tensor m = random_uniform({1, 1, 6, 6}, 3);
  const StreamPair out = layer.forward(x, m);
  const Tensor expect = leaky_relu(conv2d_forward(x, layer.image_conv.params));
  for (std::size_t i = 0; i < expect.numel(); ++i) {
    EXPECT_NEAR(out.image[i], expect[i], 1e-6 * (1.0 + std::abs(expect[i])));
    EXPECT_NEAR(out.mask[i], 1.0f, 1e-8);
  }
}

TEST(Gated, ZeroMaskGivesHalfGate) {
  GatedConv2d layer = make_layer(2, 1, 3, 3, 1, GateActivation::sigmoid, false, 4);
  std::fill(layer.mask_conv.params.bias.begin(), layer.mask_conv.params.bias.end(), 0.0f);
  const StreamPair out = layer.forward(random_normal({1, 2, 5, 5}, 5), Tensor({1, 1, 5, 5}));
  for (float g : out.mask.values()) EXPECT_EQ(g, 0.5f);
}

TEST(Gated, SigmoidGateStaysInOpenInterval) {
  GatedConv2d layer = make_layer(3, 1, 4, 5, 2, GateActivation::sigmoid, true, 6);
  const StreamPair out =
      layer.forward(random_normal({2, 3, 16, 16}, 7), random_uniform({2, 1, 16, 16}, 8));
  for (float g : out.mask.values()) {
    EXPECT_GT(g, 0.0f);
    EXPECT_LT(g, 1.0f);
  }
}

TEST(Gated, IdentityGateIsProductOfConvolutions) {
  GatedConv2d layer = make_layer(2, 2, 3, 3, 1, GateActivation::identity, false, 9);
  GatedConfig cfg = layer.config();
  cfg.feature = FeatureActivation::identity;
  GatedConv2d plain(cfg);
  plain.image_conv.params = layer.image_conv.params;
  plain.mask_conv.params = layer.mask_conv.params;
  const Tensor x = random_normal({1, 2, 7, 7}, 10);
  const Tensor m = random_normal({1, 2, 7, 7}, 11);
  const StreamPair out = plain.forward(x, m);
  const Tensor a = conv2d_forward(x, plain.image_conv.params);
  const Tensor b = conv2d_forward(m, plain.mask_conv.params);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(out.image[i], a[i] * b[i], 1e-5);
  EXPECT_EQ(out.mask, b);
}

TEST(Gated, RejectsSpatialMismatch) {
  GatedConv2d layer = make_layer(2, 1, 3, 3, 1, GateActivation::sigmoid, false, 12);
  EXPECT_THROW(layer.forward(Tensor({1, 2, 6, 6}), Tensor({1, 1, 6, 5})), ShapeError);
}

double stream_loss(GatedConv2d& layer, const Tensor& x, const Tensor& m, const Tensor& r1,
                   const Tensor& r2) {
  const StreamPair out = layer.forward(x, m);
  return dot(r1, out.image) + dot(r2, out.mask);
}

void check_gated_backward(GateActivation gate, bool bn, int stride, std::uint64_t seed) {
  GatedConv2d layer = make_layer(2, 1, 3, 3, stride, gate, bn, seed);
  if (bn) {
    layer.norm->state.gamma = {1.2f, 0.8f, 1.0f};
    layer.norm->state.beta = {0.1f, -0.1f, 0.0f};
  }
  Tensor x = random_normal({1, 2, 8, 8}, seed + 1);
  Tensor m = random_uniform({1, 1, 8, 8}, seed + 2);
  const StreamPair out = layer.forward(x, m);
  const Tensor r1 = random_normal(out.image.shape(), seed + 3);
  const Tensor r2 = random_normal(out.mask.shape(), seed + 4);
  layer.zero_grad();
  const StreamPair g = layer.backward(r1, r2);
  const std::vector<ParamRef> params = [&] {
    std::vector<ParamRef> p;
    layer.collect_parameters("L", p);
    return p;
  }();
  std::vector<std::vector<float>> grads;
  for (const ParamRef& p : params) grads.emplace_back(p.grad.begin(), p.grad.end());

  // Perturbations must not move units across the leaky kink.
  layer.freeze_activation_pattern(true);
  auto loss = [&] { return stream_loss(layer, x, m, r1, r2); };
  EXPECT_LT(check_gradient(x.values(), g.image.values(), loss, 1e-3).max_error, 1e-3) << "image";
  EXPECT_LT(check_gradient(m.values(), g.mask.values(), loss, 1e-3).max_error, 1e-3) << "mask";
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_LT(check_gradient(params[i].value, grads[i], loss, 1e-3).max_error, 1e-3)
        << params[i].name;
  }
}

TEST(Gated, BackwardFiniteDifferencesSigmoid) {
  check_gated_backward(GateActivation::sigmoid, false, 1, 20);
}

TEST(Gated, BackwardFiniteDifferencesWithBatchNorm) {
  check_gated_backward(GateActivation::sigmoid, true, 1, 30);
}

TEST(Gated, BackwardFiniteDifferencesIdentityGateStrided) {
  check_gated_backward(GateActivation::identity, false, 2, 40);
}

TEST(Gated, BackwardFiniteDifferencesRandomInstances) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    check_gated_backward(seed % 2 ? GateActivation::identity : GateActivation::sigmoid, seed % 3 == 0,
                         1 + static_cast<int>(seed % 2), 100 + 10 * seed);
  }
}

TEST(Gated, FrozenPatternMatchesAtBasePoint) {
  GatedConv2d layer = make_layer(2, 1, 3, 3, 1, GateActivation::sigmoid, true, 60);
  const Tensor x = random_normal({1, 2, 6, 6}, 61);
  const Tensor m = random_uniform({1, 1, 6, 6}, 62);
  EXPECT_THROW(layer.freeze_activation_pattern(true), std::logic_error);
  const StreamPair base = layer.forward(x, m);
  layer.freeze_activation_pattern(true);
  const StreamPair frozen = layer.forward(x, m);
  for (std::size_t i = 0; i < base.image.numel(); ++i) {
    EXPECT_NEAR(frozen.image[i], base.image[i], 1e-6f);
  }
  // A large shift flips units; only the unfrozen layer follows the kink.
  const Tensor shifted = elementwise_add(x, Tensor(x.shape(), -3.0f));
  const StreamPair f2 = layer.forward(shifted, m);
  layer.freeze_activation_pattern(false);
  const StreamPair u2 = layer.forward(shifted, m);
  EXPECT_NE(f2.image, u2.image);
  EXPECT_THROW(
      {
        layer.freeze_activation_pattern(true);
        layer.forward(Tensor({1, 2, 5, 5}), Tensor({1, 1, 5, 5}));
      },
      ShapeError);
}

TEST(Gated, EmptyMaskGradientCountsAsZero) {
  GatedConv2d layer = make_layer(2, 1, 3, 3, 1, GateActivation::sigmoid, false, 50);
  const Tensor x = random_normal({1, 2, 5, 5}, 51);
  const Tensor m = random_uniform({1, 1, 5, 5}, 52);
  const StreamPair out = layer.forward(x, m);
  const Tensor r = random_normal(out.image.shape(), 53);
  const StreamPair a = layer.backward(r, Tensor{});
  layer.forward(x, m);
  const StreamPair b = layer.backward(r, Tensor(out.mask.shape()));
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
}

TEST(Partial, AllOnesMaskIsPlainConvolution) {
  PartialConvLayer layer{random_conv(3, 4, 3, 1, 60)};
  const Tensor x = random_normal({1, 3, 6, 6}, 61);
  const StreamPair out = partial_forward(x, Tensor({1, 1, 6, 6}, 1.0f), layer);
  for (float v : out.mask.values()) EXPECT_EQ(v, 1.0f);
  EXPECT_EQ(out.image, conv2d_forward(x, layer.image_conv));
}

TEST(Partial, AllZerosMaskZeroesEverything) {
  PartialConvLayer layer{random_conv(3, 4, 3, 1, 62)};
  const StreamPair out = partial_forward(random_normal({1, 3, 6, 6}, 63), Tensor({1, 1, 6, 6}), layer);
  for (float v : out.mask.values()) EXPECT_EQ(v, 0.0f);
  for (float v : out.image.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Partial, SinglePixelGrowsToNeighbourhood) {
  Tensor mask({1, 1, 7, 7});
  mask(0, 0, 3, 3) = 1.0f;
  const Tensor out = partial_mask_update(mask, 3, 3, 1, 1);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      const bool inside = r >= 2 && r <= 4 && c >= 2 && c <= 4;
      EXPECT_EQ(out(0, 0, r, c), inside ? 1.0f : 0.0f) << r << "," << c;
    }
  }
}

TEST(Partial, RejectsNonBinaryMask) {
  PartialConvLayer layer = PartialConvLayer::make(1, 1, 3, 1);
  Tensor mask({1, 1, 4, 4}, 1.0f);
  mask[5] = 0.5f;
  EXPECT_THROW(partial_forward(Tensor({1, 1, 4, 4}), mask, layer), std::invalid_argument);
}

TEST(Partial, HoleShrinksByHalfKernelPerIteration) {
  for (int kernel : {3, 5, 7}) {
    const std::size_t side = 40;
    std::size_t top = 8, left = 11, bottom = 30, right = 27;  // inclusive hole bounds
    Tensor mask({1, 1, side, side}, 1.0f);
    for (std::size_t r = top; r <= bottom; ++r) {
      for (std::size_t c = left; c <= right; ++c) mask(0, 0, r, c) = 0.0f;
    }
    const std::size_t shrink = static_cast<std::size_t>(kernel / 2);
    int iterations = 0;
    while (true) {
      const Tensor next = partial_mask_update(mask, kernel, kernel, 1, kernel / 2);
      ASSERT_TRUE(is_binary(next));
      for (std::size_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] == 1.0f) ASSERT_EQ(next[i], 1.0f) << "hole grew";
      }
      mask = next;
      ++iterations;
      if (top + shrink > bottom - shrink || left + shrink > right - shrink ||
          bottom < shrink || right < shrink) {
        for (float v : mask.values()) EXPECT_EQ(v, 1.0f);
        break;
      }
      top += shrink;
      left += shrink;
      bottom -= shrink;
      right -= shrink;
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          const bool hole = r >= top && r <= bottom && c >= left && c <= right;
          ASSERT_EQ(mask(0, 0, r, c), hole ? 0.0f : 1.0f)
              << "kernel " << kernel << " iteration " << iterations;
        }
      }
    }
    EXPECT_GT(iterations, 1);
  }
}

TEST(Partial, RandomMasksStayBinaryAndMonotone) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor mask = random_uniform({1, 1, 12, 12}, 70 + seed);
    for (float& v : mask.values()) v = v < 0.7f ? 0.0f : 1.0f;
    const Tensor next = partial_mask_update(mask, 3, 3, 1, 1);
    EXPECT_TRUE(is_binary(next));
    for (std::size_t i = 0; i < mask.numel(); ++i) {
      if (mask[i] == 1.0f) EXPECT_EQ(next[i], 1.0f);
    }
  }
}

}  // namespace
}  // namespace cdnet
