// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "cdnet/adam.hpp"
#include "cdnet/checkpoint.hpp"
#include "cdnet/classifier.hpp"
#include "cdnet/decompression.hpp"
#include "cdnet/gated.hpp"
#include "cdnet/grad_check.hpp"
#include "cdnet/grad_suite.hpp"
#include "cdnet/losses.hpp"
#include "cdnet/masks.hpp"
#include "cdnet/metrics.hpp"
#include "cdnet/network.hpp"
#include "cdnet/spectral_norm.hpp"
#include "cdnet/trainer.hpp"
#include "test_util.hpp"

namespace {

using namespace cdnet;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  if (!o.pass) ++failures;
  fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
  std::fflush(stdout);
}

// ---------------------------------------------------------------- gradients

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const std::vector<GradSuiteEntry> entries = run_gradient_suite();
  const double elapsed = seconds_since(t0);
  bool pass = elapsed < 60.0;
  std::string detail;
  for (const GradSuiteEntry& e : entries) {
    pass &= e.passed();
    detail += fmt::format("{} {:.2e} (< {:.0e}); ", e.name, e.max_error, e.tolerance);
  }
  return {pass, detail + fmt::format("{:.1f} s (< 60 s)", elapsed)};
}

// ---------------------------------------------------------------- shapes

Outcome shape_law() {
  Network net = Network::build(full_spec());
  net.init_parameters(1);
  net.set_mode(NormMode::inference);
  const Tensor out =
      net.forward(random_uniform({1, 3, 256, 256}, 2), edge_mask(EdgeSide::right, 0.3, 256, 256));
  const Shape s = out.shape();
  const bool pass = s == Shape{1, 3, 32, 32} && net.downsample_factor() == 8;
  return {pass, fmt::format("(1,3,256,256) -> ({},{},{},{}), factor {}", s.n, s.c, s.h, s.w,
                            net.downsample_factor())};
}

// Zero rectangle [top, bottom) x [left, right) in an otherwise valid mask.
Tensor hole_mask(std::size_t size, std::size_t top, std::size_t bottom, std::size_t left,
                 std::size_t right) {
  Tensor m({1, 1, size, size}, 1.0f);
  for (std::size_t r = top; r < bottom; ++r) {
    for (std::size_t c = left; c < right; ++c) m(0, 0, r, c) = 0.0f;
  }
  return m;
}

Outcome partial_conv() {
  const PartialConvLayer layer{testing::random_conv(3, 4, 3, 1, 5)};
  const StreamPair full = partial_forward(random_normal({1, 3, 16, 16}, 6), Tensor({1, 1, 16, 16}, 1.0f), layer);
  bool identity = true;
  for (float v : full.mask.values()) identity &= v == 1.0f;

  bool shrink = true;
  bool binary = true;
  int iterations = 0;
  for (int k : {3, 5, 7}) {
    const std::size_t step = static_cast<std::size_t>(k / 2);
    std::size_t top = 9, bottom = 27, left = 5, right = 29;
    Tensor mask = hole_mask(40, top, bottom, left, right);
    while (top < bottom && left < right) {
      mask = partial_mask_update(mask, k, k, 1, k / 2);
      ++iterations;
      top += step;
      left += step;
      bottom = bottom > top + step ? bottom - step : top;
      right = right > left + step ? right - step : left;
      const Tensor expect = top < bottom && left < right ? hole_mask(40, top, bottom, left, right)
                                                         : Tensor({1, 1, 40, 40}, 1.0f);
      shrink &= mask == expect;
      binary &= is_binary(mask);
    }
  }
  const Tensor irregular = irregular_mask(7, 0.35, 48, 48);
  Tensor m = irregular;
  for (int i = 0; i < 6; ++i) {
    const Tensor next = partial_mask_update(m, 3, 3, 1, 1);
    binary &= is_binary(next);
    for (std::size_t j = 0; j < m.numel(); ++j) shrink &= !(m[j] == 1.0f && next[j] != 1.0f);
    m = next;
  }
  return {identity && shrink && binary,
          fmt::format("all-ones -> all-ones {}; hole shrinks by k/2 per side ({} iterations, k = 3/5/7) {}; "
                      "binary {}",
                      identity, iterations, shrink, binary)};
}

// ---------------------------------------------------------------- selection

Tensor quantized(Shape shape, std::uint64_t seed, int levels) {
  Tensor t = random_uniform(shape, seed);
  for (float& v : t.values()) v = std::floor(v * levels) / static_cast<float>(levels);
  return t;
}

// Exhaustive scan; the first strict minimum in row-major order wins.
std::vector<PixelIndex> exhaustive_matches(const Tensor& out, const Tensor& ref) {
  const Shape o = out.shape();
  const Shape r = ref.shape();
  std::vector<PixelIndex> result;
  for (std::size_t x = 0; x < o.h; ++x) {
    for (std::size_t y = 0; y < o.w; ++y) {
      double best = 0.0;
      PixelIndex arg{-1, -1};
      for (std::size_t i = 0; i < r.h; ++i) {
        for (std::size_t j = 0; j < r.w; ++j) {
          double d = 0.0;
          for (std::size_t c = 0; c < 3; ++c) d += std::abs(double{out(0, c, x, y)} - double{ref(0, c, i, j)});
          if (arg.row < 0 || d < best) {
            best = d;
            arg = {static_cast<int>(i), static_cast<int>(j)};
          }
        }
      }
      result.push_back(arg);
    }
  }
  return result;
}

Outcome selection_oracle() {
  std::size_t mismatches = 0;
  std::size_t pixels = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    // Every other instance uses a coarse palette so ties are common.
    const bool coarse = seed % 2 == 1;
    const Tensor out = coarse ? quantized({1, 3, 32, 32}, 200 + seed, 3) : random_uniform({1, 3, 32, 32}, 200 + seed);
    const Tensor ref = coarse ? quantized({1, 3, 32, 32}, 300 + seed, 3) : random_uniform({1, 3, 32, 32}, 300 + seed);
    const Tensor hr = random_uniform({1, 3, 256, 256}, 400 + seed);
    const std::vector<PixelIndex> expect = exhaustive_matches(out, ref);
    const std::vector<PixelIndex> got = match_all(out, ref);
    const Tensor image = select_textures(out, ref, hr);
    const Tensor expect_image = copy_blocks(expect, hr, 32, 32, 8);
    for (std::size_t i = 0; i < expect.size(); ++i) mismatches += !(got[i] == expect[i]);
    pixels += expect.size();
    if (!(image == expect_image)) ++mismatches;
  }

  const Tensor out = random_uniform({1, 3, 32, 32}, 500);
  const Tensor ref = random_uniform({1, 3, 32, 32}, 501);
  const Tensor hr = random_uniform({1, 3, 256, 256}, 502);
  double best = 1e9;
  for (int rep = 0; rep < 3; ++rep) {
    const auto t0 = Clock::now();
    const Tensor image = select_textures(out, ref, hr);
    best = std::min(best, seconds_since(t0));
  }
  return {mismatches == 0 && best < 1.0,
          fmt::format("20 instances, {} pixels, {} mismatches vs exhaustive scan; "
                      "1024 x 1024 selection {:.4f} s (< 1 s)",
                      pixels, mismatches, best)};
}

Tensor distinct_thumbnail_image(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    const Tensor hr = random_uniform({1, 3, 256, 256}, seed + attempt);
    const Tensor lr = downsample_gt(hr);
    std::set<std::tuple<float, float, float>> seen;
    for (std::size_t i = 0; i < 32 * 32; ++i) {
      seen.insert({lr.plane(0, 0)[i], lr.plane(0, 1)[i], lr.plane(0, 2)[i]});
    }
    if (seen.size() == 32 * 32) return hr;
  }
}

Outcome selection_identity() {
  std::size_t exact = 0;
  const std::size_t runs = 3;
  for (std::uint64_t seed = 0; seed < runs; ++seed) {
    const Tensor hr = distinct_thumbnail_image(600 + 10 * seed);
    const Tensor mask = edge_mask(static_cast<EdgeSide>(seed % 4), 0.3, 256, 256);
    const Tensor damaged = multiply_broadcast(hr, mask);
    const ReferencePack refs = ground_truth_references(hr, damaged, mask);
    exact += decompress(downsample_gt(hr), refs, DecompressMode::selection, 0.0) == hr;
  }
  return {exact == runs, fmt::format("{}/{} reconstructions bit-exact", exact, runs)};
}

Outcome finetune_endpoints() {
  std::size_t zero_ok = 0;
  std::size_t full_ok = 0;
  std::size_t monotone_ok = 0;
  const std::size_t runs = 10;
  const std::vector<double> thresholds = {0.0, 0.05, 0.15, 0.3, 0.6, 1.0, 1.5, 2.0, 3.0};
  for (std::uint64_t seed = 0; seed < runs; ++seed) {
    const Tensor truth = random_uniform({1, 3, 64, 64}, 700 + seed);
    const Tensor mask = edge_mask(static_cast<EdgeSide>(seed % 4), 0.3, 64, 64);
    const Tensor damaged = multiply_broadcast(truth, mask);
    const Tensor selected = select_textures(random_uniform({1, 3, 8, 8}, 800 + seed),
                                            downsample_gt(truth), truth);
    const Tensor stretched = stretch_damaged(damaged, mask);
    zero_ok += finetune(selected, stretched, 0.0) == selected;
    full_ok += finetune(selected, stretched, 3.0) == stretched;

    // Pixels taken from the stretched image form a growing set as t rises.
    std::vector<bool> previous(64 * 64, false);
    bool monotone = true;
    for (double t : thresholds) {
      const Tensor out = finetune(selected, stretched, t);
      for (std::size_t p = 0; p < 64 * 64; ++p) {
        bool from_stretched = true;
        bool from_selected = true;
        for (std::size_t c = 0; c < 3; ++c) {
          from_stretched &= out.plane(0, c)[p] == stretched.plane(0, c)[p];
          from_selected &= out.plane(0, c)[p] == selected.plane(0, c)[p];
        }
        monotone &= from_stretched || from_selected;
        const bool taken = from_stretched && !from_selected;
        monotone &= !(previous[p] && !from_stretched);
        previous[p] = previous[p] || taken;
      }
    }
    monotone_ok += monotone;
  }
  return {zero_ok == runs && full_ok == runs && monotone_ok == runs,
          fmt::format("t=0 unchanged {}/{}; t=3.0 equals stretched {}/{}; monotone over {} thresholds {}/{}",
                      zero_ok, runs, full_ok, runs, thresholds.size(), monotone_ok, runs)};
}

// ---------------------------------------------------------------- training

// Block-constant colours with pixel noise, so thumbnails vary strongly.
Tensor overfit_image(std::uint64_t seed, std::size_t size) {
  const Tensor blocks = random_uniform({1, 3, size / 8, size / 8}, seed);
  const Tensor noise = random_uniform({1, 3, size, size}, seed + 1000);
  Tensor image({1, 3, size, size});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        image(0, c, y, x) = 0.8f * blocks(0, c, y / 8, x / 8) + 0.2f * noise(0, c, y, x);
      }
    }
  }
  return image;
}

Outcome overfit() {
  constexpr std::size_t size = 32;
  constexpr int max_steps = 3000;
  constexpr int eval_every = 50;
  std::vector<Tensor> images;
  std::vector<Tensor> masks;
  for (std::uint64_t i = 0; i < 8; ++i) {
    images.push_back(overfit_image(300 + i, size));
    masks.push_back(sample_training_mask(400 + i, size, size).mask);
  }
  const TrainBatch batch{stack_batch(images), stack_batch(masks), std::nullopt};
  const Tensor target = downsample_gt(batch.images);

  Network net = Network::build(scaled_spec(4, 8, 8));
  net.init_parameters(1);
  Trainer trainer(net, LossWeights{1.0, 0.1, 0.0}, AdamConfig{});
  auto eval_l1 = [&] {
    net.set_mode(NormMode::inference);
    const double l1 = l1_loss(net.forward(batch.images, batch.masks), target);
    net.set_mode(NormMode::training);
    return l1;
  };
  const double initial = eval_l1();
  const auto t0 = Clock::now();
  int steps = 0;
  double l1 = initial;
  while (steps < max_steps) {
    trainer.step(batch);
    ++steps;
    if (steps % eval_every == 0) {
      l1 = eval_l1();
      if (l1 < 0.05) break;
    }
  }
  const double elapsed = seconds_since(t0);
  return {l1 < 0.05 && elapsed < 1800.0,
          fmt::format("shrunk clone (4/8/8 channels, 32x32 -> 4x4), 8 images, w_gan 0, lr 2e-4: "
                      "L1 {:.4f} -> {:.4f} (< 0.05) after {} steps, {:.1f} s",
                      initial, l1, steps, elapsed)};
}

// ---------------------------------------------------------------- metrics

// Logits are the raw pixel values.
class ValueClassifier : public Classifier {
 public:
  [[nodiscard]] std::vector<float> logits(const Tensor& image) const override {
    return {image.values().begin(), image.values().end()};
  }
};

Tensor logit_image(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({1, 1, 1, n}, std::move(values));
}

Outcome similarity_metric() {
  const ValueClassifier stub;
  std::vector<std::string> problems;

  std::vector<Tensor> same;
  for (std::uint64_t i = 0; i < 6; ++i) same.push_back(random_uniform({1, 1, 1, 10}, 900 + i));
  const SimilarityReport id = similarity_ratio(same, same, stub);
  if (id.similarity != 1.0 || id.similarity5 != 1.0) problems.push_back("identical sets (stub)");

  // Two of four argmaxes agree.
  const std::vector<Tensor> truths = {logit_image({9, 1, 0, 0, 0, 0}), logit_image({0, 9, 1, 0, 0, 0}),
                                      logit_image({0, 0, 9, 1, 0, 0}), logit_image({0, 0, 0, 9, 1, 0})};
  const std::vector<Tensor> outputs = {logit_image({9, 0, 0, 0, 0, 0}), logit_image({0, 0, 0, 0, 0, 9}),
                                       logit_image({0, 0, 9, 0, 0, 0}), logit_image({9, 0, 0, 0, 0, 0})};
  const SimilarityReport hand = similarity_ratio(outputs, truths, stub);
  if (hand.similarity != 0.5) problems.push_back(fmt::format("hand case gave {}", hand.similarity));

  std::size_t ordered = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    std::vector<Tensor> o;
    std::vector<Tensor> t;
    for (std::uint64_t i = 0; i < 8; ++i) {
      o.push_back(random_uniform({1, 1, 1, 12}, 10000 + run * 100 + i));
      t.push_back(random_uniform({1, 1, 1, 12}, 20000 + run * 100 + i));
    }
    const SimilarityReport r = similarity_ratio(o, t, stub);
    ordered += r.similarity <= r.similarity5;
  }
  if (ordered != 100) problems.push_back(fmt::format("similarity <= similarity5 in {}/100", ordered));

  const LabeledImages train = make_texture_dataset(32, 32, 11);
  const ClassifierTrainingResult trained = train_toy_classifier(train, 4, 12);
  if (trained.accuracy < 0.90) problems.push_back("toy classifier below 90%");

  // End-to-end: thumbnails of held-out images are upscaled back and scored
  // against the originals with the trained classifier.
  const LabeledImages held_out = make_texture_dataset(8, 32, 13);
  std::vector<Tensor> restored;
  for (const Tensor& image : held_out.images) {
    restored.push_back(decompress(downsample_gt(image, 4), {}, DecompressMode::baseline, 0.0, 4));
  }
  const SimilarityReport self = similarity_ratio(held_out.images, held_out.images, trained.classifier);
  const SimilarityReport e2e = similarity_ratio(restored, held_out.images, trained.classifier);
  if (self.similarity != 1.0 || self.similarity5 != 1.0) problems.push_back("identical sets (toy)");
  if (!(e2e.similarity <= e2e.similarity5)) problems.push_back("end-to-end ordering");

  return {problems.empty(),
          fmt::format("identical 1/1; 2-of-4 hand case {}; ordering {}/100; toy train accuracy {:.3f} "
                      "in {} steps; eval on {} upscaled thumbnails: similarity {:.3f}, similarity5 {:.3f}{}",
                      hand.similarity, ordered, trained.accuracy, trained.steps, restored.size(),
                      e2e.similarity, e2e.similarity5,
                      problems.empty() ? "" : "; problems: " + fmt::format("{}", fmt::join(problems, ", ")))};
}

// ---------------------------------------------------------------- optimizers

Outcome adam() {
  double worst = 0.0;
  for (float grad : {1e-4f, 0.3f, -2.0f, 1e3f}) {
    std::vector<float> x(4, 0.5f);
    std::vector<float> g(4, grad);
    Adam opt;
    const std::vector<ParamRef> params{{"x", x, g, {4}}};
    opt.step(params);
    for (float v : x) worst = std::max(worst, std::abs(std::abs(double{v} - 0.5) - opt.config().lr));
  }
  std::vector<float> x{1.0f};
  std::vector<float> g{0.0f};
  Adam opt(AdamConfig{2e-2, 0.5, 0.999, 1e-8});
  const std::vector<ParamRef> params{{"x", x, g, {1}}};
  int steps = 0;
  while (std::abs(x[0]) >= 1e-2f && steps < 500) {
    g[0] = 2.0f * x[0];
    opt.step(params);
    ++steps;
  }
  const bool converged = std::abs(x[0]) < 1e-2f;
  return {worst < 1e-6 && converged,
          fmt::format("first-step |dx| - lr max {:.2e} (< 1e-6); x^2 from 1 at lr 2e-2: |x| = {:.2e} after {} steps (< 1e-2 within 500)",
                      worst, std::abs(x[0]), steps)};
}

Outcome checkpoint_round_trip() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cdnet_acceptance";
  fs::create_directories(dir);
  const std::string file = (dir / "model.ckpt").string();

  Network net = Network::build(scaled_spec(4, 8, 8));
  net.init_parameters(21);
  Discriminator disc(DiscriminatorConfig{{4, 8, 8}, 0.2f}, 22);
  Trainer trainer(net, LossWeights{}, AdamConfig{}, &disc, AdamConfig{});
  const Tensor images = random_uniform({2, 3, 32, 32}, 23);
  const Tensor masks = stack_batch(std::vector<Tensor>{edge_mask(EdgeSide::top, 0.3, 32, 32),
                                                       edge_mask(EdgeSide::left, 0.3, 32, 32)});
  for (int i = 0; i < 3; ++i) trainer.step({images, masks, std::nullopt});
  save_checkpoint(file, net, {&trainer.generator_optimizer(), &disc, &trainer.discriminator_optimizer()});
  LoadedCheckpoint loaded = load_checkpoint(file);

  bool same = true;
  for (NormMode mode : {NormMode::inference, NormMode::training}) {
    net.set_mode(mode);
    loaded.network.set_mode(mode);
    same &= net.forward(images, masks) == loaded.network.forward(images, masks);
  }

  std::ifstream in(file, std::ios::binary);
  const std::string good{std::istreambuf_iterator<char>(in), {}};
  in.close();
  std::size_t rejected = 0;
  for (std::size_t byte = 0; byte < 12; ++byte) {
    std::string bad = good;
    bad[byte] = static_cast<char>(bad[byte] ^ 0x5a);
    std::ofstream(file, std::ios::binary | std::ios::trunc).write(bad.data(), static_cast<std::streamsize>(bad.size()));
    try {
      load_checkpoint(file);
    } catch (const CheckpointError&) {
      ++rejected;
    }
  }
  fs::remove_all(dir);
  return {same && rejected == 12,
          fmt::format("forward bitwise equal after reload {}; corrupted header bytes rejected {}/12", same,
                      rejected)};
}

Outcome spectral_norm() {
  const Tensor w({2, 2, 1, 1}, std::vector<float>{3, 0, 0, 1});
  PowerVectors pv = PowerVectors::random(2, 2, 2);
  const double estimate = estimate_top_singular_value(w, pv, 20);
  const SpectralNormResult r = spectral_normalize(w, pv, 20);
  const double after = estimate_top_singular_value(r.weight, pv, 20);
  const bool pass = std::abs(estimate - 3.0) < 0.03 && after >= 0.99 && after <= 1.01;
  return {pass, fmt::format("diag(3,1) estimate {:.6f} after 20 iterations (within 1% of 3); normalized sigma {:.6f}",
                            estimate, after)};
}

}  // namespace

int main() {
  run("gradient suite", gradient_suite);
  run("shape law", shape_law);
  run("partial-conv properties", partial_conv);
  run("texture-selection oracle", selection_oracle);
  run("selection identity", selection_identity);
  run("finetune endpoints", finetune_endpoints);
  run("overfit smoke test", overfit);
  run("similarity metric", similarity_metric);
  run("adam", adam);
  run("checkpoint round-trip", checkpoint_round_trip);
  run("spectral norm", spectral_norm);
  fmt::print("{} of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
