#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cdnet/checkpoint.hpp"
#include "cdnet/classifier.hpp"
#include "cdnet/config.hpp"
#include "cdnet/dataset.hpp"
#include "cdnet/decompression.hpp"
#include "cdnet/grad_suite.hpp"
#include "cdnet/image_io.hpp"
#include "cdnet/masks.hpp"
#include "cdnet/metrics.hpp"
#include "cdnet/network.hpp"
#include "cdnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace cdnet;

namespace {

GateActivation parse_gate(const std::string& name) {
  if (name == "sigmoid") return GateActivation::sigmoid;
  if (name == "identity") return GateActivation::identity;
  throw std::invalid_argument(fmt::format("unknown gate '{}'", name));
}

DecompressMode parse_mode(const std::string& name) {
  if (name == "selection") return DecompressMode::selection;
  if (name == "baseline") return DecompressMode::baseline;
  throw std::invalid_argument(fmt::format("unknown mode '{}' (selection|baseline)", name));
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

int run_train(const TrainArgs& args) {
  RunConfig cfg = RunConfig::load(args.config);
  apply_overrides(cfg, args.overrides);
  if (args.seed) cfg.seed = *args.seed;
  if (cfg.data_dir.empty()) throw std::invalid_argument("config: data_dir is required");
  if (cfg.batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");

  const DatasetIndex data = DatasetIndex::scan(cfg.data_dir, cfg.split, cfg.image_size);
  if (data.size() == 0) throw std::runtime_error(fmt::format("no PNG files under {}", cfg.data_dir));

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "config.txt");
    out << cfg.to_text();
  }

  const AdamConfig gen_cfg{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
  const AdamConfig disc_cfg{cfg.d_lr, cfg.beta1, cfg.beta2, 1e-8};
  const NetworkOptions options{parse_gate(cfg.gate), static_cast<float>(cfg.slope)};

  std::optional<LoadedCheckpoint> resumed;
  if (!cfg.resume.empty()) resumed.emplace(load_checkpoint(cfg.resume, gen_cfg, disc_cfg));

  Network net = resumed ? std::move(resumed->network)
                        : Network::build(cfg.architecture.empty() ? full_spec()
                                                                  : load_architecture(cfg.architecture),
                                         options);
  if (!resumed) net.init_parameters(derive_seed(cfg.seed, "generator"));

  std::optional<Discriminator> disc;
  if (cfg.w_gan > 0.0) {
    if (resumed && resumed->discriminator) {
      disc = std::move(*resumed->discriminator);
    } else {
      disc.emplace(DiscriminatorConfig{cfg.disc_channels, static_cast<float>(cfg.slope)},
                   derive_seed(cfg.seed, "discriminator"));
    }
  }

  Trainer trainer(net, LossWeights{cfg.w_l1, cfg.w_var, cfg.w_gan}, gen_cfg, disc ? &*disc : nullptr,
                  disc_cfg);
  if (resumed && resumed->generator_optimizer) {
    trainer.generator_optimizer() = std::move(*resumed->generator_optimizer);
    trainer.set_step(trainer.generator_optimizer().steps());
  }
  if (resumed && disc && resumed->discriminator_optimizer) {
    trainer.discriminator_optimizer() = std::move(*resumed->discriminator_optimizer);
  }

  const std::uint64_t mask_seed = derive_seed(cfg.seed, "mask");
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();

  auto log = fmt::output_file((fs::path(cfg.out_dir) / "train.log").string(),
                              fmt::file::WRONLY | fmt::file::CREATE | fmt::file::APPEND);
  auto save = [&](const std::string& name) {
    const std::string path = (fs::path(cfg.out_dir) / name).string();
    save_checkpoint(path, net,
                    {&trainer.generator_optimizer(), disc ? &*disc : nullptr,
                     disc ? &trainer.discriminator_optimizer() : nullptr});
    return path;
  };

  fmt::print("training {} images, {} parameters, factor {}\n", data.size(), net.parameter_count(),
             net.downsample_factor());
  while (trainer.steps() < cfg.steps) {
    if (cursor >= order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      cursor = 0;
    }
    const std::size_t count = std::min(cfg.batch_size, order.size() - cursor);
    const std::span<const std::size_t> indices(order.data() + cursor, count);
    cursor += count;

    std::vector<Tensor> masks;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t s = mix_seed(mask_seed + trainer.steps() * cfg.batch_size + i);
      const EdgeSide side = sample_training_mask(s, 8, 8).side;
      masks.push_back(edge_mask(side, cfg.mask_fraction, cfg.image_size, cfg.image_size));
    }
    const LossReport report = trainer.step({data.load_batch(indices), stack_batch(masks), std::nullopt});
    const std::string line = format_log_line(report);
    log.print("{}\n", line);
    if (report.step % cfg.log_every == 0 || report.skipped) fmt::print("{}\n", line);
    if (report.skipped) fmt::print(stderr, "step {} skipped: {}\n", report.step, report.reason);
    if (cfg.checkpoint_every > 0 && trainer.steps() % cfg.checkpoint_every == 0) {
      save(fmt::format("step_{:07}.ckpt", trainer.steps()));
    }
  }
  log.close();
  fmt::print("wrote {}\n", save("final.ckpt"));
  return 0;
}

// ---------------------------------------------------------------- inpaint

struct InpaintArgs {
  std::string image;
  std::string mask;
  std::string checkpoint;
  std::string mode = "selection";
  std::string truth;
  std::string out;
  std::string config;
  double threshold = kDefaultFinetuneThreshold;
  std::size_t size = kImageSide;
};

int run_inpaint(const InpaintArgs& args) {
  if (!fs::exists(args.checkpoint)) {
    throw std::runtime_error(fmt::format("checkpoint not found: {}", args.checkpoint));
  }
  const DecompressMode mode = parse_mode(args.mode);
  const Tensor image = load_image(args.image, args.size);
  const Tensor mask = load_mask(args.mask, args.size);
  const Tensor damaged = multiply_broadcast(image, mask);

  LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
  Network& net = loaded.network;
  net.set_mode(NormMode::inference);
  const Tensor lr_output = net.forward(image, mask);
  const int block = net.downsample_factor();

  ReferencePack refs;
  if (mode == DecompressMode::selection) {
    refs = args.truth.empty() ? damaged_input_references(damaged, mask, block)
                              : ground_truth_references(load_image(args.truth, args.size), damaged, mask, block);
  }
  const Tensor restored = decompress(lr_output, refs, mode, args.threshold, block);

  const fs::path out(args.out);
  fs::create_directories(out / "lr");
  fs::create_directories(out / "damaged");
  const std::string file = fs::path(args.image).filename().replace_extension(".png").string();
  save_image(damaged, (out / "damaged" / file).string());
  save_image(lr_output, (out / "lr" / file).string());
  const std::string out_path = (out / file).string();
  save_image(restored, out_path);
  fmt::print("{} -> {} (thumbnail {}x{}, {} references)\n", args.image, out_path, lr_output.shape().h,
             lr_output.shape().w,
             mode == DecompressMode::baseline ? "no" : (args.truth.empty() ? "damaged-input" : "ground-truth"));
  return 0;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  std::string outputs;
  std::string truths;
  std::string classifier;
  std::string name = "run";
  std::string csv;
  std::size_t size = kImageSide;
};

int run_eval(const EvalArgs& args) {
  const std::vector<std::string> outputs = list_png_files(args.outputs);
  std::vector<Tensor> out_images;
  std::vector<Tensor> truth_images;
  for (const std::string& path : outputs) {
    const fs::path truth = fs::path(args.truths) / fs::path(path).filename();
    if (!fs::exists(truth)) {
      fmt::print(stderr, "skipping {}: no truth {}\n", path, truth.string());
      continue;
    }
    out_images.push_back(load_image(path, args.size));
    truth_images.push_back(load_image(truth.string(), args.size));
  }
  if (out_images.empty()) throw std::runtime_error("no output/truth pairs found");

  EvalRow row{args.name};
  for (std::size_t i = 0; i < out_images.size(); ++i) {
    row.l1 += image_l1(out_images[i], truth_images[i]);
    row.l2 += image_l2(out_images[i], truth_images[i]);
  }
  row.l1 /= static_cast<double>(out_images.size());
  row.l2 /= static_cast<double>(out_images.size());
  if (!args.classifier.empty()) {
    const ToyClassifier classifier = load_classifier(args.classifier);
    const SimilarityReport r = similarity_ratio(out_images, truth_images, classifier);
    row.similarity = r.similarity;
    row.similarity5 = r.similarity5;
  } else {
    row.similarity = row.similarity5 = std::nan("");
  }
  const std::vector<EvalRow> rows{row};
  const std::string text = format_eval_csv(rows);
  fmt::print("{}", text);
  if (!args.csv.empty()) std::ofstream(args.csv) << text;
  return 0;
}

// -------------------------------------------------------------- classifier

struct ClassifierArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t per_class = 32;
  std::size_t size = 32;
};

int run_classifier(const ClassifierArgs& args) {
  const LabeledImages data = make_texture_dataset(args.per_class, args.size, derive_seed(args.seed, "textures"));
  const ClassifierTrainingResult r = train_toy_classifier(data, 4, derive_seed(args.seed, "classifier"));
  save_classifier(r.classifier, args.out);
  fmt::print("train accuracy {:.3f} after {} steps -> {}\n", r.accuracy, r.steps, args.out);
  return 0;
}

// ---------------------------------------------------------------- maskgen

struct MaskArgs {
  std::string kind = "edge";
  std::string side = "left";
  double fraction = kDefaultEdgeFraction;
  std::size_t size = kImageSide;
  std::uint64_t seed = 1;
  std::vector<std::size_t> rect;  // x0 y0 h w
  std::string out;
};

int run_maskgen(const MaskArgs& args) {
  Tensor mask;
  if (args.kind == "edge") {
    mask = edge_mask(parse_edge_side(args.side), args.fraction, args.size, args.size);
  } else if (args.kind == "rect") {
    if (args.rect.size() != 4) throw std::invalid_argument("--rect needs x0 y0 h w");
    mask = rect_mask(args.rect[0], args.rect[1], args.rect[2], args.rect[3], args.size, args.size);
  } else if (args.kind == "irregular") {
    mask = irregular_mask(args.seed, args.fraction, args.size, args.size);
  } else {
    throw std::invalid_argument(fmt::format("unknown mask kind '{}'", args.kind));
  }
  save_image(mask, args.out);
  const double missing = missing_fraction(mask);
  fmt::print("{}: {} missing pixels ({:.4f})\n", args.out,
             static_cast<std::size_t>(std::llround(missing * static_cast<double>(mask.numel()))), missing);
  return 0;
}

// -------------------------------------------------------------- gradcheck

int run_gradcheck(std::uint64_t seed) {
  bool ok = true;
  for (const GradSuiteEntry& e : run_gradient_suite(seed)) {
    fmt::print("{:<16} {:.3e}  (tol {:.0e})  {}\n", e.name, e.max_error, e.tolerance,
               e.passed() ? "ok" : "FAIL");
    ok &= e.passed();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compression network inpainting: train, inpaint, evaluate"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the compression network");
  train_cmd->add_option("--config", train.config, "key = value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_option("--set", train.overrides, "key=value override (repeatable)");

  InpaintArgs inpaint;
  auto* inpaint_cmd = app.add_subcommand("inpaint", "Repair one image");
  inpaint_cmd->add_option("--image", inpaint.image)->required()->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--mask", inpaint.mask, "PNG, 255 = valid, 0 = missing")->required()->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--checkpoint", inpaint.checkpoint)->required();
  inpaint_cmd->add_option("--mode", inpaint.mode, "selection|baseline")->capture_default_str();
  inpaint_cmd->add_option("--truth", inpaint.truth, "Ground truth used as texture reference")->check(CLI::ExistingFile);
  inpaint_cmd->add_option("--threshold", inpaint.threshold, "Finetune threshold t")->capture_default_str();
  inpaint_cmd->add_option("--size", inpaint.size, "Working resolution")->capture_default_str();
  inpaint_cmd->add_option("--out", inpaint.out, "Output directory")->required();
  inpaint_cmd->add_option("--config", inpaint.config, "Take mode and threshold from this config")
      ->check(CLI::ExistingFile);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "L1 / L2 / similarity over matching file names");
  eval_cmd->add_option("--outputs", eval.outputs)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--truths", eval.truths)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--classifier", eval.classifier, "Toy classifier file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--name", eval.name, "Row name")->capture_default_str();
  eval_cmd->add_option("--csv", eval.csv, "Also write the rows here");
  eval_cmd->add_option("--size", eval.size)->capture_default_str();

  ClassifierArgs classifier;
  auto* cls_cmd = app.add_subcommand("classifier", "Train the 4-class texture classifier used by eval");
  cls_cmd->add_option("--out", classifier.out)->required();
  cls_cmd->add_option("--seed", classifier.seed)->capture_default_str();
  cls_cmd->add_option("--per-class", classifier.per_class)->capture_default_str();
  cls_cmd->add_option("--size", classifier.size)->capture_default_str();

  MaskArgs mask;
  auto* mask_cmd = app.add_subcommand("maskgen", "Write a mask PNG");
  mask_cmd->add_option("--kind", mask.kind, "edge|rect|irregular")->capture_default_str();
  mask_cmd->add_option("--side", mask.side, "top|bottom|left|right")->capture_default_str();
  mask_cmd->add_option("--fraction", mask.fraction, "Missing fraction (edge, irregular)")->capture_default_str();
  mask_cmd->add_option("--rect", mask.rect, "x0 y0 h w")->expected(4);
  mask_cmd->add_option("--size", mask.size)->capture_default_str();
  mask_cmd->add_option("--seed", mask.seed)->capture_default_str();
  mask_cmd->add_option("--out", mask.out)->required();

  std::uint64_t grad_seed = 0;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad_cmd->add_option("--seed", grad_seed)->capture_default_str();

  std::vector<std::size_t> arch_scale;
  auto* arch_cmd = app.add_subcommand("arch", "Print the architecture file for the full or a scaled network");
  arch_cmd->add_option("--scale", arch_scale, "Channels of the three stages, e.g. 4 8 8")->expected(3);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(train);
    if (*inpaint_cmd) {
      if (!inpaint.config.empty()) {
        const RunConfig cfg = RunConfig::load(inpaint.config);
        if (inpaint_cmd->count("--mode") == 0) inpaint.mode = cfg.mode;
        if (inpaint_cmd->count("--threshold") == 0) inpaint.threshold = cfg.threshold;
      }
      return run_inpaint(inpaint);
    }
    if (*eval_cmd) return run_eval(eval);
    if (*cls_cmd) return run_classifier(classifier);
    if (*mask_cmd) return run_maskgen(mask);
    if (*grad_cmd) return run_gradcheck(grad_seed);
    if (*arch_cmd) {
      fmt::print("{}", format_architecture(arch_scale.empty()
                                               ? full_spec()
                                               : scaled_spec(arch_scale[0], arch_scale[1], arch_scale[2])));
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
