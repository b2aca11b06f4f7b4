#include "cdnet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "cdnet/activations.hpp"
#include "cdnet/adam.hpp"
#include "cdnet/checkpoint.hpp"

namespace cdnet {

namespace {

constexpr std::array<std::size_t, 4> kWidths = {3, 8, 16, 32};

void he_normal(ConvParams& p, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(p.in_channels() * p.kernel_h() * p.kernel_w());
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
  for (float& v : p.weight.values()) v = dist(rng);
  std::fill(p.bias.begin(), p.bias.end(), 0.0f);
}

std::string layer_name(std::size_t i) {
  return i < 3 ? fmt::format("Classifier.Conv_{}", i) : std::string("Classifier.Head");
}

Tensor global_average(const Tensor& x) {
  const Shape& s = x.shape();
  Tensor out({s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* p = x.plane(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
      out(n, c, 0, 0) = static_cast<float>(sum / static_cast<double>(s.plane()));
    }
  }
  return out;
}

}  // namespace

ToyClassifier::ToyClassifier(std::size_t classes, std::uint64_t seed, std::size_t input_size)
    : classes_(classes), input_size_(input_size) {
  if (classes < 2) {
    throw std::invalid_argument(fmt::format("ToyClassifier: need at least 2 classes, got {}", classes));
  }
  if (input_size < 8) {
    throw std::invalid_argument(fmt::format("ToyClassifier: input size {} below 8", input_size));
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < 3; ++i) {
    layers_[i] = ConvParams::make(kWidths[i], kWidths[i + 1], 3, 2);
  }
  layers_[3] = ConvParams::make(kWidths[3], classes, 1, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    he_normal(layers_[i], rng);
    grad_w_[i] = Tensor(layers_[i].weight.shape());
    grad_b_[i].assign(layers_[i].bias.size(), 0.0f);
  }
}

Tensor ToyClassifier::prepare(const Tensor& images) const {
  const Shape& s = images.shape();
  if (s.c != 3) {
    throw ShapeError(fmt::format("classifier expects 3 channels, got c={}", s.c));
  }
  if (s.h == input_size_ && s.w == input_size_) return images;
  if (s.h % input_size_ != 0 || s.w % input_size_ != 0 || s.h < input_size_ || s.w < input_size_) {
    throw ShapeError(fmt::format("classifier input {}x{} is not a multiple of {}", s.h, s.w,
                                 input_size_));
  }
  const std::size_t fh = s.h / input_size_;
  const std::size_t fw = s.w / input_size_;
  Tensor out({s.n, s.c, input_size_, input_size_});
  const double norm = 1.0 / static_cast<double>(fh * fw);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t r = 0; r < input_size_; ++r) {
        for (std::size_t q = 0; q < input_size_; ++q) {
          double sum = 0.0;
          for (std::size_t dr = 0; dr < fh; ++dr) {
            for (std::size_t dq = 0; dq < fw; ++dq) sum += images(n, c, r * fh + dr, q * fw + dq);
          }
          out(n, c, r, q) = static_cast<float>(sum * norm);
        }
      }
    }
  }
  return out;
}

Tensor ToyClassifier::forward_batch(const Tensor& images) const {
  Tensor x = prepare(images);
  for (std::size_t i = 0; i < 3; ++i) x = leaky_relu(conv2d_forward(x, layers_[i]));
  return conv2d_forward(global_average(x), layers_[3]);
}

std::vector<float> ToyClassifier::logits(const Tensor& image) const {
  if (image.shape().n != 1) {
    throw ShapeError(fmt::format("logits expects a single image, got n={}", image.shape().n));
  }
  return forward_batch(image).storage();
}

double ToyClassifier::train_loss_and_grad(const Tensor& images, std::span<const int> labels) {
  const std::size_t batch = images.shape().n;
  if (labels.size() != batch) {
    throw ShapeError(fmt::format("{} labels for a batch of n={}", labels.size(), batch));
  }
  std::array<Tensor, 4> inputs;
  std::array<Tensor, 3> pre_act;
  inputs[0] = prepare(images);
  for (std::size_t i = 0; i < 3; ++i) {
    pre_act[i] = conv2d_forward(inputs[i], layers_[i]);
    Tensor a = leaky_relu(pre_act[i]);
    inputs[i + 1] = i < 2 ? std::move(a) : global_average(a);
  }
  const Tensor out = conv2d_forward(inputs[3], layers_[3]);

  Tensor grad_logits(out.shape());
  double loss = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes_) {
      throw std::invalid_argument(fmt::format("label {} outside [0, {})", label, classes_));
    }
    double peak = out(n, 0, 0, 0);
    for (std::size_t k = 1; k < classes_; ++k) peak = std::max(peak, double{out(n, k, 0, 0)});
    double z = 0.0;
    for (std::size_t k = 0; k < classes_; ++k) z += std::exp(out(n, k, 0, 0) - peak);
    for (std::size_t k = 0; k < classes_; ++k) {
      const double p = std::exp(out(n, k, 0, 0) - peak) / z;
      const double target = static_cast<std::size_t>(label) == k ? 1.0 : 0.0;
      grad_logits(n, k, 0, 0) = static_cast<float>((p - target) / static_cast<double>(batch));
    }
    loss -= out(n, static_cast<std::size_t>(label), 0, 0) - peak - std::log(z);
  }

  // Copied in place: ParamRef spans handed out earlier must stay valid.
  auto store = [this](std::size_t i, const ConvGrads& grads) {
    std::copy(grads.grad_weight.values().begin(), grads.grad_weight.values().end(),
              grad_w_[i].values().begin());
    std::copy(grads.grad_bias.begin(), grads.grad_bias.end(), grad_b_[i].begin());
  };
  ConvGrads g = conv2d_backward(inputs[3], layers_[3], grad_logits);
  store(3, g);

  const Shape& last = pre_act[2].shape();
  Tensor upstream(last);
  const float inv_area = 1.0f / static_cast<float>(last.plane());
  for (std::size_t n = 0; n < last.n; ++n) {
    for (std::size_t c = 0; c < last.c; ++c) {
      std::fill_n(upstream.plane(n, c), last.plane(), g.grad_input(n, c, 0, 0) * inv_area);
    }
  }
  for (std::size_t i = 3; i-- > 0;) {
    const Tensor dz = leaky_relu_backward(pre_act[i], upstream);
    ConvGrads gi = conv2d_backward(inputs[i], layers_[i], dz);
    store(i, gi);
    upstream = std::move(gi.grad_input);
  }
  return loss / static_cast<double>(batch);
}

std::vector<ParamRef> ToyClassifier::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < 4; ++i) {
    const Shape& s = layers_[i].weight.shape();
    const std::string name = layer_name(i);
    out.push_back({name + ".weight", layers_[i].weight.values(), grad_w_[i].values(),
                   {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                    static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)}});
    out.push_back({name + ".bias", layers_[i].bias, grad_b_[i],
                   {static_cast<std::uint32_t>(layers_[i].bias.size())}});
  }
  return out;
}

std::vector<BufferRef> ToyClassifier::state() {
  std::vector<BufferRef> out;
  for (ParamRef& p : parameters()) out.push_back({p.name, p.value, p.dims});
  return out;
}

LabeledImages make_texture_dataset(std::size_t per_class, std::size_t size, std::uint64_t seed) {
  if (size < 4) throw std::invalid_argument(fmt::format("texture size {} below 4", size));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::uniform_int_distribution<int> cell_dist(1, 3);
  LabeledImages data;
  auto color = [&] { return std::array<float, 3>{unit(rng), unit(rng), unit(rng)}; };

  for (int label = 0; label < 4; ++label) {
    for (std::size_t k = 0; k < per_class; ++k) {
      Tensor img({1, 3, size, size});
      switch (label) {
        case 0: {
          const auto c = color();
          for (std::size_t ch = 0; ch < 3; ++ch) std::fill_n(img.plane(0, ch), size * size, c[ch]);
          break;
        }
        case 1: {
          std::array<float, 3> from{};
          std::array<float, 3> to{};
          for (std::size_t ch = 0; ch < 3; ++ch) {
            from[ch] = 0.3f * unit(rng);
            to[ch] = 0.7f + 0.3f * unit(rng);
            if (unit(rng) < 0.5f) std::swap(from[ch], to[ch]);
          }
          for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t r = 0; r < size; ++r) {
              for (std::size_t q = 0; q < size; ++q) {
                const float t = static_cast<float>(q) / static_cast<float>(size - 1);
                img(0, ch, r, q) = from[ch] + (to[ch] - from[ch]) * t;
              }
            }
          }
          break;
        }
        case 2: {
          const std::size_t cell = std::size_t{1} << cell_dist(rng);
          const auto a = color();
          auto b = color();
          for (std::size_t ch = 0; ch < 3; ++ch) {
            if (std::abs(a[ch] - b[ch]) < 0.3f) b[ch] = a[ch] < 0.5f ? a[ch] + 0.5f : a[ch] - 0.5f;
          }
          for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t r = 0; r < size; ++r) {
              for (std::size_t q = 0; q < size; ++q) {
                img(0, ch, r, q) = ((r / cell + q / cell) % 2 == 0) ? a[ch] : b[ch];
              }
            }
          }
          break;
        }
        default:
          for (float& v : img.values()) v = unit(rng);
          break;
      }
      data.images.push_back(std::move(img));
      data.labels.push_back(label);
    }
  }
  return data;
}

double classification_accuracy(const ToyClassifier& classifier, const LabeledImages& data) {
  if (data.images.empty()) return 0.0;
  const Tensor logits = classifier.forward_batch(stack_batch(data.images));
  std::size_t correct = 0;
  for (std::size_t n = 0; n < data.images.size(); ++n) {
    const std::span<const float> row(logits.plane(n, 0), classifier.classes());
    correct += static_cast<int>(argmax(row)) == data.labels[n] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.images.size());
}

ClassifierTrainingResult train_toy_classifier(const LabeledImages& data, std::size_t classes,
                                              std::uint64_t seed,
                                              const ClassifierTrainingOptions& options) {
  if (classes < 2) {
    throw std::invalid_argument(fmt::format("train_toy_classifier: need >= 2 classes, got {}", classes));
  }
  if (data.images.size() != data.labels.size()) {
    throw std::invalid_argument("train_toy_classifier: images and labels differ in length");
  }
  std::vector<std::size_t> counts(classes, 0);
  for (int label : data.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::invalid_argument(fmt::format("label {} outside [0, {})", label, classes));
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  for (std::size_t k = 0; k < classes; ++k) {
    if (counts[k] < 8) {
      throw std::invalid_argument(
          fmt::format("train_toy_classifier: class {} has {} images, need >= 8", k, counts[k]));
    }
  }

  const Shape& first = data.images.front().shape();
  const std::size_t input = std::min<std::size_t>(32, std::min(first.h, first.w));
  ClassifierTrainingResult result{ToyClassifier(classes, seed, input), 0.0, 0};
  ToyClassifier& model = result.classifier;
  Adam adam(AdamConfig{options.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<std::size_t> order(data.images.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<Tensor> batch;
  std::vector<int> labels;

  for (int step = 1; step <= options.max_steps; ++step) {
    batch.clear();
    labels.clear();
    while (batch.size() < options.batch_size) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(data.images[order[cursor]]);
      labels.push_back(data.labels[order[cursor]]);
      ++cursor;
    }
    model.train_loss_and_grad(stack_batch(batch), labels);
    adam.step(model.parameters());
    result.steps = step;
    if (step % options.eval_every == 0 || step == options.max_steps) {
      result.accuracy = classification_accuracy(model, data);
      if (result.accuracy >= options.target_accuracy) return result;
    }
  }
  if (result.accuracy < options.failure_accuracy) {
    throw ClassifierTrainingFailure(fmt::format(
        "toy classifier reached only {:.3f} accuracy after {} steps", result.accuracy, result.steps));
  }
  return result;
}

void save_classifier(const ToyClassifier& classifier, const std::string& path) {
  ToyClassifier copy = classifier;
  std::vector<CheckpointEntry> entries;
  entries.push_back({"classifier.meta",
                     {2},
                     {static_cast<float>(copy.classes()), static_cast<float>(copy.input_size())}});
  for (const BufferRef& b : copy.state()) {
    entries.push_back({b.name, b.dims, std::vector<float>(b.value.begin(), b.value.end())});
  }
  write_checkpoint_entries(path, entries);
}

ToyClassifier load_classifier(const std::string& path) {
  std::vector<CheckpointEntry> entries = read_checkpoint_entries(path);
  auto meta = std::find_if(entries.begin(), entries.end(),
                           [](const CheckpointEntry& e) { return e.name == "classifier.meta"; });
  if (meta == entries.end() || meta->values.size() != 2) {
    throw CheckpointError(fmt::format("{}: not a classifier checkpoint", path));
  }
  ToyClassifier model(static_cast<std::size_t>(meta->values[0]), 0,
                      static_cast<std::size_t>(meta->values[1]));
  entries.erase(meta);
  restore_values(entries, {}, model.state());
  return model;
}

}  // namespace cdnet
