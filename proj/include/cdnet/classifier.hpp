#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdnet/conv.hpp"
#include "cdnet/metrics.hpp"

namespace cdnet {

/// Three stride-2 3x3 convolutions with leaky ReLU, global average pooling
/// and a linear head. Inputs larger than `input_size` are box-downsampled
/// by an integer factor first.
class ToyClassifier : public Classifier {
 public:
  ToyClassifier() = default;
  ToyClassifier(std::size_t classes, std::uint64_t seed, std::size_t input_size = 32);

  [[nodiscard]] std::vector<float> logits(const Tensor& image) const override;

  /// Logits for a batch, shape (n, classes, 1, 1).
  [[nodiscard]] Tensor forward_batch(const Tensor& images) const;

  /// Mean cross-entropy over the batch; fills parameter gradients.
  double train_loss_and_grad(const Tensor& images, std::span<const int> labels);

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> state();

  [[nodiscard]] std::size_t classes() const { return classes_; }
  [[nodiscard]] std::size_t input_size() const { return input_size_; }

  /// Box-filters (n, 3, h, w) down to input_size. h and w must be multiples.
  [[nodiscard]] Tensor prepare(const Tensor& images) const;

 private:
  std::size_t classes_ = 0;
  std::size_t input_size_ = 32;
  std::array<ConvParams, 4> layers_;  // three features then the 1x1 head
  std::array<Tensor, 4> grad_w_;
  std::array<std::vector<float>, 4> grad_b_;
};

struct LabeledImages {
  std::vector<Tensor> images;  // each (1, 3, h, w)
  std::vector<int> labels;
};

/// Solid, horizontal gradient, checkerboard and noise textures; label order
/// as listed.
LabeledImages make_texture_dataset(std::size_t per_class, std::size_t size, std::uint64_t seed);

struct ClassifierTrainingOptions {
  int max_steps = 2000;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  double target_accuracy = 0.90;
  double failure_accuracy = 0.60;
  int eval_every = 25;
};

struct ClassifierTrainingResult {
  ToyClassifier classifier;
  double accuracy = 0.0;
  int steps = 0;
};

/// Thrown when the step budget runs out below the failure accuracy.
class ClassifierTrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double classification_accuracy(const ToyClassifier& classifier, const LabeledImages& data);

ClassifierTrainingResult train_toy_classifier(const LabeledImages& data, std::size_t classes,
                                              std::uint64_t seed,
                                              const ClassifierTrainingOptions& options = {});

void save_classifier(const ToyClassifier& classifier, const std::string& path);
ToyClassifier load_classifier(const std::string& path);

}  // namespace cdnet
