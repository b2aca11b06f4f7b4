#pragma once

#include <string>
#include <vector>

#include "cdnet/tensor.hpp"

namespace cdnet {

enum class NormMode { training, inference };

struct BatchNormState {
  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels);

  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;
  float momentum = 0.1f;
  NormMode mode = NormMode::training;

  [[nodiscard]] std::size_t channels() const { return gamma.size(); }
};

/// What backward needs from the forward pass.
struct BatchNormCache {
  NormMode mode = NormMode::training;
  Tensor normalized;            // x_hat
  std::vector<double> inv_std;  // per channel
};

/// Per-channel normalization over (n, h, w). Training mode uses batch
/// statistics and updates the running estimates (unbiased variance);
/// inference mode reads the running estimates.
Tensor batch_norm(const Tensor& input, BatchNormState& state, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor grad_input;
  std::vector<float> grad_gamma;
  std::vector<float> grad_beta;
};

BatchNormGrads batch_norm_backward(const Tensor& upstream, const BatchNormState& state,
                                   const BatchNormCache& cache);

/// Stateful layer wrapper with gradient buffers.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels) : state(channels), grad_gamma(channels), grad_beta(channels) {}

  Tensor forward(const Tensor& input) { return batch_norm(input, state, &cache_); }
  Tensor backward(const Tensor& upstream);

  void zero_grad();
  void collect_parameters(const std::string& prefix, std::vector<ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<BufferRef>& out);

  BatchNormState state;
  std::vector<float> grad_gamma;
  std::vector<float> grad_beta;

 private:
  BatchNormCache cache_;
};

}  // namespace cdnet
