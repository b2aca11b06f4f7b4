#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cdnet/conv.hpp"
#include "cdnet/gated.hpp"

namespace cdnet {

enum class BlockKind { residual, conv_stack, mapping };

struct LayerSpec {
  int kernel = 3;
  std::size_t channels = 0;
  int stride = 1;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// One row group of the architecture table (RB_0, CB_0, ..., MB).
struct BlockSpec {
  std::string name;
  BlockKind kind = BlockKind::conv_stack;
  std::vector<LayerSpec> layers;

  [[nodiscard]] int total_stride() const;
  [[nodiscard]] std::size_t out_channels() const { return layers.back().channels; }

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// The compression network: three (residual, gated stack) pairs, then a
/// 3x3 mapping layer to RGB. Channels 64 / 196 / 256.
std::vector<BlockSpec> full_spec();

/// Same topology as full_spec() with the three channel widths replaced.
std::vector<BlockSpec> scaled_spec(std::size_t c0, std::size_t c1, std::size_t c2);

/// Architecture text: one line per row, `name kind kernel channels stride
/// count`, whitespace or comma separated, `#` comments. Consecutive lines
/// with the same name extend the same block.
std::vector<BlockSpec> parse_architecture(std::istream& in);
std::vector<BlockSpec> load_architecture(const std::string& path);
std::string format_architecture(const std::vector<BlockSpec>& spec);

BlockKind parse_block_kind(const std::string& token);
const char* block_kind_name(BlockKind kind);

struct NetworkOptions {
  GateActivation gate = GateActivation::sigmoid;
  float slope = kDefaultLeakySlope;
};

class Network {
 public:
  /// Validates the pairing rules and constructs all layers. Throws
  /// std::invalid_argument on a malformed spec.
  static Network build(const std::vector<BlockSpec>& spec, NetworkOptions options = {});

  /// image (n, 3, H, W) in [0, 1], binary mask (n, 1, H, W) -> (n, 3, H/f, W/f)
  /// with f = downsample_factor(). Output lies in (0, 1).
  Tensor forward(const Tensor& image, const Tensor& mask);
  /// Accumulates parameter gradients; returns d loss / d image.
  Tensor backward(const Tensor& grad_output);

  void set_mode(NormMode mode);
  [[nodiscard]] NormMode mode() const { return mode_; }
  /// See GatedConv2d::freeze_activation_pattern; applies to every layer.
  void freeze_activation_patterns(bool frozen);
  void zero_grad();
  /// He-normal conv weights (std sqrt(2 / fan_in)), zero biases, unit gamma,
  /// zero beta, reset running statistics.
  void init_parameters(std::uint64_t seed);

  std::vector<ParamRef> parameters();
  std::vector<BufferRef> buffers();
  [[nodiscard]] std::size_t parameter_count();

  [[nodiscard]] int downsample_factor() const { return factor_; }
  [[nodiscard]] std::size_t pair_count() const { return pairs_.size(); }
  [[nodiscard]] std::size_t stack_layer_count() const;
  [[nodiscard]] const std::vector<BlockSpec>& spec() const { return spec_; }
  [[nodiscard]] const NetworkOptions& options() const { return options_; }

 private:
  struct Pair {
    std::string residual_name;
    std::string stack_name;
    Conv2d residual;
    std::vector<GatedConv2d> stack;
    std::vector<std::string> layer_names;
  };

  std::vector<BlockSpec> spec_;
  NetworkOptions options_;
  std::vector<Pair> pairs_;
  GatedConv2d mapping_;
  std::string mapping_name_;
  int factor_ = 1;
  NormMode mode_ = NormMode::training;

  Tensor mask_;
  Tensor output_;
};

}  // namespace cdnet
