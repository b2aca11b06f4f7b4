#include "cdnet/network.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace cdnet {

int BlockSpec::total_stride() const {
  int s = 1;
  for (const LayerSpec& l : layers) s *= l.stride;
  return s;
}

std::vector<BlockSpec> full_spec() { return scaled_spec(64, 196, 256); }

std::vector<BlockSpec> scaled_spec(std::size_t c0, std::size_t c1, std::size_t c2) {
  auto stack = [](std::string name, int kernel, std::size_t channels, int trailing) {
    BlockSpec b{std::move(name), BlockKind::conv_stack, {{kernel, channels, 2}}};
    for (int i = 0; i < trailing; ++i) b.layers.push_back({kernel, channels, 1});
    return b;
  };
  return {
      {"RB_0", BlockKind::residual, {{1, c0, 2}}},
      stack("CB_0", 5, c0, 4),
      {"RB_1", BlockKind::residual, {{1, c1, 2}}},
      stack("CB_1", 5, c1, 4),
      {"RB_2", BlockKind::residual, {{3, c2, 2}}},
      stack("CB_2", 3, c2, 6),
      {"MB", BlockKind::mapping, {{3, 3, 1}}},
  };
}

BlockKind parse_block_kind(const std::string& token) {
  if (token == "residual") return BlockKind::residual;
  if (token == "conv_stack" || token == "stack") return BlockKind::conv_stack;
  if (token == "mapping") return BlockKind::mapping;
  throw std::invalid_argument(fmt::format("unknown block kind '{}'", token));
}

const char* block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::residual:
      return "residual";
    case BlockKind::conv_stack:
      return "conv_stack";
    case BlockKind::mapping:
      return "mapping";
  }
  return "?";
}

std::vector<BlockSpec> parse_architecture(std::istream& in) {
  std::vector<BlockSpec> blocks;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    for (char& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) continue;
    std::string kind;
    long kernel = 0, channels = 0, stride = 0, count = 0;
    if (!(fields >> kind >> kernel >> channels >> stride >> count)) {
      throw std::invalid_argument(
          fmt::format("architecture line {}: expected 'name kind kernel channels stride count'",
                      line_no));
    }
    std::string extra;
    if (fields >> extra) {
      throw std::invalid_argument(fmt::format("architecture line {}: trailing field '{}'",
                                              line_no, extra));
    }
    if (kernel < 1 || kernel % 2 == 0 || channels < 1 || stride < 1 || count < 1) {
      throw std::invalid_argument(
          fmt::format("architecture line {}: kernel must be odd and positive, channels, stride "
                      "and count positive",
                      line_no));
    }
    const BlockKind k = parse_block_kind(kind);
    if (blocks.empty() || blocks.back().name != name) {
      blocks.push_back({name, k, {}});
    } else if (blocks.back().kind != k) {
      throw std::invalid_argument(
          fmt::format("architecture line {}: block '{}' changes kind", line_no, name));
    }
    for (long i = 0; i < count; ++i) {
      blocks.back().layers.push_back(
          {static_cast<int>(kernel), static_cast<std::size_t>(channels), static_cast<int>(stride)});
    }
  }
  return blocks;
}

std::vector<BlockSpec> load_architecture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open architecture file '{}'", path));
  return parse_architecture(in);
}

std::string format_architecture(const std::vector<BlockSpec>& spec) {
  std::string out = "# name kind kernel channels stride count\n";
  for (const BlockSpec& b : spec) {
    std::size_t i = 0;
    while (i < b.layers.size()) {
      std::size_t j = i;
      while (j < b.layers.size() && b.layers[j] == b.layers[i]) ++j;
      const LayerSpec& l = b.layers[i];
      out += fmt::format("{} {} {} {} {} {}\n", b.name, block_kind_name(b.kind), l.kernel,
                         l.channels, l.stride, j - i);
      i = j;
    }
  }
  return out;
}

namespace {

void validate(const std::vector<BlockSpec>& spec) {
  if (spec.size() < 3 || spec.size() % 2 == 0) {
    throw std::invalid_argument(
        "architecture must be (residual, conv_stack) pairs followed by one mapping block");
  }
  for (const BlockSpec& b : spec) {
    if (b.layers.empty()) {
      throw std::invalid_argument(fmt::format("block '{}' has no layers", b.name));
    }
  }
  for (std::size_t i = 0; i + 1 < spec.size(); i += 2) {
    const BlockSpec& rb = spec[i];
    const BlockSpec& cb = spec[i + 1];
    if (rb.kind != BlockKind::residual || cb.kind != BlockKind::conv_stack) {
      throw std::invalid_argument(fmt::format(
          "blocks '{}' and '{}' must be a residual block followed by a conv_stack", rb.name,
          cb.name));
    }
    if (rb.layers.size() != 1) {
      throw std::invalid_argument(
          fmt::format("residual block '{}' must have exactly one layer", rb.name));
    }
    if (rb.out_channels() != cb.out_channels()) {
      throw std::invalid_argument(fmt::format("pair '{}'/'{}': residual channels {} != stack {}",
                                              rb.name, cb.name, rb.out_channels(),
                                              cb.out_channels()));
    }
    if (rb.total_stride() != cb.total_stride()) {
      throw std::invalid_argument(fmt::format("pair '{}'/'{}': residual stride {} != stack {}",
                                              rb.name, cb.name, rb.total_stride(),
                                              cb.total_stride()));
    }
  }
  const BlockSpec& mb = spec.back();
  if (mb.kind != BlockKind::mapping || mb.layers.size() != 1 || mb.layers[0].channels != 3) {
    throw std::invalid_argument("last block must be a single 3-channel mapping layer");
  }
}

void he_init(Conv2d& conv, std::mt19937_64& rng) {
  const Shape& s = conv.params.weight.shape();
  const double fan_in = static_cast<double>(s.c * s.h * s.w);
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_in)));
  for (float& v : conv.params.weight.values()) v = dist(rng);
  std::fill(conv.params.bias.begin(), conv.params.bias.end(), 0.0f);
}

void reset_norm(GatedConv2d& layer) {
  if (!layer.norm) return;
  BatchNormState& st = layer.norm->state;
  std::fill(st.gamma.begin(), st.gamma.end(), 1.0f);
  std::fill(st.beta.begin(), st.beta.end(), 0.0f);
  std::fill(st.running_mean.begin(), st.running_mean.end(), 0.0f);
  std::fill(st.running_var.begin(), st.running_var.end(), 1.0f);
}

}  // namespace

Network Network::build(const std::vector<BlockSpec>& spec, NetworkOptions options) {
  validate(spec);
  Network net;
  net.spec_ = spec;
  net.options_ = options;

  std::size_t image_channels = 3;
  std::size_t mask_channels = 1;
  int conv_index = 0;
  for (std::size_t i = 0; i + 1 < spec.size(); i += 2) {
    const BlockSpec& rb = spec[i];
    const BlockSpec& cb = spec[i + 1];
    Pair pair;
    pair.residual_name = rb.name + ".Residual";
    pair.stack_name = cb.name;
    const LayerSpec& r = rb.layers[0];
    pair.residual = Conv2d(image_channels, r.channels, r.kernel, r.stride);

    std::size_t in_c = image_channels;
    for (const LayerSpec& l : cb.layers) {
      GatedConfig cfg;
      cfg.in_channels = in_c;
      cfg.mask_in_channels = mask_channels;
      cfg.out_channels = l.channels;
      cfg.kernel = l.kernel;
      cfg.stride = l.stride;
      cfg.gate = options.gate;
      cfg.feature = FeatureActivation::leaky_relu;
      cfg.slope = options.slope;
      cfg.batch_norm = true;
      pair.stack.emplace_back(cfg);
      pair.layer_names.push_back(fmt::format("{}.Conv_{}", cb.name, conv_index++));
      in_c = l.channels;
      mask_channels = l.channels;
    }
    image_channels = in_c;
    net.factor_ *= cb.total_stride();
    net.pairs_.push_back(std::move(pair));
  }

  const LayerSpec& m = spec.back().layers[0];
  GatedConfig cfg;
  cfg.in_channels = image_channels;
  cfg.mask_in_channels = mask_channels;
  cfg.out_channels = m.channels;
  cfg.kernel = m.kernel;
  cfg.stride = m.stride;
  cfg.gate = options.gate;
  cfg.feature = FeatureActivation::identity;
  cfg.slope = options.slope;
  cfg.batch_norm = false;
  net.mapping_ = GatedConv2d(cfg);
  net.mapping_name_ = spec.back().name + ".Mapping";
  net.factor_ *= m.stride;
  return net;
}

Tensor Network::forward(const Tensor& image, const Tensor& mask) {
  const Shape s = image.shape();
  if (s.c != 3) throw ShapeError(fmt::format("network input must have c=3, got c={}", s.c));
  const Shape ms = mask.shape();
  if (ms.c != 1 || ms.n != s.n || ms.h != s.h || ms.w != s.w) {
    throw ShapeError(fmt::format("mask {} does not match image {}", ms.str(), s.str()));
  }
  const auto f = static_cast<std::size_t>(factor_);
  if (s.h % f != 0 || s.w % f != 0 || s.h == 0 || s.w == 0) {
    throw ShapeError(fmt::format("input h={} w={} not divisible by downsampling factor {}", s.h,
                                 s.w, factor_));
  }
  if (!is_binary(mask)) throw std::invalid_argument("network mask must be binary");

  mask_ = mask;
  Tensor x = multiply_broadcast(image, mask);
  Tensor m = mask;
  for (Pair& pair : pairs_) {
    Tensor residual = pair.residual.forward(x);
    for (GatedConv2d& layer : pair.stack) {
      StreamPair out = layer.forward(x, m);
      x = std::move(out.image);
      m = std::move(out.mask);
    }
    x = elementwise_add(x, residual);
  }
  output_ = sigmoid(mapping_.forward(x, m).image);
  return output_;
}

Tensor Network::backward(const Tensor& grad_output) {
  if (output_.empty()) throw std::logic_error("Network::backward called before forward");
  require_same_shape(grad_output, output_, "network backward");
  StreamPair g = mapping_.backward(sigmoid_backward(output_, grad_output), Tensor{});
  Tensor gx = std::move(g.image);
  Tensor gm = std::move(g.mask);
  for (auto pair = pairs_.rbegin(); pair != pairs_.rend(); ++pair) {
    Tensor from_residual = pair->residual.backward(gx);
    for (auto layer = pair->stack.rbegin(); layer != pair->stack.rend(); ++layer) {
      StreamPair in = layer->backward(gx, gm);
      gx = std::move(in.image);
      gm = std::move(in.mask);
    }
    gx = elementwise_add(gx, from_residual);
  }
  // The hole-zeroing product is the first op on the image.
  return multiply_broadcast(gx, mask_);
}

void Network::set_mode(NormMode mode) {
  mode_ = mode;
  for (Pair& p : pairs_) {
    for (GatedConv2d& l : p.stack) l.set_mode(mode);
  }
  mapping_.set_mode(mode);
}

void Network::freeze_activation_patterns(bool frozen) {
  for (Pair& p : pairs_) {
    for (GatedConv2d& l : p.stack) l.freeze_activation_pattern(frozen);
  }
  mapping_.freeze_activation_pattern(frozen);
}

void Network::zero_grad() {
  for (Pair& p : pairs_) {
    p.residual.zero_grad();
    for (GatedConv2d& l : p.stack) l.zero_grad();
  }
  mapping_.zero_grad();
}

void Network::init_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Pair& p : pairs_) {
    he_init(p.residual, rng);
    for (GatedConv2d& l : p.stack) {
      he_init(l.image_conv, rng);
      he_init(l.mask_conv, rng);
      reset_norm(l);
    }
  }
  he_init(mapping_.image_conv, rng);
  he_init(mapping_.mask_conv, rng);
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (Pair& p : pairs_) {
    p.residual.collect_parameters(p.residual_name, out);
    for (std::size_t i = 0; i < p.stack.size(); ++i) {
      p.stack[i].collect_parameters(p.layer_names[i], out);
    }
  }
  mapping_.collect_parameters(mapping_name_, out);
  return out;
}

std::vector<BufferRef> Network::buffers() {
  std::vector<BufferRef> out;
  for (Pair& p : pairs_) {
    for (std::size_t i = 0; i < p.stack.size(); ++i) {
      p.stack[i].collect_buffers(p.layer_names[i], out);
    }
  }
  return out;
}

std::size_t Network::parameter_count() {
  std::size_t total = 0;
  for (const ParamRef& p : parameters()) total += p.value.size();
  return total;
}

std::size_t Network::stack_layer_count() const {
  std::size_t n = 0;
  for (const Pair& p : pairs_) n += p.stack.size();
  return n;
}

}  // namespace cdnet
