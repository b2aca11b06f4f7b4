// Serial reference kernels against the OpenMP ones.

#include <benchmark/benchmark.h>

#include "cdnet/conv.hpp"
#include "cdnet/decompression.hpp"
#include "cdnet/grad_check.hpp"
#include "cdnet/network.hpp"

namespace {

using namespace cdnet;

struct ConvCase {
  std::size_t in_c, out_c, size;
  int kernel, stride;
};

// CB_0 / CB_2 style layers of the full network at their working resolution.
constexpr ConvCase kConvCases[] = {{64, 64, 64, 5, 1}, {196, 256, 32, 3, 2}, {256, 256, 16, 3, 1}};

ConvParams conv_params(const ConvCase& c) {
  ConvParams p = ConvParams::make(c.in_c, c.out_c, c.kernel, c.stride);
  p.weight = random_normal(p.weight.shape(), 1, 0.05f);
  return p;
}

// passes = 1 for forward, 2 for backward (input and weight gradients).
void set_flops(benchmark::State& state, const ConvCase& c, const Tensor& out, double passes) {
  const double macs = static_cast<double>(out.numel()) * c.in_c * c.kernel * c.kernel;
  state.counters["FLOP/s"] =
      benchmark::Counter(2.0 * passes * macs, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvCase c = kConvCases[state.range(0)];
  const ConvParams p = conv_params(c);
  const Tensor x = random_uniform({1, c.in_c, c.size, c.size}, 2);
  Tensor out;
  for (auto _ : state) {
    out = Parallel ? conv2d_forward(x, p) : reference::conv2d_forward(x, p);
    benchmark::DoNotOptimize(out.values().data());
  }
  set_flops(state, c, out, 1.0);
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const ConvCase c = kConvCases[state.range(0)];
  const ConvParams p = conv_params(c);
  const Tensor x = random_uniform({1, c.in_c, c.size, c.size}, 2);
  const Tensor up = random_normal(conv2d_output_shape(x.shape(), p), 3);
  for (auto _ : state) {
    ConvGrads g = Parallel ? conv2d_backward(x, p, up) : reference::conv2d_backward(x, p, up);
    benchmark::DoNotOptimize(g.grad_weight.values().data());
  }
  set_flops(state, c, up, 2.0);
}

template <bool Parallel>
void BM_SelectTextures(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const Tensor out = random_uniform({1, 3, side, side}, 4);
  const Tensor ref = random_uniform({1, 3, side, side}, 5);
  const Tensor hr = random_uniform({1, 3, side * 8, side * 8}, 6);
  for (auto _ : state) {
    Tensor image = Parallel ? select_textures(out, ref, hr) : reference::select_textures(out, ref, hr);
    benchmark::DoNotOptimize(image.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}

void BM_NetworkForward(benchmark::State& state) {
  const std::size_t c = static_cast<std::size_t>(state.range(0));
  Network net = Network::build(c == 0 ? full_spec() : scaled_spec(c, 2 * c, 2 * c));
  net.init_parameters(7);
  net.set_mode(NormMode::inference);
  const Tensor x = random_uniform({1, 3, 256, 256}, 8);
  const Tensor m({1, 1, 256, 256}, 1.0f);
  for (auto _ : state) {
    Tensor y = net.forward(x, m);
    benchmark::DoNotOptimize(y.values().data());
  }
}

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/openmp")->DenseRange(0, 2)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/openmp")->DenseRange(0, 2)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SelectTextures<false>)->Name("select_textures/reference")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SelectTextures<true>)->Name("select_textures/openmp")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_NetworkForward)->Name("network_forward_256")->Arg(8)->Arg(0)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
