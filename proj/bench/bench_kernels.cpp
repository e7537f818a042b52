// OpenMP kernels vs the serial reference on the model's two heaviest convs
// and on the full training-loss forward/backward.

#include <benchmark/benchmark.h>

#include "cubefocus/model.hpp"
#include "cubefocus/rng.hpp"

using namespace cubefocus;

namespace {

struct ConvCase {
  Shape input;
  Shape kernels;
  Stride3 stride;
};

// Local encoder layer 1 on a 24x24x4 cube, and layer 1 run over a whole 64x64x16 video.
const ConvCase kCases[] = {
    {{24, 24, 4, 1}, {3, 3, 2, 1, 8}, {1, 1, 1}},
    {{64, 64, 16, 1}, {3, 3, 2, 1, 8}, {1, 1, 1}},
};

Tensor random(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(s));
  for (double& v : t.data) v = uniform01(rng) - 0.5;
  return t;
}

template <void (*Conv)(const Tensor&, const Tensor&, const Stride3&, Tensor&)>
void BM_conv_forward(benchmark::State& state) {
  const ConvCase& c = kCases[state.range(0)];
  const Tensor x = random(c.input, 1), k = random(c.kernels, 2);
  Tensor y;
  for (auto _ : state) {
    Conv(x, k, c.stride, y);
    benchmark::DoNotOptimize(y.data.data());
  }
}

template <void (*Conv)(const Tensor&, const Stride3&, const Tensor&, Tensor&)>
void BM_conv_backward_kernels(benchmark::State& state) {
  const ConvCase& c = kCases[state.range(0)];
  const Tensor x = random(c.input, 1);
  const Tensor gy = random(conv3d_output_shape(c.input, c.kernels, c.stride), 3);
  Tensor gk(c.kernels);
  for (auto _ : state) {
    Conv(x, c.stride, gy, gk);
    benchmark::DoNotOptimize(gk.data.data());
  }
}

void BM_training_loss(benchmark::State& state) {
  const Model m(Architecture{}, 1);
  const Tensor v = random(m.arch().video, 4);
  const auto mode = state.range(0) ? GradientMode::featuregrad : GradientMode::pixelgrad;
  for (auto _ : state) {
    ad::Graph g;
    g.backward(training_loss(g, m, v, 0, mode));
  }
}

}  // namespace

BENCHMARK(BM_conv_forward<kernels::conv3d_forward>)->Name("conv_forward/openmp")->DenseRange(0, 1);
BENCHMARK(BM_conv_forward<reference::conv3d_forward>)->Name("conv_forward/reference")->DenseRange(0, 1);
BENCHMARK(BM_conv_backward_kernels<kernels::conv3d_backward_kernels>)->Name("conv_backward_kernels/openmp")->DenseRange(0, 1);
BENCHMARK(BM_conv_backward_kernels<reference::conv3d_backward_kernels>)->Name("conv_backward_kernels/reference")->DenseRange(0, 1);
BENCHMARK(BM_training_loss)->Name("training_loss")->Arg(0)->Arg(1);

BENCHMARK_MAIN();
