// Serial reference kernels against the OpenMP ones, at the shapes the default
// network uses with a batch of 32. Set OMP_NUM_THREADS to vary the pool.

#include <benchmark/benchmark.h>

#include "volta/kernels.hpp"
#include "volta/rng.hpp"

using namespace volta;

namespace {

Tensor random_tensor(const Shape4& shape, std::uint64_t seed)
{
    Rng rng(seed);
    Tensor t(shape);
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

struct ConvCase {
    ConvGeometry geo;
    Shape4 input;
};

// 0: first block, 1: second block (after pooling), 2: third block
ConvCase conv_case(std::int64_t which)
{
    switch (which) {
    case 0: return {{3, 12, 3, 1, 2}, {32, 3, 32, 32}};
    case 1: return {{12, 20, 3, 1, 2}, {32, 12, 11, 11}};
    default: return {{20, 32, 3, 1, 2}, {32, 20, 13, 13}};
    }
}

template <bool Parallel>
void conv_forward(benchmark::State& state)
{
    const auto c = conv_case(state.range(0));
    const Tensor x = random_tensor(c.input, 1), w = random_tensor(c.geo.weight_shape(), 2),
                 b = random_tensor(c.geo.bias_shape(), 3);
    for (auto _ : state) {
        if constexpr (Parallel) benchmark::DoNotOptimize(parallel::conv2d_forward(c.geo, x, w, b));
        else benchmark::DoNotOptimize(reference::conv2d_forward(c.geo, x, w, b));
    }
}

template <bool Parallel>
void conv_backward(benchmark::State& state)
{
    const auto c = conv_case(state.range(0));
    const Tensor x = random_tensor(c.input, 1), w = random_tensor(c.geo.weight_shape(), 2);
    const Tensor g = random_tensor(c.geo.output_shape(c.input), 4);
    for (auto _ : state) {
        if constexpr (Parallel) benchmark::DoNotOptimize(parallel::conv2d_backward(c.geo, x, w, g, true));
        else benchmark::DoNotOptimize(reference::conv2d_backward(c.geo, x, w, g, true));
    }
}

template <bool Parallel>
void maxpool(benchmark::State& state)
{
    const PoolGeometry geo{3, 3};
    const Tensor x = random_tensor({32, 12, 34, 34}, 5);
    std::vector<std::size_t> argmax;
    for (auto _ : state) {
        if constexpr (Parallel) benchmark::DoNotOptimize(parallel::maxpool_forward(geo, x, &argmax));
        else benchmark::DoNotOptimize(reference::maxpool_forward(geo, x, &argmax));
    }
}

template <bool Parallel>
void linear(benchmark::State& state)
{
    const auto classes = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_tensor({32, 7200, 1, 1}, 6), w = random_tensor({classes, 7200, 1, 1}, 7),
                 b = random_tensor({classes, 1, 1, 1}, 8);
    const Tensor g = random_tensor({32, classes, 1, 1}, 9);
    for (auto _ : state) {
        if constexpr (Parallel) {
            benchmark::DoNotOptimize(parallel::linear_forward(x, w, b));
            benchmark::DoNotOptimize(parallel::linear_backward(x, w, g, false));
        } else {
            benchmark::DoNotOptimize(reference::linear_forward(x, w, b));
            benchmark::DoNotOptimize(reference::linear_backward(x, w, g, false));
        }
    }
}

}  // namespace

BENCHMARK(conv_forward<false>)->Name("conv_forward/reference")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_forward<true>)->Name("conv_forward/parallel")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<false>)->Name("conv_backward/reference")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<true>)->Name("conv_backward/parallel")->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(maxpool<false>)->Name("maxpool/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(maxpool<true>)->Name("maxpool/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(linear<false>)->Name("linear/reference")->Arg(3)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(linear<true>)->Name("linear/parallel")->Arg(3)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
