// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "letnet/kernels.hpp"

using namespace letnet::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = u(gen);
    return v;
}

// state.range(0): channels; 1: spatial side; 2: groups (0 = depthwise)
ConvGeometry geometry(const benchmark::State& state) {
    ConvGeometry g;
    g.in_channels = g.out_channels = state.range(0);
    g.in_h = g.in_w = state.range(1);
    g.kernel_h = g.kernel_w = 3;
    g.pad_h = g.pad_w = 1;
    g.groups = state.range(2) == 0 ? g.in_channels : state.range(2);
    return g;
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
    const ConvGeometry g = geometry(state);
    const auto in = random_vec(static_cast<std::size_t>(g.batch * g.in_channels * g.in_h * g.in_w), 1);
    const auto w = random_vec(static_cast<std::size_t>(g.out_channels * g.in_per_group() * 9), 2);
    const auto b = random_vec(static_cast<std::size_t>(g.out_channels), 3);
    std::vector<float> out(static_cast<std::size_t>(g.batch * g.out_channels * g.out_h() * g.out_w()));
    for (auto _ : state) {
        if constexpr (Parallel) {
            conv2d_forward<float>(g, in, w, b, out);
        } else {
            conv2d_forward_ref<float>(g, in, w, b, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
    const double macs = static_cast<double>(out.size()) * static_cast<double>(g.in_per_group() * 9);
    state.counters["MAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    GemmShape s;
    s.m = s.n = s.k = state.range(0);
    const auto a = random_vec(static_cast<std::size_t>(s.m * s.k), 4);
    const auto b = random_vec(static_cast<std::size_t>(s.k * s.n), 5);
    std::vector<float> c(static_cast<std::size_t>(s.m * s.n));
    for (auto _ : state) {
        if constexpr (Parallel) {
            gemm<float>(s, a, b, c);
        } else {
            gemm_ref<float>(s, a, b, c);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(s.m * s.n * s.k),
                                                 benchmark::Counter::kIsIterationInvariantRate);
}

void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({32, 64, 1})->Args({64, 32, 1})->Args({128, 32, 0})->Args({64, 64, 0});
}

}  // namespace

BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward_ref")->Apply(conv_args);
BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward_omp")->Apply(conv_args);
BENCHMARK(BM_Gemm<false>)->Name("gemm_ref")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm_omp")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
