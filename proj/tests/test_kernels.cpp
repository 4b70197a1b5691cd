#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "letnet/kernels.hpp"

using namespace letnet::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::mt19937_64& gen, Index n) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<T> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<T>(dist(gen));
    return v;
}

template <typename T>
double max_rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(double(a[i]) - double(b[i])) / (1.0 + std::abs(double(b[i]))));
    return m;
}

ConvGeometry random_geometry(std::mt19937_64& gen) {
    auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(gen); };
    ConvGeometry g;
    g.groups = pick(1, 3);
    g.batch = pick(1, 2);
    g.in_channels = g.groups * pick(1, 3);
    g.out_channels = g.groups * pick(1, 3);
    g.kernel_h = pick(1, 3);
    g.kernel_w = pick(1, 3);
    g.stride_h = pick(1, 2);
    g.stride_w = pick(1, 2);
    g.dilation_h = pick(1, 3);
    g.dilation_w = pick(1, 3);
    g.pad_h = pick(0, 3);
    g.pad_w = pick(0, 3);
    g.in_h = pick(g.dilation_h * (g.kernel_h - 1) + 1, 9);
    g.in_w = pick(g.dilation_w * (g.kernel_w - 1) + 1, 9);
    return g;
}

template <typename T>
void compare_conv(double tol, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    for (int trial = 0; trial < 150; ++trial) {
        const ConvGeometry g = random_geometry(gen);
        const Index in_n = g.batch * g.in_channels * g.in_h * g.in_w;
        const Index w_n = g.out_channels * g.in_per_group() * g.kernel_h * g.kernel_w;
        const Index out_n = g.batch * g.out_channels * g.out_h() * g.out_w();
        const auto x = random_vec<T>(gen, in_n);
        const auto w = random_vec<T>(gen, w_n);
        const auto b = random_vec<T>(gen, g.out_channels);
        const auto go = random_vec<T>(gen, out_n);

        std::vector<T> y_ref(out_n), y(out_n);
        conv2d_forward_ref<T>(g, x, w, b, y_ref);
        conv2d_forward<T>(g, x, w, b, y);
        CHECK(max_rel_diff(y, y_ref) <= tol);

        // backward kernels accumulate, so start both from the same nonzero buffer
        auto gi_ref = random_vec<T>(gen, in_n);
        auto gi = gi_ref;
        conv2d_backward_input_ref<T>(g, go, w, gi_ref);
        conv2d_backward_input<T>(g, go, w, gi);
        CHECK(max_rel_diff(gi, gi_ref) <= tol);

        auto gw_ref = random_vec<T>(gen, w_n);
        auto gw = gw_ref;
        conv2d_backward_weight_ref<T>(g, x, go, gw_ref);
        conv2d_backward_weight<T>(g, x, go, gw);
        CHECK(max_rel_diff(gw, gw_ref) <= tol);
    }
}

template <typename T>
void compare_gemm(double tol, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    auto pick = [&](Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(gen); };
    for (int trial = 0; trial < 150; ++trial) {
        GemmShape s;
        s.batch = pick(1, 3);
        s.m = pick(1, 9);
        s.n = pick(1, 9);
        s.k = pick(1, 9);
        s.trans_a = pick(0, 1);
        s.trans_b = pick(0, 1);
        s.accumulate = pick(0, 1);
        const auto a = random_vec<T>(gen, s.batch * s.m * s.k);
        const auto b = random_vec<T>(gen, s.batch * s.k * s.n);
        auto c_ref = random_vec<T>(gen, s.batch * s.m * s.n);
        auto c = c_ref;
        gemm_ref<T>(s, a, b, c_ref);
        gemm<T>(s, a, b, c);
        CHECK(max_rel_diff(c, c_ref) <= tol);
    }
}

}  // namespace

TEST_CASE("parallel conv kernels match the serial reference") {
    compare_conv<double>(1e-12, 3);
    compare_conv<float>(1e-5, 4);
}

TEST_CASE("parallel gemm matches the serial reference") {
    compare_gemm<double>(1e-12, 5);
    compare_gemm<float>(1e-5, 6);
}

TEST_CASE("gemm on a hand example") {
    // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
    const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
    std::vector<double> c(4, 0.0), c_ref(4, 0.0);
    GemmShape s{1, 2, 2, 2, false, false, false};
    gemm<double>(s, a, b, c);
    gemm_ref<double>(s, a, b, c_ref);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
    CHECK(c_ref == c);
    s.trans_b = true;  // A * B^T = [17 23; 39 53]
    gemm<double>(s, a, b, c);
    CHECK(c == std::vector<double>{17, 23, 39, 53});
}

TEST_CASE("results do not depend on the thread count") {
    std::mt19937_64 gen(9);
    ConvGeometry g;
    g.batch = 2;
    g.in_channels = 4;
    g.out_channels = 6;
    g.in_h = g.in_w = 11;
    g.kernel_h = g.kernel_w = 3;
    g.pad_h = g.pad_w = 1;
    const auto x = random_vec<float>(gen, 2 * 4 * 11 * 11);
    const auto w = random_vec<float>(gen, 6 * 4 * 9);
    const auto go = random_vec<float>(gen, 2 * 6 * 11 * 11);
    const int saved = omp_get_max_threads();
    std::vector<std::vector<float>> outs;
    for (int threads : {1, 3}) {
        omp_set_num_threads(threads);
        std::vector<float> y(go.size()), gw(w.size(), 0.0f), gi(x.size(), 0.0f);
        conv2d_forward<float>(g, x, w, {}, y);
        conv2d_backward_weight<float>(g, x, go, gw);
        conv2d_backward_input<float>(g, go, w, gi);
        y.insert(y.end(), gw.begin(), gw.end());
        y.insert(y.end(), gi.begin(), gi.end());
        outs.push_back(y);
    }
    omp_set_num_threads(saved);
    CHECK(outs[0] == outs[1]);
}
