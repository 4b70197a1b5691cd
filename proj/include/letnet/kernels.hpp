#pragma once

// Raw compute kernels. Every kernel has a serial reference version (`*_ref`)
// written as the most literal loop nest, and an OpenMP version used by the
// differentiable ops. The parallel versions split work over independent
// output elements only, so results do not depend on the thread count.

#include <cstdint>
#include <span>

namespace letnet::kernels {

using Index = std::int64_t;

struct ConvGeometry {
    Index batch = 1;
    Index in_channels = 1;
    Index in_h = 1, in_w = 1;
    Index out_channels = 1;
    Index kernel_h = 1, kernel_w = 1;
    Index stride_h = 1, stride_w = 1;
    Index pad_h = 0, pad_w = 0;
    Index dilation_h = 1, dilation_w = 1;
    Index groups = 1;

    Index out_h() const { return (in_h + 2 * pad_h - dilation_h * (kernel_h - 1) - 1) / stride_h + 1; }
    Index out_w() const { return (in_w + 2 * pad_w - dilation_w * (kernel_w - 1) - 1) / stride_w + 1; }
    Index in_per_group() const { return in_channels / groups; }
    Index out_per_group() const { return out_channels / groups; }
};

// out[n,oc,oy,ox] = bias[oc] + sum_{ic,ky,kx} w[oc,ic,ky,kx] * in[n, g*icg+ic, oy*s-p+ky*d, ox*s-p+kx*d]
template <typename T>
void conv2d_forward_ref(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                        std::span<const T> bias, std::span<T> output);
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output);

// grad_input += conv2d^T(grad_output)
template <typename T>
void conv2d_backward_input_ref(const ConvGeometry& g, std::span<const T> grad_output,
                               std::span<const T> weight, std::span<T> grad_input);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input);

// grad_weight += correlation of input with grad_output
template <typename T>
void conv2d_backward_weight_ref(const ConvGeometry& g, std::span<const T> input,
                                std::span<const T> grad_output, std::span<T> grad_weight);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight);

// Batched C[b] (+)= op(A[b]) * op(B[b]); op transposes when the flag is set.
// A is M x K (or K x M when trans_a), B is K x N (or N x K when trans_b).
struct GemmShape {
    Index batch = 1;
    Index m = 1, n = 1, k = 1;
    bool trans_a = false;
    bool trans_b = false;
    bool accumulate = false;
};

template <typename T>
void gemm_ref(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c);
template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c);

}  // namespace letnet::kernels
