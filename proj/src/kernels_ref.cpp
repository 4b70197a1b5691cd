#include "letnet/kernels.hpp"

namespace letnet::kernels {

template <typename T>
void conv2d_forward_ref(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                        std::span<const T> bias, std::span<T> output) {
    const Index oh = g.out_h(), ow = g.out_w();
    const Index icg = g.in_per_group(), ocg = g.out_per_group();
    for (Index n = 0; n < g.batch; ++n)
        for (Index oc = 0; oc < g.out_channels; ++oc) {
            const Index grp = oc / ocg;
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                    T acc{0};
                    for (Index ic = 0; ic < icg; ++ic)
                        for (Index ky = 0; ky < g.kernel_h; ++ky)
                            for (Index kx = 0; kx < g.kernel_w; ++kx) {
                                const Index iy = oy * g.stride_h - g.pad_h + ky * g.dilation_h;
                                const Index ix = ox * g.stride_w - g.pad_w + kx * g.dilation_w;
                                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                                const Index c = grp * icg + ic;
                                acc += weight[((oc * icg + ic) * g.kernel_h + ky) * g.kernel_w + kx] *
                                       input[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
                            }
                    if (!bias.empty()) acc += bias[oc];
                    output[((n * g.out_channels + oc) * oh + oy) * ow + ox] = acc;
                }
        }
}

template <typename T>
void conv2d_backward_input_ref(const ConvGeometry& g, std::span<const T> grad_output,
                               std::span<const T> weight, std::span<T> grad_input) {
    const Index oh = g.out_h(), ow = g.out_w();
    const Index icg = g.in_per_group(), ocg = g.out_per_group();
    for (Index n = 0; n < g.batch; ++n)
        for (Index oc = 0; oc < g.out_channels; ++oc) {
            const Index grp = oc / ocg;
            for (Index oy = 0; oy < oh; ++oy)
                for (Index ox = 0; ox < ow; ++ox) {
                    const T go = grad_output[((n * g.out_channels + oc) * oh + oy) * ow + ox];
                    for (Index ic = 0; ic < icg; ++ic)
                        for (Index ky = 0; ky < g.kernel_h; ++ky)
                            for (Index kx = 0; kx < g.kernel_w; ++kx) {
                                const Index iy = oy * g.stride_h - g.pad_h + ky * g.dilation_h;
                                const Index ix = ox * g.stride_w - g.pad_w + kx * g.dilation_w;
                                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                                const Index c = grp * icg + ic;
                                grad_input[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] +=
                                    go * weight[((oc * icg + ic) * g.kernel_h + ky) * g.kernel_w + kx];
                            }
                }
        }
}

template <typename T>
void conv2d_backward_weight_ref(const ConvGeometry& g, std::span<const T> input,
                                std::span<const T> grad_output, std::span<T> grad_weight) {
    const Index oh = g.out_h(), ow = g.out_w();
    const Index icg = g.in_per_group(), ocg = g.out_per_group();
    for (Index oc = 0; oc < g.out_channels; ++oc) {
        const Index grp = oc / ocg;
        for (Index ic = 0; ic < icg; ++ic)
            for (Index ky = 0; ky < g.kernel_h; ++ky)
                for (Index kx = 0; kx < g.kernel_w; ++kx) {
                    T acc{0};
                    for (Index n = 0; n < g.batch; ++n)
                        for (Index oy = 0; oy < oh; ++oy)
                            for (Index ox = 0; ox < ow; ++ox) {
                                const Index iy = oy * g.stride_h - g.pad_h + ky * g.dilation_h;
                                const Index ix = ox * g.stride_w - g.pad_w + kx * g.dilation_w;
                                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                                const Index c = grp * icg + ic;
                                acc += grad_output[((n * g.out_channels + oc) * oh + oy) * ow + ox] *
                                       input[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
                            }
                    grad_weight[((oc * icg + ic) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
                }
    }
}

template <typename T>
void gemm_ref(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c) {
    for (Index bt = 0; bt < s.batch; ++bt) {
        const T* A = a.data() + bt * s.m * s.k;
        const T* B = b.data() + bt * s.k * s.n;
        T* C = c.data() + bt * s.m * s.n;
        for (Index i = 0; i < s.m; ++i)
            for (Index j = 0; j < s.n; ++j) {
                T acc{0};
                for (Index p = 0; p < s.k; ++p) {
                    const T av = s.trans_a ? A[p * s.m + i] : A[i * s.k + p];
                    const T bv = s.trans_b ? B[j * s.k + p] : B[p * s.n + j];
                    acc += av * bv;
                }
                C[i * s.n + j] = s.accumulate ? C[i * s.n + j] + acc : acc;
            }
    }
}

#define LETNET_KERNELS_REF(T)                                                                     \
    template void conv2d_forward_ref<T>(const ConvGeometry&, std::span<const T>,                  \
                                        std::span<const T>, std::span<const T>, std::span<T>);    \
    template void conv2d_backward_input_ref<T>(const ConvGeometry&, std::span<const T>,           \
                                               std::span<const T>, std::span<T>);                 \
    template void conv2d_backward_weight_ref<T>(const ConvGeometry&, std::span<const T>,          \
                                                std::span<const T>, std::span<T>);                \
    template void gemm_ref<T>(const GemmShape&, std::span<const T>, std::span<const T>, std::span<T>);

LETNET_KERNELS_REF(float)
LETNET_KERNELS_REF(double)

}  // namespace letnet::kernels
