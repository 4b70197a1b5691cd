#include <algorithm>

#include "letnet/kernels.hpp"

namespace letnet::kernels {

namespace {

// Range of output columns whose input column ox*stride - pad + offset lies in [0, width).
inline void valid_range(Index out_w, Index stride, Index pad, Index offset, Index width, Index& lo,
                        Index& hi) {
    const Index shift = offset - pad;
    lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
    const Index last = width - 1 - shift;  // need ox*stride <= last
    hi = last < 0 ? 0 : std::min(out_w, last / stride + 1);
    if (hi < lo) hi = lo;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> output) {
    const Index oh = g.out_h(), ow = g.out_w();
    const Index icg = g.in_per_group(), ocg = g.out_per_group();
    const Index planes = g.batch * g.out_channels;
#pragma omp parallel for schedule(static)
    for (Index plane = 0; plane < planes; ++plane) {
        const Index n = plane / g.out_channels;
        const Index oc = plane % g.out_channels;
        const Index grp = oc / ocg;
        T* out = output.data() + plane * oh * ow;
        std::fill(out, out + oh * ow, T{0});
        for (Index ic = 0; ic < icg; ++ic) {
            const T* in = input.data() + (n * g.in_channels + grp * icg + ic) * g.in_h * g.in_w;
            const T* wk = weight.data() + (oc * icg + ic) * g.kernel_h * g.kernel_w;
            for (Index ky = 0; ky < g.kernel_h; ++ky) {
                Index oy_lo, oy_hi;
                valid_range(oh, g.stride_h, g.pad_h, ky * g.dilation_h, g.in_h, oy_lo, oy_hi);
                for (Index kx = 0; kx < g.kernel_w; ++kx) {
                    const T w = wk[ky * g.kernel_w + kx];
                    Index ox_lo, ox_hi;
                    valid_range(ow, g.stride_w, g.pad_w, kx * g.dilation_w, g.in_w, ox_lo, ox_hi);
                    const Index xoff = kx * g.dilation_w - g.pad_w;
                    for (Index oy = oy_lo; oy < oy_hi; ++oy) {
                        const Index iy = oy * g.stride_h - g.pad_h + ky * g.dilation_h;
                        const T* in_row = in + iy * g.in_w;
                        T* out_row = out + oy * ow;
                        if (g.stride_w == 1) {
                            const T* src = in_row + xoff;
                            for (Index ox = ox_lo; ox < ox_hi; ++ox) out_row[ox] += w * src[ox];
                        } else {
                            for (Index ox = ox_lo; ox < ox_hi; ++ox)
                                out_row[ox] += w * in_row[ox * g.stride_w + xoff];
                        }
                    }
                }
            }
        }
        if (!bias.empty()) {
            const T b = bias[oc];
            for (Index i = 0; i < oh * ow; ++i) out[i] += b;
        }
    }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_output,
                           std::span<const T> weight, std::span<T> grad_input) {
    const Index oh = g.out_h(), ow = g.out_w();
    const Index icg = g.in_per_group(), ocg = g.out_per_group();
    const Index planes = g.batch * g.in_channels;
#pragma omp parallel for schedule(static)
    for (Index plane = 0; plane < planes; ++plane) {
        const Index n = plane / g.in_channels;
        const Index c = plane % g.in_channels;
        const Index grp = c / icg;
        const Index ic = c % icg;
        T* gin = grad_input.data() + plane * g.in_h * g.in_w;
        for (Index oc = grp * ocg; oc < (grp + 1) * ocg; ++oc) {
            const T* gout = grad_output.data() + (n * g.out_channels + oc) * oh * ow;
            const T* wk = weight.data() + (oc * icg + ic) * g.kernel_h * g.kernel_w;
            for (Index ky = 0; ky < g.kernel_h; ++ky) {
                Index oy_lo, oy_hi;
                valid_range(oh, g.stride_h, g.pad_h, ky * g.dilation_h, g.in_h, oy_lo, oy_hi);
                for (Index kx = 0; kx < g.kernel_w; ++kx) {
                    const T w = wk[ky * g.kernel_w + kx];
                    Index ox_lo, ox_hi;
                    valid_range(ow, g.stride_w, g.pad_w, kx * g.dilation_w, g.in_w, ox_lo, ox_hi);
                    const Index xoff = kx * g.dilation_w - g.pad_w;
                    for (Index oy = oy_lo; oy < oy_hi; ++oy) {
                        const Index iy = oy * g.stride_h - g.pad_h + ky * g.dilation_h;
                        T* gin_row = gin + iy * g.in_w;
                        const T* gout_row = gout + oy * ow;
                        if (g.stride_w == 1) {
                            T* dst = gin_row + xoff;
                            for (Index ox = ox_lo; ox < ox_hi; ++ox) dst[ox] += w * gout_row[ox];
                        } else {
                            for (Index ox = ox_lo; ox < ox_hi; ++ox)
                                gin_row[ox * g.stride_w + xoff] += w * gout_row[ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> input,
                            std::span<const T> grad_output, std::span<T> grad_weight) {
    const Index oh = g.out_h(), ow = g.out_w();
    const Index icg = g.in_per_group(), ocg = g.out_per_group();
    const Index taps = icg * g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
    for (Index flat = 0; flat < g.out_channels * taps; ++flat) {
        const Index oc = flat / taps;
        const Index rem = flat % taps;
        const Index ic = rem / (g.kernel_h * g.kernel_w);
        const Index ky = (rem / g.kernel_w) % g.kernel_h;
        const Index kx = rem % g.kernel_w;
        const Index grp = oc / ocg;
        Index oy_lo, oy_hi, ox_lo, ox_hi;
        valid_range(oh, g.stride_h, g.pad_h, ky * g.dilation_h, g.in_h, oy_lo, oy_hi);
        valid_range(ow, g.stride_w, g.pad_w, kx * g.dilation_w, g.in_w, ox_lo, ox_hi);
        const Index xoff = kx * g.dilation_w - g.pad_w;
        T acc{0};
        for (Index n = 0; n < g.batch; ++n) {
            const T* gout = grad_output.data() + (n * g.out_channels + oc) * oh * ow;
            const T* in = input.data() + (n * g.in_channels + grp * icg + ic) * g.in_h * g.in_w;
            for (Index oy = oy_lo; oy < oy_hi; ++oy) {
                const Index iy = oy * g.stride_h - g.pad_h + ky * g.dilation_h;
                const T* in_row = in + iy * g.in_w;
                const T* gout_row = gout + oy * ow;
                T row_acc{0};
                if (g.stride_w == 1) {
                    const T* src = in_row + xoff;
                    for (Index ox = ox_lo; ox < ox_hi; ++ox) row_acc += gout_row[ox] * src[ox];
                } else {
                    for (Index ox = ox_lo; ox < ox_hi; ++ox)
                        row_acc += gout_row[ox] * in_row[ox * g.stride_w + xoff];
                }
                acc += row_acc;
            }
        }
        grad_weight[flat] += acc;
    }
}

template <typename T>
void gemm(const GemmShape& s, std::span<const T> a, std::span<const T> b, std::span<T> c) {
    const Index rows = s.batch * s.m;
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < rows; ++r) {
        const Index bt = r / s.m;
        const Index i = r % s.m;
        const T* A = a.data() + bt * s.m * s.k;
        const T* B = b.data() + bt * s.k * s.n;
        T* C = c.data() + bt * s.m * s.n + i * s.n;
        if (s.trans_b) {
            for (Index j = 0; j < s.n; ++j) {
                const T* brow = B + j * s.k;
                T acc{0};
                if (!s.trans_a) {
                    const T* arow = A + i * s.k;
                    for (Index p = 0; p < s.k; ++p) acc += arow[p] * brow[p];
                } else {
                    for (Index p = 0; p < s.k; ++p) acc += A[p * s.m + i] * brow[p];
                }
                C[j] = s.accumulate ? C[j] + acc : acc;
            }
        } else {
            if (!s.accumulate) std::fill(C, C + s.n, T{0});
            for (Index p = 0; p < s.k; ++p) {
                const T av = s.trans_a ? A[p * s.m + i] : A[i * s.k + p];
                const T* brow = B + p * s.n;
                for (Index j = 0; j < s.n; ++j) C[j] += av * brow[j];
            }
        }
    }
}

#define LETNET_KERNELS_OMP(T)                                                                     \
    template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                    std::span<const T>, std::span<T>);                            \
    template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,               \
                                           std::span<const T>, std::span<T>);                     \
    template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,              \
                                            std::span<const T>, std::span<T>);                    \
    template void gemm<T>(const GemmShape&, std::span<const T>, std::span<const T>, std::span<T>);

LETNET_KERNELS_OMP(float)
LETNET_KERNELS_OMP(double)

}  // namespace letnet::kernels
