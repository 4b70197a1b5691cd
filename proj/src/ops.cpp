#include "letnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "letnet/diagnostics.hpp"
#include "letnet/kernels.hpp"

namespace letnet {

// ---------------------------------------------------------------------------
// ConvSpec

void ConvSpec::validate() const {
    auto positive = [](Index v) { return v > 0; };
    if (!positive(in_channels) || !positive(out_channels) || !positive(groups)) {
        throw ConfigError("conv channels and groups must be positive");
    }
    if (!positive(kernel.h) || !positive(kernel.w) || !positive(stride.h) || !positive(stride.w) ||
        !positive(dilation.h) || !positive(dilation.w) || padding.h < 0 || padding.w < 0) {
        throw ConfigError("conv kernel, stride and dilation must be positive, padding non-negative");
    }
    if (in_channels % groups != 0 || out_channels % groups != 0) {
        throw ConfigError("conv channels " + std::to_string(in_channels) + "->" +
                          std::to_string(out_channels) + " not divisible by groups " +
                          std::to_string(groups));
    }
}

Extent2 ConvSpec::output_extent(Extent2 input) const {
    const Index h = (input.h + 2 * padding.h - dilation.h * (kernel.h - 1) - 1);
    const Index w = (input.w + 2 * padding.w - dilation.w * (kernel.w - 1) - 1);
    if (h < 0 || w < 0) {
        throw ConfigError("conv output extent is non-positive for input " + std::to_string(input.h) +
                          "x" + std::to_string(input.w));
    }
    return {h / stride.h + 1, w / stride.w + 1};
}

ConvSpec ConvSpec::pointwise(Index in, Index out, bool bias) {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.bias = bias;
    return s;
}

ConvSpec ConvSpec::vertical(Index channels_in, Index channels_out, Index k, Index dilation,
                            Index groups) {
    ConvSpec s;
    s.in_channels = channels_in;
    s.out_channels = channels_out;
    s.kernel = {k, 1};
    s.dilation = {dilation, 1};
    s.padding = {dilation * (k - 1) / 2, 0};
    s.groups = groups;
    return s;
}

ConvSpec ConvSpec::horizontal(Index channels_in, Index channels_out, Index k, Index dilation,
                              Index groups) {
    ConvSpec s;
    s.in_channels = channels_in;
    s.out_channels = channels_out;
    s.kernel = {1, k};
    s.dilation = {1, dilation};
    s.padding = {0, dilation * (k - 1) / 2};
    s.groups = groups;
    return s;
}

// ---------------------------------------------------------------------------
// MAC instrumentation

namespace {
thread_local MacCounter* active_counter = nullptr;
}

MacCounter::MacCounter() : previous_(active_counter) { active_counter = this; }
MacCounter::~MacCounter() { active_counter = previous_; }

namespace detail {
void count_macs(std::uint64_t macs) {
    if (active_counter != nullptr) active_counter->add(macs);
}
}  // namespace detail

namespace {

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ConfigError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                          " tensor, got " + shape_str(t.shape()));
    }
}

template <typename T>
void accumulate_into(const BasicTensor<T>& t, std::span<const T> g) {
    if (t.requires_grad()) t.handle()->accumulate_grad(g);
}

// Strides of `shape` broadcast to `out` (0 on broadcast axes).
std::vector<Index> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<Index> strides(out.size(), 0);
    Index stride = 1;
    for (std::size_t i = shape.size(); i-- > 0;) {
        strides[i] = shape[i] == 1 && out[i] != 1 ? 0 : stride;
        stride *= shape[i];
    }
    return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size()) {
        throw ConfigError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
    Shape out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i] || b[i] == 1) {
            out[i] = a[i];
        } else if (a[i] == 1) {
            out[i] = b[i];
        } else {
            throw ConfigError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                              shape_str(b));
        }
    }
    return out;
}

// Visits every output flat index with the matching flat offsets into a and b.
template <typename F>
void for_each_broadcast(const Shape& out, const std::vector<Index>& sa,
                        const std::vector<Index>& sb, F&& f) {
    const std::size_t rank = out.size();
    const Index total = shape_numel(out);
    if (rank == 0) {
        if (total == 1) f(0, 0, 0);
        return;
    }
    std::vector<Index> idx(rank, 0);
    Index ia = 0, ib = 0;
    const Index inner = out[rank - 1];
    const Index inner_sa = sa[rank - 1], inner_sb = sb[rank - 1];
    for (Index flat = 0; flat < total; flat += inner) {
        for (Index j = 0; j < inner; ++j) f(flat + j, ia + j * inner_sa, ib + j * inner_sb);
        for (std::size_t axis = rank - 1; axis-- > 0;) {
            ++idx[axis];
            ia += sa[axis];
            ib += sb[axis];
            if (idx[axis] < out[axis]) break;
            ia -= sa[axis] * out[axis];
            ib -= sb[axis] * out[axis];
            idx[axis] = 0;
        }
    }
}

template <typename T>
kernels::ConvGeometry geometry_for(const BasicTensor<T>& input, const ConvSpec& spec) {
    kernels::ConvGeometry g;
    g.batch = input.dim(0);
    g.in_channels = spec.in_channels;
    g.in_h = input.dim(2);
    g.in_w = input.dim(3);
    g.out_channels = spec.out_channels;
    g.kernel_h = spec.kernel.h;
    g.kernel_w = spec.kernel.w;
    g.stride_h = spec.stride.h;
    g.stride_w = spec.stride.w;
    g.pad_h = spec.padding.h;
    g.pad_w = spec.padding.w;
    g.dilation_h = spec.dilation.h;
    g.dilation_w = spec.dilation.w;
    g.groups = spec.groups;
    return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const ConvSpec& spec) {
    spec.validate();
    require_rank(input, 4, "conv2d");
    if (input.dim(1) != spec.in_channels) {
        throw ConfigError("conv2d: input has " + std::to_string(input.dim(1)) +
                          " channels, spec expects " + std::to_string(spec.in_channels));
    }
    if (weight.shape() != spec.weight_shape()) {
        throw ConfigError("conv2d: weight shape " + shape_str(weight.shape()) + ", expected " +
                          shape_str(spec.weight_shape()));
    }
    if (spec.bias != bias.has_value()) {
        throw ConfigError("conv2d: bias presence does not match spec");
    }
    if (bias && bias->shape() != Shape{spec.out_channels}) {
        throw ConfigError("conv2d: bias shape " + shape_str(bias->shape()));
    }
    const Extent2 out_ext = spec.output_extent({input.dim(2), input.dim(3)});
    const auto g = geometry_for(input, spec);
    BasicTensor<T> out(Shape{input.dim(0), spec.out_channels, out_ext.h, out_ext.w});
    kernels::conv2d_forward<T>(g, input.data(), weight.data(),
                               bias ? bias->data() : std::span<const T>{}, out.data());
    detail::count_macs(static_cast<std::uint64_t>(out.numel()) *
                       static_cast<std::uint64_t>(spec.kernel.h * spec.kernel.w * g.in_per_group()));

    std::vector<BasicTensor<T>> inputs{input, weight};
    if (bias) inputs.push_back(*bias);
    attach_node<T>(out, "conv2d", inputs,
                   [x = input, w = weight, b = bias, g](const TensorImpl<T>& o) mutable {
                       std::span<const T> go = o.grad;
                       if (x.requires_grad())
                           kernels::conv2d_backward_input<T>(g, go, w.data(), x.mutable_grad());
                       if (w.requires_grad())
                           kernels::conv2d_backward_weight<T>(g, x.data(), go, w.mutable_grad());
                       if (b && b->requires_grad()) {
                           auto gb = b->mutable_grad();
                           const Index plane = g.out_h() * g.out_w();
                           for (Index n = 0; n < g.batch; ++n)
                               for (Index c = 0; c < g.out_channels; ++c) {
                                   T acc{0};
                                   const T* src = go.data() + (n * g.out_channels + c) * plane;
                                   for (Index i = 0; i < plane; ++i) acc += src[i];
                                   gb[c] += acc;
                               }
                       }
                   });
    return out;
}

// ---------------------------------------------------------------------------
// normalization

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                          BasicTensor<T>& running_var, NormMode mode, double momentum,
                          double eps) {
    require_rank(input, 4, "batch_norm");
    const Index N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    for (const BasicTensor<T>* t : std::initializer_list<const BasicTensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
        if (t->shape() != Shape{C}) {
            throw ConfigError("batch_norm: parameter shape " + shape_str(t->shape()) +
                              " does not match " + std::to_string(C) + " channels");
        }
    }
    const Index count = N * HW;
    std::vector<T> mean_c(C), inv_std(C);
    const auto x = input.data();
    if (mode == NormMode::Train) {
        if (count < 1) throw ConfigError("batch_norm: empty batch");
        auto rm = running_mean.data();
        auto rv = running_var.data();
        for (Index c = 0; c < C; ++c) {
            double s = 0.0;
            for (Index n = 0; n < N; ++n) {
                const T* p = x.data() + (n * C + c) * HW;
                for (Index i = 0; i < HW; ++i) s += p[i];
            }
            const double mu = s / static_cast<double>(count);
            double ss = 0.0;
            for (Index n = 0; n < N; ++n) {
                const T* p = x.data() + (n * C + c) * HW;
                for (Index i = 0; i < HW; ++i) {
                    const double d = p[i] - mu;
                    ss += d * d;
                }
            }
            const double var = ss / static_cast<double>(count);
            mean_c[c] = static_cast<T>(mu);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
            const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
            rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * mu);
            rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
        }
    } else {
        for (Index c = 0; c < C; ++c) {
            mean_c[c] = running_mean.data()[c];
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) + eps));
        }
    }

    BasicTensor<T> out(input.shape());
    auto y = out.data();
    const auto gm = gamma.data();
    const auto bt = beta.data();
    for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c) {
            const Index base = (n * C + c) * HW;
            const T a = gm[c] * inv_std[c];
            const T b = bt[c] - a * mean_c[c];
            for (Index i = 0; i < HW; ++i) y[base + i] = a * x[base + i] + b;
        }

    const bool train = mode == NormMode::Train;
    attach_node<T>(out, "batch_norm", {input, gamma, beta},
                   [xin = input, gam = gamma, bet = beta, mean_c, inv_std, N, C, HW,
                    train](const TensorImpl<T>& o) mutable {
                       const auto go = std::span<const T>(o.grad);
                       const auto xv = xin.data();
                       const double count = static_cast<double>(N * HW);
                       std::vector<T> dgamma(C, T{0}), dbeta(C, T{0});
                       std::vector<T> gx;
                       if (xin.requires_grad()) gx.assign(xv.size(), T{0});
                       for (Index c = 0; c < C; ++c) {
                           double sdy = 0.0, sdy_xhat = 0.0;
                           for (Index n = 0; n < N; ++n) {
                               const Index base = (n * C + c) * HW;
                               for (Index i = 0; i < HW; ++i) {
                                   const double xhat = (xv[base + i] - mean_c[c]) * inv_std[c];
                                   sdy += go[base + i];
                                   sdy_xhat += go[base + i] * xhat;
                               }
                           }
                           dgamma[c] = static_cast<T>(sdy_xhat);
                           dbeta[c] = static_cast<T>(sdy);
                           if (gx.empty()) continue;
                           const double g = gam.data()[c];
                           for (Index n = 0; n < N; ++n) {
                               const Index base = (n * C + c) * HW;
                               for (Index i = 0; i < HW; ++i) {
                                   if (train) {
                                       const double xhat = (xv[base + i] - mean_c[c]) * inv_std[c];
                                       gx[base + i] = static_cast<T>(
                                           g * inv_std[c] *
                                           (go[base + i] - sdy / count - xhat * sdy_xhat / count));
                                   } else {
                                       gx[base + i] = static_cast<T>(g * inv_std[c] * go[base + i]);
                                   }
                               }
                           }
                       }
                       if (!gx.empty()) accumulate_into<T>(xin, gx);
                       accumulate_into<T>(gam, dgamma);
                       accumulate_into<T>(bet, dbeta);
                   });
    return out;
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps) {
    if (input.rank() < 1) throw ConfigError("layer_norm: rank-0 input");
    const Index D = input.shape().back();
    if (gamma.shape() != Shape{D} || beta.shape() != Shape{D}) {
        throw ConfigError("layer_norm: parameter shape does not match last axis " + std::to_string(D));
    }
    const Index rows = input.numel() / D;
    std::vector<T> mean_r(rows), inv_std(rows);
    BasicTensor<T> out(input.shape());
    const auto x = input.data();
    auto y = out.data();
    for (Index r = 0; r < rows; ++r) {
        const T* p = x.data() + r * D;
        double s = 0.0;
        for (Index i = 0; i < D; ++i) s += p[i];
        const double mu = s / static_cast<double>(D);
        double ss = 0.0;
        for (Index i = 0; i < D; ++i) ss += (p[i] - mu) * (p[i] - mu);
        mean_r[r] = static_cast<T>(mu);
        inv_std[r] = static_cast<T>(1.0 / std::sqrt(ss / static_cast<double>(D) + eps));
        for (Index i = 0; i < D; ++i)
            y[r * D + i] = (p[i] - mean_r[r]) * inv_std[r] * gamma.data()[i] + beta.data()[i];
    }
    attach_node<T>(out, "layer_norm", {input, gamma, beta},
                   [xin = input, gam = gamma, bet = beta, mean_r, inv_std, rows,
                    D](const TensorImpl<T>& o) mutable {
                       const auto go = std::span<const T>(o.grad);
                       const auto xv = xin.data();
                       const auto gv = gam.data();
                       std::vector<T> dgamma(D, T{0}), dbeta(D, T{0});
                       std::vector<T> gx;
                       if (xin.requires_grad()) gx.assign(xv.size(), T{0});
                       for (Index r = 0; r < rows; ++r) {
                           double s1 = 0.0, s2 = 0.0;
                           for (Index i = 0; i < D; ++i) {
                               const double xhat = (xv[r * D + i] - mean_r[r]) * inv_std[r];
                               const double dxhat = go[r * D + i] * gv[i];
                               dgamma[i] += static_cast<T>(go[r * D + i] * xhat);
                               dbeta[i] += go[r * D + i];
                               s1 += dxhat;
                               s2 += dxhat * xhat;
                           }
                           if (gx.empty()) continue;
                           for (Index i = 0; i < D; ++i) {
                               const double xhat = (xv[r * D + i] - mean_r[r]) * inv_std[r];
                               const double dxhat = go[r * D + i] * gv[i];
                               gx[r * D + i] = static_cast<T>(
                                   inv_std[r] * (dxhat - s1 / static_cast<double>(D) -
                                                 xhat * s2 / static_cast<double>(D)));
                           }
                       }
                       if (!gx.empty()) accumulate_into<T>(xin, gx);
                       accumulate_into<T>(gam, dgamma);
                       accumulate_into<T>(bet, dbeta);
                   });
    return out;
}

// ---------------------------------------------------------------------------
// linear and bmm

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias) {
    if (input.rank() < 1 || weight.rank() != 2) throw ConfigError("linear: bad operand ranks");
    const Index in = input.shape().back();
    const Index outf = weight.dim(0);
    if (weight.dim(1) != in) {
        throw ConfigError("linear: weight " + shape_str(weight.shape()) + " vs input features " +
                          std::to_string(in));
    }
    if (bias && bias->shape() != Shape{outf}) throw ConfigError("linear: bias shape mismatch");
    const Index rows = input.numel() / in;
    Shape out_shape = input.shape();
    out_shape.back() = outf;
    BasicTensor<T> out(out_shape);
    kernels::GemmShape gs{1, rows, outf, in, false, true, false};
    kernels::gemm<T>(gs, input.data(), weight.data(), out.data());
    if (bias) {
        auto y = out.data();
        for (Index r = 0; r < rows; ++r)
            for (Index j = 0; j < outf; ++j) y[r * outf + j] += bias->data()[j];
    }
    detail::count_macs(static_cast<std::uint64_t>(rows * in * outf));
    std::vector<BasicTensor<T>> inputs{input, weight};
    if (bias) inputs.push_back(*bias);
    attach_node<T>(out, "linear", inputs,
                   [x = input, w = weight, b = bias, rows, in, outf](const TensorImpl<T>& o) mutable {
                       const std::span<const T> go = o.grad;
                       if (x.requires_grad()) {
                           // dx (rows x in) += go (rows x out) * W (out x in)
                           kernels::GemmShape s{1, rows, in, outf, false, false, true};
                           kernels::gemm<T>(s, go, w.data(), x.mutable_grad());
                       }
                       if (w.requires_grad()) {
                           // dW (out x in) += go^T (out x rows) * x (rows x in)
                           kernels::GemmShape s{1, outf, in, rows, true, false, true};
                           kernels::gemm<T>(s, go, x.data(), w.mutable_grad());
                       }
                       if (b && b->requires_grad()) {
                           auto gb = b->mutable_grad();
                           for (Index r = 0; r < rows; ++r)
                               for (Index j = 0; j < outf; ++j) gb[j] += go[r * outf + j];
                       }
                   });
    return out;
}

template <typename T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b, bool trans_a, bool trans_b) {
    require_rank(a, 3, "bmm");
    require_rank(b, 3, "bmm");
    const Index B = a.dim(0);
    const Index M = trans_a ? a.dim(2) : a.dim(1);
    const Index K = trans_a ? a.dim(1) : a.dim(2);
    const Index Kb = trans_b ? b.dim(2) : b.dim(1);
    const Index N = trans_b ? b.dim(1) : b.dim(2);
    if (b.dim(0) != B || Kb != K) {
        throw ConfigError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    }
    BasicTensor<T> out(Shape{B, M, N});
    kernels::gemm<T>({B, M, N, K, trans_a, trans_b, false}, a.data(), b.data(), out.data());
    detail::count_macs(static_cast<std::uint64_t>(B * M * N * K));
    attach_node<T>(out, "bmm", {a, b},
                   [a, b, B, M, N, K, trans_a, trans_b](const TensorImpl<T>& o) mutable {
                       const std::span<const T> go = o.grad;  // B x M x N
                       if (a.requires_grad()) {
                           if (!trans_a) {
                               // dA (M x K) += go * op(B)^T
                               kernels::gemm<T>({B, M, K, N, false, !trans_b, true}, go, b.data(),
                                                a.mutable_grad());
                           } else {
                               // dA (K x M) += op(B) * go^T
                               kernels::gemm<T>({B, K, M, N, trans_b, true, true}, b.data(), go,
                                                a.mutable_grad());
                           }
                       }
                       if (b.requires_grad()) {
                           if (!trans_b) {
                               // dB (K x N) += op(A)^T * go
                               kernels::gemm<T>({B, K, N, M, !trans_a, false, true}, a.data(), go,
                                                b.mutable_grad());
                           } else {
                               // dB (N x K) += go^T * op(A)
                               kernels::gemm<T>({B, N, K, M, true, trans_a, true}, go, a.data(),
                                                b.mutable_grad());
                           }
                       }
                   });
    return out;
}

// ---------------------------------------------------------------------------
// activations

namespace {

template <typename T, typename Fwd, typename Deriv>
BasicTensor<T> unary(const BasicTensor<T>& input, const char* name, Fwd fwd, Deriv deriv) {
    BasicTensor<T> out(input.shape());
    const auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    attach_node<T>(out, name, {input}, [x = input, deriv](const TensorImpl<T>& o) mutable {
        auto gx = x.mutable_grad();
        const auto xv = x.data();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * deriv(xv[i], o.data[i]);
    });
    return out;
}

}  // namespace

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    return unary<T>(
        input, "relu", [](T v) { return v < T{0} ? T{0} : v; },
        [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
    return unary<T>(
        input, "sigmoid",
        [](T v) {
            if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
            const T e = std::exp(v);
            return e / (T{1} + e);
        },
        [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& input) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary<T>(
        input, "gelu",
        [](T v) { return static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2))); },
        [](T x, T) {
            const double xd = x;
            return static_cast<T>(0.5 * (1.0 + std::erf(xd * inv_sqrt2)) +
                                  xd * inv_sqrt2pi * std::exp(-0.5 * xd * xd));
        });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input, int axis) {
    const int rank = static_cast<int>(input.rank());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ConfigError("softmax: invalid axis");
    const Shape& s = input.shape();
    Index outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < rank; ++i) inner *= s[i];
    const Index len = s[axis];
    BasicTensor<T> out(s);
    const auto x = input.data();
    auto y = out.data();
#pragma omp parallel for schedule(static)
    for (Index o = 0; o < outer; ++o)
        for (Index in = 0; in < inner; ++in) {
            const Index base = o * len * inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (Index k = 0; k < len; ++k) mx = std::max(mx, x[base + k * inner]);
            T denom{0};
            for (Index k = 0; k < len; ++k) {
                const T e = std::exp(x[base + k * inner] - mx);
                y[base + k * inner] = e;
                denom += e;
            }
            for (Index k = 0; k < len; ++k) y[base + k * inner] /= denom;
        }
    attach_node<T>(out, "softmax", {input}, [x = input, outer, inner, len](const TensorImpl<T>& o) mutable {
        auto gx = x.mutable_grad();
        const auto& yv = o.data;
        const auto& gy = o.grad;
#pragma omp parallel for schedule(static)
        for (Index ou = 0; ou < outer; ++ou)
            for (Index in = 0; in < inner; ++in) {
                const Index base = ou * len * inner + in;
                T dot{0};
                for (Index k = 0; k < len; ++k) dot += gy[base + k * inner] * yv[base + k * inner];
                for (Index k = 0; k < len; ++k) {
                    const Index i = base + k * inner;
                    gx[i] += yv[i] * (gy[i] - dot);
                }
            }
    });
    return out;
}

// ---------------------------------------------------------------------------
// pooling

template <typename T>
BasicTensor<T> pool2d(const BasicTensor<T>& input, PoolKind kind, const PoolWindow& window) {
    require_rank(input, 4, "pool2d");
    const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const Index kh = window.global ? H : window.size.h;
    const Index kw = window.global ? W : window.size.w;
    const Index sh = window.global ? H : window.stride.h;
    const Index sw = window.global ? W : window.stride.w;
    if (kh < 1 || kw < 1 || sh < 1 || sw < 1 || kh > H || kw > W) {
        throw ConfigError("pool2d: window " + std::to_string(kh) + "x" + std::to_string(kw) +
                          " does not fit input " + shape_str(input.shape()));
    }
    const Index oh = (H - kh) / sh + 1, ow = (W - kw) / sw + 1;
    BasicTensor<T> out(Shape{N, C, oh, ow});
    std::vector<Index> argmax(kind == PoolKind::Max ? static_cast<std::size_t>(out.numel()) : 0);
    const auto x = input.data();
    auto y = out.data();
    const T inv_area = T{1} / static_cast<T>(kh * kw);
    for (Index p = 0; p < N * C; ++p) {
        const T* plane = x.data() + p * H * W;
        for (Index oy = 0; oy < oh; ++oy)
            for (Index ox = 0; ox < ow; ++ox) {
                const Index o = (p * oh + oy) * ow + ox;
                if (kind == PoolKind::Avg) {
                    T acc{0};
                    for (Index ky = 0; ky < kh; ++ky)
                        for (Index kx = 0; kx < kw; ++kx) acc += plane[(oy * sh + ky) * W + ox * sw + kx];
                    y[o] = acc * inv_area;
                } else {
                    Index best = (oy * sh) * W + ox * sw;
                    for (Index ky = 0; ky < kh; ++ky)
                        for (Index kx = 0; kx < kw; ++kx) {
                            const Index i = (oy * sh + ky) * W + ox * sw + kx;
                            if (plane[i] > plane[best] || std::isnan(plane[i])) best = i;
                        }
                    y[o] = plane[best];
                    argmax[o] = p * H * W + best;
                }
            }
    }
    detail::count_macs(static_cast<std::uint64_t>(out.numel() * kh * kw));
    attach_node<T>(out, "pool2d",
                   {input}, [x = input, kind, argmax = std::move(argmax), N, C, H, W, kh, kw, sh, sw,
                             oh, ow, inv_area](const TensorImpl<T>& o) mutable {
                       auto gx = x.mutable_grad();
                       for (Index p = 0; p < N * C; ++p)
                           for (Index oy = 0; oy < oh; ++oy)
                               for (Index ox = 0; ox < ow; ++ox) {
                                   const Index oi = (p * oh + oy) * ow + ox;
                                   const T g = o.grad[oi];
                                   if (kind == PoolKind::Max) {
                                       gx[argmax[oi]] += g;
                                       continue;
                                   }
                                   for (Index ky = 0; ky < kh; ++ky)
                                       for (Index kx = 0; kx < kw; ++kx)
                                           gx[p * H * W + (oy * sh + ky) * W + ox * sw + kx] += g * inv_area;
                               }
                   });
    return out;
}

template <typename T>
BasicTensor<T> channel_pool(const BasicTensor<T>& input, PoolKind kind) {
    require_rank(input, 4, "channel_pool");
    const Index N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    BasicTensor<T> out(Shape{N, 1, input.dim(2), input.dim(3)});
    std::vector<Index> argmax(kind == PoolKind::Max ? static_cast<std::size_t>(N * HW) : 0);
    const auto x = input.data();
    auto y = out.data();
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < HW; ++i) {
            if (kind == PoolKind::Avg) {
                T acc{0};
                for (Index c = 0; c < C; ++c) acc += x[(n * C + c) * HW + i];
                y[n * HW + i] = acc / static_cast<T>(C);
            } else {
                Index best = 0;
                for (Index c = 1; c < C; ++c)
                    if (x[(n * C + c) * HW + i] > x[(n * C + best) * HW + i] || std::isnan(x[(n * C + c) * HW + i]))
                        best = c;
                y[n * HW + i] = x[(n * C + best) * HW + i];
                argmax[n * HW + i] = best;
            }
        }
    detail::count_macs(static_cast<std::uint64_t>(input.numel()));
    attach_node<T>(out, "channel_pool", {input},
                   [x = input, kind, argmax = std::move(argmax), N, C, HW](const TensorImpl<T>& o) mutable {
                       auto gx = x.mutable_grad();
                       for (Index n = 0; n < N; ++n)
                           for (Index i = 0; i < HW; ++i) {
                               const T g = o.grad[n * HW + i];
                               if (kind == PoolKind::Max) {
                                   gx[(n * C + argmax[n * HW + i]) * HW + i] += g;
                               } else {
                                   for (Index c = 0; c < C; ++c) gx[(n * C + c) * HW + i] += g / static_cast<T>(C);
                               }
                           }
                   });
    return out;
}

// ---------------------------------------------------------------------------
// layout ops

Index shuffled_channel(Index channel, Index channels, Index groups) {
    return (channel % groups) * (channels / groups) + channel / groups;
}

template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& input, Index groups) {
    require_rank(input, 4, "channel_shuffle");
    const Index N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
    if (groups < 1 || C % groups != 0) {
        throw ConfigError("channel_shuffle: " + std::to_string(C) + " channels not divisible by " +
                          std::to_string(groups) + " groups");
    }
    std::vector<Index> dest(C);
    for (Index c = 0; c < C; ++c) dest[c] = shuffled_channel(c, C, groups);
    BasicTensor<T> out(input.shape());
    const auto x = input.data();
    auto y = out.data();
    for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < C; ++c)
            std::copy_n(x.data() + (n * C + c) * HW, HW, y.data() + (n * C + dest[c]) * HW);
    attach_node<T>(out, "channel_shuffle", {input},
                   [x = input, dest, N, C, HW](const TensorImpl<T>& o) mutable {
                       auto gx = x.mutable_grad();
                       for (Index n = 0; n < N; ++n)
                           for (Index c = 0; c < C; ++c) {
                               const T* src = o.grad.data() + (n * C + dest[c]) * HW;
                               T* dst = gx.data() + (n * C + c) * HW;
                               for (Index i = 0; i < HW; ++i) dst[i] += src[i];
                           }
                   });
    return out;
}

namespace {

struct Tap {
    Index i0, i1;
    double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(Index in, Index out) {
    std::vector<Tap> taps(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        Index i0 = static_cast<Index>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const Index i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& input, Index out_h, Index out_w) {
    require_rank(input, 4, "resize_bilinear");
    if (out_h < 1 || out_w < 1) throw ConfigError("resize_bilinear: output extent must be >= 1");
    const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const auto ty = bilinear_taps(H, out_h);
    const auto tx = bilinear_taps(W, out_w);
    BasicTensor<T> out(Shape{N, C, out_h, out_w});
    const auto x = input.data();
    auto y = out.data();
#pragma omp parallel for schedule(static)
    for (Index p = 0; p < N * C; ++p) {
        const T* plane = x.data() + p * H * W;
        T* dst = y.data() + p * out_h * out_w;
        for (Index oy = 0; oy < out_h; ++oy) {
            const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T{1} - wy1;
            const T* r0 = plane + ty[oy].i0 * W;
            const T* r1 = plane + ty[oy].i1 * W;
            for (Index ox = 0; ox < out_w; ++ox) {
                const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T{1} - wx1;
                const Index a = tx[ox].i0, b = tx[ox].i1;
                dst[oy * out_w + ox] = wy0 * (wx0 * r0[a] + wx1 * r0[b]) + wy1 * (wx0 * r1[a] + wx1 * r1[b]);
            }
        }
    }
    attach_node<T>(out, "resize_bilinear", {input},
                   [x = input, ty, tx, N, C, H, W, out_h, out_w](const TensorImpl<T>& o) mutable {
                       auto gx = x.mutable_grad();
#pragma omp parallel for schedule(static)
                       for (Index p = 0; p < N * C; ++p) {
                           T* plane = gx.data() + p * H * W;
                           const T* src = o.grad.data() + p * out_h * out_w;
                           for (Index oy = 0; oy < out_h; ++oy) {
                               const T wy1 = static_cast<T>(ty[oy].w1), wy0 = T{1} - wy1;
                               T* r0 = plane + ty[oy].i0 * W;
                               T* r1 = plane + ty[oy].i1 * W;
                               for (Index ox = 0; ox < out_w; ++ox) {
                                   const T g = src[oy * out_w + ox];
                                   const T wx1 = static_cast<T>(tx[ox].w1), wx0 = T{1} - wx1;
                                   const Index a = tx[ox].i0, b = tx[ox].i1;
                                   r0[a] += g * wy0 * wx0;
                                   r0[b] += g * wy0 * wx1;
                                   r1[a] += g * wy1 * wx0;
                                   r1[b] += g * wy1 * wx1;
                               }
                           }
                       }
                   });
    return out;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), "add");
    BasicTensor<T> out(out_shape);
    auto y = out.data();
    if (a.shape() == b.shape()) {
        const auto av = a.data(), bv = b.data();
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    } else {
        const auto sa = broadcast_strides(a.shape(), out_shape);
        const auto sb = broadcast_strides(b.shape(), out_shape);
        const auto av = a.data(), bv = b.data();
        for_each_broadcast(out_shape, sa, sb, [&](Index o, Index ia, Index ib) { y[o] = av[ia] + bv[ib]; });
    }
    attach_node<T>(out, "add", {a, b}, [a, b, out_shape](const TensorImpl<T>& o) mutable {
        if (a.shape() == b.shape()) {
            accumulate_into<T>(a, o.grad);
            accumulate_into<T>(b, o.grad);
            return;
        }
        const auto sa = broadcast_strides(a.shape(), out_shape);
        const auto sb = broadcast_strides(b.shape(), out_shape);
        std::span<T> ga = a.requires_grad() ? a.mutable_grad() : std::span<T>{};
        std::span<T> gb = b.requires_grad() ? b.mutable_grad() : std::span<T>{};
        for_each_broadcast(out_shape, sa, sb, [&](Index oi, Index ia, Index ib) {
            if (!ga.empty()) ga[ia] += o.grad[oi];
            if (!gb.empty()) gb[ib] += o.grad[oi];
        });
    });
    return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), "mul");
    BasicTensor<T> out(out_shape);
    auto y = out.data();
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    {
        const auto av = a.data(), bv = b.data();
        for_each_broadcast(out_shape, sa, sb, [&](Index o, Index ia, Index ib) { y[o] = av[ia] * bv[ib]; });
    }
    attach_node<T>(out, "mul", {a, b}, [a, b, out_shape, sa, sb](const TensorImpl<T>& o) mutable {
        std::span<T> ga = a.requires_grad() ? a.mutable_grad() : std::span<T>{};
        std::span<T> gb = b.requires_grad() ? b.mutable_grad() : std::span<T>{};
        const auto av = a.data(), bv = b.data();
        for_each_broadcast(out_shape, sa, sb, [&](Index oi, Index ia, Index ib) {
            if (!ga.empty()) ga[ia] += o.grad[oi] * bv[ib];
            if (!gb.empty()) gb[ib] += o.grad[oi] * av[ia];
        });
    });
    return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor) {
    BasicTensor<T> out(input.shape());
    const auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * factor;
    attach_node<T>(out, "scale", {input}, [x = input, factor](const TensorImpl<T>& o) mutable {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * factor;
    });
    return out;
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis) {
    if (parts.empty()) throw ConfigError("concat: no operands");
    const Shape& first = parts.front().shape();
    const int rank = static_cast<int>(first.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ConfigError("concat: invalid axis");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        if (static_cast<int>(p.rank()) != rank) throw ConfigError("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && p.dim(i) != first[i])
                throw ConfigError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                                  shape_str(first));
        out_shape[axis] += p.dim(axis);
    }
    Index outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= first[i];
    for (int i = axis + 1; i < rank; ++i) inner *= first[i];
    BasicTensor<T> out(out_shape);
    auto y = out.data();
    const Index out_block = out_shape[axis] * inner;
    Index offset = 0;
    std::vector<Index> offsets;
    for (const auto& p : parts) {
        const Index block = p.dim(axis) * inner;
        const auto x = p.data();
        for (Index o = 0; o < outer; ++o)
            std::copy_n(x.data() + o * block, block, y.data() + o * out_block + offset);
        offsets.push_back(offset);
        offset += block;
    }
    attach_node<T>(out, "concat", parts,
                   [parts, offsets, outer, inner, axis, out_block](const TensorImpl<T>& o) mutable {
                       for (std::size_t k = 0; k < parts.size(); ++k) {
                           auto& p = parts[k];
                           if (!p.requires_grad()) continue;
                           auto gx = p.mutable_grad();
                           const Index block = p.dim(axis) * inner;
                           for (Index ou = 0; ou < outer; ++ou)
                               for (Index i = 0; i < block; ++i)
                                   gx[ou * block + i] += o.grad[ou * out_block + offsets[k] + i];
                       }
                   });
    return out;
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
    if (shape_numel(shape) != input.numel()) {
        throw ConfigError("reshape: " + shape_str(input.shape()) + " to " + shape_str(shape));
    }
    BasicTensor<T> out(std::move(shape), input.storage());
    attach_node<T>(out, "reshape", {input}, [x = input](const TensorImpl<T>& o) mutable {
        accumulate_into<T>(x, o.grad);
    });
    return out;
}

template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& input, const std::vector<int>& order) {
    const std::size_t rank = input.rank();
    if (order.size() != rank) throw ConfigError("permute: order rank mismatch");
    std::vector<bool> used(rank, false);
    for (int a : order) {
        if (a < 0 || static_cast<std::size_t>(a) >= rank || used[a])
            throw ConfigError("permute: invalid axis order");
        used[a] = true;
    }
    const Shape& in_shape = input.shape();
    std::vector<Index> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    Shape out_shape(rank);
    std::vector<Index> src_strides(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[order[i]];
        src_strides[i] = in_strides[order[i]];
    }
    // gather: out[o] = in[src(o)]
    std::vector<Index> src_index(static_cast<std::size_t>(input.numel()));
    const std::vector<Index> zero(rank, 0);
    for_each_broadcast(out_shape, src_strides, zero, [&](Index o, Index s, Index) { src_index[o] = s; });
    BasicTensor<T> out(out_shape);
    const auto x = input.data();
    auto y = out.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[src_index[i]];
    attach_node<T>(out, "permute", {input},
                   [x = input, src_index = std::move(src_index)](const TensorImpl<T>& o) mutable {
                       auto gx = x.mutable_grad();
                       for (std::size_t i = 0; i < src_index.size(); ++i) gx[src_index[i]] += o.grad[i];
                   });
    return out;
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
    double acc = 0.0;
    for (T v : input.data()) acc += v;
    auto out = BasicTensor<T>::scalar(static_cast<T>(acc));
    attach_node<T>(out, "sum", {input}, [x = input](const TensorImpl<T>& o) mutable {
        auto gx = x.mutable_grad();
        for (auto& g : gx) g += o.grad[0];
    });
    return out;
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input) {
    const double n = static_cast<double>(input.numel());
    double acc = 0.0;
    for (T v : input.data()) acc += v;
    auto out = BasicTensor<T>::scalar(static_cast<T>(acc / n));
    attach_node<T>(out, "mean", {input}, [x = input, n](const TensorImpl<T>& o) mutable {
        auto gx = x.mutable_grad();
        const T g = static_cast<T>(o.grad[0] / n);
        for (auto& v : gx) v += g;
    });
    return out;
}

// ---------------------------------------------------------------------------
// loss

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> labels,
                             std::span<const double> class_weights, std::int32_t ignore_index) {
    require_rank(logits, 4, "cross_entropy");
    const Index N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    const Index HW = H * W;
    if (static_cast<Index>(labels.size()) != N * HW) {
        throw ConfigError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                          shape_str(logits.shape()));
    }
    if (!class_weights.empty() && static_cast<Index>(class_weights.size()) != K) {
        throw ConfigError("cross_entropy: " + std::to_string(class_weights.size()) +
                          " class weights for " + std::to_string(K) + " classes");
    }
    for (Index i = 0; i < N * HW; ++i) {
        const std::int32_t y = labels[i];
        if (y == ignore_index) continue;
        if (y < 0 || y >= K) {
            std::ostringstream os;
            os << "label " << y << " out of range [0," << K << ") at image " << i / HW << ", row "
               << (i % HW) / W << ", column " << i % W;
            throw DataError(os.str());
        }
    }
    const auto x = logits.data();
    // per-pixel log-softmax stored for the backward pass
    std::vector<T> prob(static_cast<std::size_t>(N * K * HW));
    double total = 0.0;
    Index scored = 0;
    for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < HW; ++i) {
            const Index base = n * K * HW + i;
            T mx = -std::numeric_limits<T>::infinity();
            for (Index k = 0; k < K; ++k) mx = std::max(mx, x[base + k * HW]);
            double denom = 0.0;
            for (Index k = 0; k < K; ++k) denom += std::exp(static_cast<double>(x[base + k * HW] - mx));
            const double log_denom = std::log(denom);
            for (Index k = 0; k < K; ++k)
                prob[base + k * HW] = static_cast<T>(std::exp(x[base + k * HW] - mx - log_denom));
            const std::int32_t y = labels[n * HW + i];
            if (y == ignore_index) continue;
            const double w = class_weights.empty() ? 1.0 : class_weights[y];
            total += -w * (static_cast<double>(x[base + y * HW] - mx) - log_denom);
            ++scored;
        }
    if (scored == 0) warn("cross_entropy: every pixel is ignored; loss is 0");
    const double norm = scored > 0 ? 1.0 / static_cast<double>(scored) : 0.0;
    auto out = BasicTensor<T>::scalar(static_cast<T>(total * norm));
    std::vector<std::int32_t> lab(labels.begin(), labels.end());
    std::vector<double> weights(class_weights.begin(), class_weights.end());
    attach_node<T>(out, "cross_entropy", {logits},
                   [x = logits, prob = std::move(prob), lab = std::move(lab), weights = std::move(weights),
                    N, K, HW, norm, ignore_index](const TensorImpl<T>& o) mutable {
                       auto gx = x.mutable_grad();
                       const double g = o.grad[0] * norm;
                       for (Index n = 0; n < N; ++n)
                           for (Index i = 0; i < HW; ++i) {
                               const std::int32_t y = lab[n * HW + i];
                               if (y == ignore_index) continue;
                               const double w = weights.empty() ? 1.0 : weights[y];
                               const Index base = n * K * HW + i;
                               for (Index k = 0; k < K; ++k) {
                                   const double target = k == y ? 1.0 : 0.0;
                                   gx[base + k * HW] += static_cast<T>(g * w * (prob[base + k * HW] - target));
                               }
                           }
                   });
    return out;
}

template <typename T>
void check_finite(const BasicTensor<T>& t, const char* what) {
    for (T v : t.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
    }
}

#define LETNET_OPS(T)                                                                               \
    template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                      const std::optional<BasicTensor<T>>&, const ConvSpec&);       \
    template BasicTensor<T> batch_norm<T>(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                          const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&,  \
                                          NormMode, double, double);                                \
    template BasicTensor<T> layer_norm<T>(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                          const BasicTensor<T>&, double);                           \
    template BasicTensor<T> linear<T>(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                      const std::optional<BasicTensor<T>>&);                        \
    template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                         \
    template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                      \
    template BasicTensor<T> gelu<T>(const BasicTensor<T>&);                                         \
    template BasicTensor<T> softmax<T>(const BasicTensor<T>&, int);                                 \
    template BasicTensor<T> pool2d<T>(const BasicTensor<T>&, PoolKind, const PoolWindow&);          \
    template BasicTensor<T> channel_pool<T>(const BasicTensor<T>&, PoolKind);                       \
    template BasicTensor<T> channel_shuffle<T>(const BasicTensor<T>&, Index);                       \
    template BasicTensor<T> resize_bilinear<T>(const BasicTensor<T>&, Index, Index);                \
    template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                                     \
    template BasicTensor<T> concat<T>(const std::vector<BasicTensor<T>>&, int);                     \
    template BasicTensor<T> reshape<T>(const BasicTensor<T>&, Shape);                               \
    template BasicTensor<T> permute<T>(const BasicTensor<T>&, const std::vector<int>&);             \
    template BasicTensor<T> bmm<T>(const BasicTensor<T>&, const BasicTensor<T>&, bool, bool);       \
    template BasicTensor<T> sum<T>(const BasicTensor<T>&);                                          \
    template BasicTensor<T> mean<T>(const BasicTensor<T>&);                                         \
    template BasicTensor<T> cross_entropy<T>(const BasicTensor<T>&, std::span<const std::int32_t>,  \
                                             std::span<const double>, std::int32_t);                \
    template void check_finite<T>(const BasicTensor<T>&, const char*);

LETNET_OPS(float)
LETNET_OPS(double)

}  // namespace letnet
