#pragma once

// Differentiable primitives. Every function records a graph node when grad
// recording is enabled and an operand requires grad.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "letnet/tensor.hpp"

namespace letnet {

struct Extent2 {
    Index h = 1;
    Index w = 1;
    friend bool operator==(const Extent2&, const Extent2&) = default;
};

struct ConvSpec {
    Index in_channels = 1;
    Index out_channels = 1;
    Extent2 kernel{1, 1};
    Extent2 stride{1, 1};
    Extent2 padding{0, 0};
    Extent2 dilation{1, 1};
    Index groups = 1;
    bool bias = false;

    // Throws ConfigError on non-positive fields or indivisible groups.
    void validate() const;
    bool depthwise() const { return groups == in_channels && groups == out_channels; }
    // floor((H + 2p - d(k-1) - 1)/s) + 1 per axis; throws ConfigError when non-positive.
    Extent2 output_extent(Extent2 input) const;
    Shape weight_shape() const {
        return {out_channels, in_channels / groups, kernel.h, kernel.w};
    }
    Index weight_count() const { return out_channels * (in_channels / groups) * kernel.h * kernel.w; }

    static ConvSpec pointwise(Index in, Index out, bool bias);
    // k x 1 or 1 x k factorized conv with extent-preserving padding.
    static ConvSpec vertical(Index channels_in, Index channels_out, Index k, Index dilation,
                             Index groups);
    static ConvSpec horizontal(Index channels_in, Index channels_out, Index k, Index dilation,
                               Index groups);

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

enum class NormMode { Train, Eval };
enum class PoolKind { Avg, Max };

struct PoolWindow {
    bool global = false;
    Extent2 size{2, 2};
    Extent2 stride{2, 2};

    static PoolWindow whole() { return {true, {1, 1}, {1, 1}}; }
    static PoolWindow spatial(Index k, Index s) { return {false, {k, k}, {s, s}}; }
};

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias, const ConvSpec& spec);

// Per-channel normalization over (N, H, W) of an NCHW tensor. In Train mode
// batch statistics are used and the running buffers are updated in place:
// running = (1 - momentum) * running + momentum * batch (unbiased variance).
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                          BasicTensor<T>& running_var, NormMode mode, double momentum = 0.1,
                          double eps = 1e-5);

// Normalizes over the last axis.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, double eps = 1e-5);

// y = x W^T + b over the last axis; W is (out, in).
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const std::optional<BasicTensor<T>>& bias);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input);
// Exact (erf) GELU.
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input, int axis);

template <typename T>
BasicTensor<T> pool2d(const BasicTensor<T>& input, PoolKind kind, const PoolWindow& window);

// Pools across the channel axis: N x C x H x W -> N x 1 x H x W.
template <typename T>
BasicTensor<T> channel_pool(const BasicTensor<T>& input, PoolKind kind);

// Output channel (c mod g)*(C/g) + floor(c/g) receives input channel c.
template <typename T>
BasicTensor<T> channel_shuffle(const BasicTensor<T>& input, Index groups);
Index shuffled_channel(Index channel, Index channels, Index groups);

// Bilinear resize with half-pixel centers (align_corners = false).
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& input, Index out_h, Index out_w);

// Elementwise with same-rank broadcasting (each extent equal or 1).
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, T factor);

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, int axis);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);
template <typename T>
BasicTensor<T> permute(const BasicTensor<T>& input, const std::vector<int>& order);

// Batched matrix product of rank-3 tensors (B, M, K) x (B, K, N).
template <typename T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b, bool trans_a = false,
                   bool trans_b = false);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input);

// Mean over non-ignored pixels of -w[y] log softmax(logits)[y]. Logits are
// N x K x H x W, labels hold N*H*W class ids; empty weights mean uniform.
// Returns 0 with a warning when every pixel is ignored.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::int32_t> labels,
                             std::span<const double> class_weights, std::int32_t ignore_index);

// Throws NumericError naming `what` when any element is NaN or infinite.
template <typename T>
void check_finite(const BasicTensor<T>& t, const char* what);

// Multiply-accumulate tally for instrumentation. While a MacCounter is alive
// on a thread, every conv2d, linear, bmm and pooling call on that thread adds
// its MAC count (pooling: one per input element read).
class MacCounter {
   public:
    MacCounter();
    ~MacCounter();
    MacCounter(const MacCounter&) = delete;
    MacCounter& operator=(const MacCounter&) = delete;
    std::uint64_t total() const { return total_; }
    void add(std::uint64_t macs) { total_ += macs; }

   private:
    std::uint64_t total_ = 0;
    MacCounter* previous_;
};

namespace detail {
void count_macs(std::uint64_t macs);
}

}  // namespace letnet
