#pragma once

// The segmentation network's building blocks. All blocks map an N x C x H x W
// tensor to a tensor of the same shape.

#include <string>
#include <vector>

#include "letnet/accounting.hpp"
#include "letnet/layers.hpp"

namespace letnet {

struct LdbConfig {
    Index channels = 32;
    Index dilation = 1;
    Index ca_kernel = 3;
    Index shuffle_groups = 0;  // 0 selects channels / 2

    Index half() const { return channels / 2; }
    Index groups() const { return shuffle_groups > 0 ? shuffle_groups : channels / 2; }
    void validate() const;
};

struct EmhaConfig {
    Index model_dim = 128;
    Index heads = 8;
    Index segments = 4;
    Index mlp_ratio = 4;

    Index reduced_dim() const { return model_dim / 2; }
    Index head_dim() const { return reduced_dim() / heads; }
    void validate() const;
};

struct FeConfig {
    Index channels = 32;
    Index reduction = 4;
    void validate() const;
};

struct PaConfig {
    Index channels = 32;
    void validate() const;
};

// ECA-style gate: global average pool, 1-D conv of width k over the channel
// axis (zero padded, no bias), sigmoid, channelwise rescale.
template <typename T>
struct ChannelAttention {
    Index kernel = 3;
    BasicTensor<T> weight;  // stored as a (1, 1, k, 1) conv kernel

    ChannelAttention() = default;
    ChannelAttention(Index k, Rng& rng);

    BasicTensor<T> gate(const BasicTensor<T>& x) const;  // N x C x 1 x 1
    BasicTensor<T> operator()(const BasicTensor<T>& x) const;
    void collect(const std::string& prefix, ParamCollector<T>& out) const;
    void describe(const std::string& prefix, Index channels, Extent2 extent,
                  accounting::LayerTable& table) const;
};

// Lightweight dilated bottleneck:
//   F1  = 1x3(3x1(1x1(x)))                       at C/2 channels
//   F21 = CA(dw 1x3(dw 3x1(F1)))
//   F22 = CA(dw 1x3,R(dw 3x1,R(F1)))
//   y   = shuffle(1x1(F1 + F21 + F22) + x)
// BN+ReLU follow the reduce conv and each factorized pair; the expand conv is
// followed by BN only.
template <typename T>
struct LdbBlock {
    LdbConfig cfg;
    Conv2d<T> reduce;
    BatchNorm2d<T> reduce_bn;
    Conv2d<T> f1_v, f1_h;
    BatchNorm2d<T> f1_bn;
    Conv2d<T> local_v, local_h;
    BatchNorm2d<T> local_bn;
    ChannelAttention<T> local_ca;
    Conv2d<T> dilated_v, dilated_h;
    BatchNorm2d<T> dilated_bn;
    ChannelAttention<T> dilated_ca;
    Conv2d<T> expand;
    BatchNorm2d<T> expand_bn;

    LdbBlock() = default;
    LdbBlock(const LdbConfig& c, Rng& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x, NormMode mode);
    void collect(const std::string& prefix, ParamCollector<T>& out) const;
    void describe(const std::string& prefix, Extent2 extent, accounting::LayerTable& table) const;
};

// Segmented multi-head attention on (B, tokens, reduced_dim) inputs. Q, K and
// V are split along the token axis into `segments` contiguous blocks; each
// block and head attends only within itself.
template <typename T>
struct EmhaBlock {
    EmhaConfig cfg;
    Linear<T> query, key, value, out_proj;

    EmhaBlock() = default;
    EmhaBlock(const EmhaConfig& c, Rng& rng);

    // When `attention` is non-null it receives the (B*segments*heads, L, L)
    // weight tensor.
    BasicTensor<T> forward(const BasicTensor<T>& tokens, BasicTensor<T>* attention = nullptr) const;
    void collect(const std::string& prefix, ParamCollector<T>& out) const;
    void describe(const std::string& prefix, Index tokens, accounting::LayerTable& table) const;
};

// Transformer capsule: LN -> reduce C->C/2 -> EMHA -> expand -> residual, then
// LN -> MLP(C -> mC -> C, GELU) -> residual, on H*W tokens.
template <typename T>
struct EfficientTransformer {
    EmhaConfig cfg;
    LayerNorm<T> norm1;
    Linear<T> reduce;
    EmhaBlock<T> attention;
    Linear<T> expand;
    LayerNorm<T> norm2;
    Linear<T> mlp_in, mlp_out;

    EfficientTransformer() = default;
    EfficientTransformer(const EmhaConfig& c, Rng& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    void collect(const std::string& prefix, ParamCollector<T>& out) const;
    void describe(const std::string& prefix, Extent2 extent, accounting::LayerTable& table) const;
};

// Skip-connection enhancer:
//   M_C = X * sigmoid(1x1_C(relu(1x1_{C/r}(avgpool(X)))))
//   M_S = X * sigmoid(BN(3x3([avg_c(X); max_c(X)])))
//   Y   = 1x1(M_C) + 1x1(M_S) + X
template <typename T>
struct FeatureEnhancement {
    FeConfig cfg;
    Conv2d<T> squeeze, excite;
    Conv2d<T> spatial;
    BatchNorm2d<T> spatial_bn;
    Conv2d<T> fuse_channel, fuse_spatial;

    FeatureEnhancement() = default;
    FeatureEnhancement(const FeConfig& c, Rng& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x, NormMode mode);
    void collect(const std::string& prefix, ParamCollector<T>& out) const;
    void describe(const std::string& prefix, Extent2 extent, accounting::LayerTable& table) const;
};

// y = sigmoid(1x1(x)) * x with a C -> C projection.
template <typename T>
struct PixelAttention {
    PaConfig cfg;
    Conv2d<T> proj;

    PixelAttention() = default;
    PixelAttention(const PaConfig& c, Rng& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    void collect(const std::string& prefix, ParamCollector<T>& out) const;
    void describe(const std::string& prefix, Extent2 extent, accounting::LayerTable& table) const;
};

// NCHW <-> (N, H*W, C) token layout.
template <typename T>
BasicTensor<T> to_tokens(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> from_tokens(const BasicTensor<T>& tokens, Index h, Index w);

}  // namespace letnet
