#include "letnet/blocks.hpp"

#include <cmath>

namespace letnet {

void LdbConfig::validate() const {
    if (channels < 2 || channels % 2 != 0) {
        throw ConfigError("LDB channels must be even and >= 2, got " + std::to_string(channels));
    }
    if (dilation < 1) throw ConfigError("LDB dilation must be >= 1");
    if (ca_kernel < 1 || ca_kernel % 2 == 0) {
        throw ConfigError("channel attention kernel must be odd, got " + std::to_string(ca_kernel));
    }
    if (channels % groups() != 0) {
        throw ConfigError("LDB channels " + std::to_string(channels) +
                          " not divisible by shuffle groups " + std::to_string(groups()));
    }
}

void EmhaConfig::validate() const {
    if (model_dim < 2 || model_dim % 2 != 0) throw ConfigError("EMHA model_dim must be even");
    if (heads < 1 || reduced_dim() % heads != 0) {
        throw ConfigError("EMHA reduced dim " + std::to_string(reduced_dim()) +
                          " not divisible by heads " + std::to_string(heads));
    }
    if (segments < 1) throw ConfigError("EMHA segments must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("EMHA mlp_ratio must be >= 1");
}

void FeConfig::validate() const {
    if (channels < 1 || reduction < 1 || channels % reduction != 0) {
        throw ConfigError("FE channels " + std::to_string(channels) + " not divisible by reduction " +
                          std::to_string(reduction));
    }
}

void PaConfig::validate() const {
    if (channels < 1) throw ConfigError("PA channels must be >= 1");
}

namespace {

template <typename T>
void require_channels(const BasicTensor<T>& x, Index channels, const char* block) {
    if (x.rank() != 4 || x.dim(1) != channels) {
        throw ConfigError(std::string(block) + " expects N x " + std::to_string(channels) +
                          " x H x W input, got " + shape_str(x.shape()));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// channel attention

template <typename T>
ChannelAttention<T>::ChannelAttention(Index k, Rng& rng) : kernel(k) {
    if (k < 1 || k % 2 == 0) {
        throw ConfigError("channel attention kernel must be odd, got " + std::to_string(k));
    }
    weight = fan_in_uniform<T>({1, 1, k, 1}, k, rng);
}

template <typename T>
BasicTensor<T> ChannelAttention<T>::gate(const BasicTensor<T>& x) const {
    if (kernel % 2 == 0) throw ConfigError("channel attention kernel must be odd");
    const Index N = x.dim(0), C = x.dim(1);
    auto pooled = pool2d(x, PoolKind::Avg, PoolWindow::whole());
    // channels laid out along a spatial axis so the 1-D conv runs across them
    auto column = reshape(pooled, {N, 1, C, 1});
    ConvSpec spec = ConvSpec::vertical(1, 1, kernel, 1, 1);
    auto mixed = conv2d(column, weight, std::optional<BasicTensor<T>>{}, spec);
    return sigmoid(reshape(mixed, {N, C, 1, 1}));
}

template <typename T>
BasicTensor<T> ChannelAttention<T>::operator()(const BasicTensor<T>& x) const {
    return mul(x, gate(x));
}

template <typename T>
void ChannelAttention<T>::collect(const std::string& prefix, ParamCollector<T>& out) const {
    out.param(join_name(prefix, "weight"), weight);
}

template <typename T>
void ChannelAttention<T>::describe(const std::string& prefix, Index channels, Extent2 extent,
                                   accounting::LayerTable& table) const {
    table.pool(join_name(prefix, "pool"), static_cast<std::uint64_t>(channels * extent.h * extent.w));
    table.conv(join_name(prefix, "conv1d"), ConvSpec::vertical(1, 1, kernel, 1, 1), {channels, 1});
}

// ---------------------------------------------------------------------------
// LDB

template <typename T>
LdbBlock<T>::LdbBlock(const LdbConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    const Index C = cfg.channels, h = cfg.half(), R = cfg.dilation;
    reduce = Conv2d<T>(ConvSpec::pointwise(C, h, false), rng);
    reduce_bn = BatchNorm2d<T>(h);
    f1_v = Conv2d<T>(ConvSpec::vertical(h, h, 3, 1, 1), rng);
    f1_h = Conv2d<T>(ConvSpec::horizontal(h, h, 3, 1, 1), rng);
    f1_bn = BatchNorm2d<T>(h);
    local_v = Conv2d<T>(ConvSpec::vertical(h, h, 3, 1, h), rng);
    local_h = Conv2d<T>(ConvSpec::horizontal(h, h, 3, 1, h), rng);
    local_bn = BatchNorm2d<T>(h);
    local_ca = ChannelAttention<T>(cfg.ca_kernel, rng);
    dilated_v = Conv2d<T>(ConvSpec::vertical(h, h, 3, R, h), rng);
    dilated_h = Conv2d<T>(ConvSpec::horizontal(h, h, 3, R, h), rng);
    dilated_bn = BatchNorm2d<T>(h);
    dilated_ca = ChannelAttention<T>(cfg.ca_kernel, rng);
    expand = Conv2d<T>(ConvSpec::pointwise(h, C, false), rng);
    expand_bn = BatchNorm2d<T>(C);
}

template <typename T>
BasicTensor<T> LdbBlock<T>::forward(const BasicTensor<T>& x, NormMode mode) {
    require_channels(x, cfg.channels, "LDB");
    auto f1 = relu(reduce_bn(reduce(x), mode));
    f1 = relu(f1_bn(f1_h(f1_v(f1)), mode));
    auto f21 = local_ca(relu(local_bn(local_h(local_v(f1)), mode)));
    auto f22 = dilated_ca(relu(dilated_bn(dilated_h(dilated_v(f1)), mode)));
    auto fused = expand_bn(expand(add(add(f1, f21), f22)), mode);
    return channel_shuffle(add(fused, x), cfg.groups());
}

template <typename T>
void LdbBlock<T>::collect(const std::string& prefix, ParamCollector<T>& out) const {
    reduce.collect(join_name(prefix, "reduce"), out);
    reduce_bn.collect(join_name(prefix, "reduce_bn"), out);
    f1_v.collect(join_name(prefix, "f1_v"), out);
    f1_h.collect(join_name(prefix, "f1_h"), out);
    f1_bn.collect(join_name(prefix, "f1_bn"), out);
    local_v.collect(join_name(prefix, "local_v"), out);
    local_h.collect(join_name(prefix, "local_h"), out);
    local_bn.collect(join_name(prefix, "local_bn"), out);
    local_ca.collect(join_name(prefix, "local_ca"), out);
    dilated_v.collect(join_name(prefix, "dilated_v"), out);
    dilated_h.collect(join_name(prefix, "dilated_h"), out);
    dilated_bn.collect(join_name(prefix, "dilated_bn"), out);
    dilated_ca.collect(join_name(prefix, "dilated_ca"), out);
    expand.collect(join_name(prefix, "expand"), out);
    expand_bn.collect(join_name(prefix, "expand_bn"), out);
}

template <typename T>
void LdbBlock<T>::describe(const std::string& prefix, Extent2 e, accounting::LayerTable& t) const {
    const Index h = cfg.half();
    t.conv(join_name(prefix, "reduce"), reduce.spec, e);
    t.batch_norm(join_name(prefix, "reduce_bn"), h);
    t.conv(join_name(prefix, "f1_v"), f1_v.spec, e);
    t.conv(join_name(prefix, "f1_h"), f1_h.spec, e);
    t.batch_norm(join_name(prefix, "f1_bn"), h);
    t.conv(join_name(prefix, "local_v"), local_v.spec, e);
    t.conv(join_name(prefix, "local_h"), local_h.spec, e);
    t.batch_norm(join_name(prefix, "local_bn"), h);
    local_ca.describe(join_name(prefix, "local_ca"), h, e, t);
    t.conv(join_name(prefix, "dilated_v"), dilated_v.spec, e);
    t.conv(join_name(prefix, "dilated_h"), dilated_h.spec, e);
    t.batch_norm(join_name(prefix, "dilated_bn"), h);
    dilated_ca.describe(join_name(prefix, "dilated_ca"), h, e, t);
    t.conv(join_name(prefix, "expand"), expand.spec, e);
    t.batch_norm(join_name(prefix, "expand_bn"), cfg.channels);
}

// ---------------------------------------------------------------------------
// EMHA

template <typename T>
EmhaBlock<T>::EmhaBlock(const EmhaConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    const Index r = cfg.reduced_dim();
    query = Linear<T>(r, r, rng);
    key = Linear<T>(r, r, rng);
    value = Linear<T>(r, r, rng);
    out_proj = Linear<T>(r, r, rng);
}

template <typename T>
BasicTensor<T> EmhaBlock<T>::forward(const BasicTensor<T>& tokens, BasicTensor<T>* attention) const {
    BasicTensor<T> in = tokens;
    const bool unbatched = tokens.rank() == 2;
    if (unbatched) in = reshape(tokens, {1, tokens.dim(0), tokens.dim(1)});
    const Index r = cfg.reduced_dim();
    if (in.rank() != 3 || in.dim(2) != r) {
        throw ConfigError("EMHA expects (tokens, " + std::to_string(r) + ") input, got " +
                          shape_str(tokens.shape()));
    }
    const Index B = in.dim(0), N = in.dim(1), s = cfg.segments, h = cfg.heads, d = cfg.head_dim();
    if (N % s != 0) {
        throw ConfigError("EMHA token count " + std::to_string(N) + " not divisible by " +
                          std::to_string(s) + " segments");
    }
    const Index L = N / s;
    auto split = [&](const BasicTensor<T>& t) {
        auto v = reshape(t, {B, s, L, h, d});
        return reshape(permute(v, {0, 1, 3, 2, 4}), {B * s * h, L, d});
    };
    auto q = split(query(in));
    auto k = split(key(in));
    auto v = split(value(in));
    auto scores = scale(bmm(q, k, false, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    auto weights = softmax(scores, 2);
    if (attention != nullptr) *attention = weights;
    auto mixed = bmm(weights, v);
    auto merged = reshape(permute(reshape(mixed, {B, s, h, L, d}), {0, 1, 3, 2, 4}), {B, N, r});
    auto out = out_proj(merged);
    return unbatched ? reshape(out, {N, r}) : out;
}

template <typename T>
void EmhaBlock<T>::collect(const std::string& prefix, ParamCollector<T>& out) const {
    query.collect(join_name(prefix, "query"), out);
    key.collect(join_name(prefix, "key"), out);
    value.collect(join_name(prefix, "value"), out);
    out_proj.collect(join_name(prefix, "out_proj"), out);
}

template <typename T>
void EmhaBlock<T>::describe(const std::string& prefix, Index tokens, accounting::LayerTable& t) const {
    const Index r = cfg.reduced_dim();
    t.linear(join_name(prefix, "query"), tokens, r, r, true);
    t.linear(join_name(prefix, "key"), tokens, r, r, true);
    t.linear(join_name(prefix, "value"), tokens, r, r, true);
    t.attention(join_name(prefix, "sdpa"), tokens, cfg.segments, r);
    t.linear(join_name(prefix, "out_proj"), tokens, r, r, true);
}

// ---------------------------------------------------------------------------
// ET

template <typename T>
BasicTensor<T> to_tokens(const BasicTensor<T>& x) {
    const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    return reshape(permute(x, {0, 2, 3, 1}), {N, H * W, C});
}

template <typename T>
BasicTensor<T> from_tokens(const BasicTensor<T>& tokens, Index h, Index w) {
    const Index N = tokens.dim(0), C = tokens.dim(2);
    return permute(reshape(tokens, {N, h, w, C}), {0, 3, 1, 2});
}

template <typename T>
EfficientTransformer<T>::EfficientTransformer(const EmhaConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    const Index C = cfg.model_dim, r = cfg.reduced_dim();
    norm1 = LayerNorm<T>(C);
    reduce = Linear<T>(C, r, rng);
    attention = EmhaBlock<T>(cfg, rng);
    expand = Linear<T>(r, C, rng);
    norm2 = LayerNorm<T>(C);
    mlp_in = Linear<T>(C, cfg.mlp_ratio * C, rng);
    mlp_out = Linear<T>(cfg.mlp_ratio * C, C, rng);
}

template <typename T>
BasicTensor<T> EfficientTransformer<T>::forward(const BasicTensor<T>& x) const {
    require_channels(x, cfg.model_dim, "ET");
    const Index H = x.dim(2), W = x.dim(3);
    if ((H * W) % cfg.segments != 0) {
        throw ConfigError("ET token count " + std::to_string(H * W) + " not divisible by " +
                          std::to_string(cfg.segments) + " segments");
    }
    auto tokens = to_tokens(x);
    auto attended = expand(attention.forward(reduce(norm1(tokens))));
    tokens = add(tokens, attended);
    auto mlp = mlp_out(gelu(mlp_in(norm2(tokens))));
    tokens = add(tokens, mlp);
    return from_tokens(tokens, H, W);
}

template <typename T>
void EfficientTransformer<T>::collect(const std::string& prefix, ParamCollector<T>& out) const {
    norm1.collect(join_name(prefix, "norm1"), out);
    reduce.collect(join_name(prefix, "reduce"), out);
    attention.collect(join_name(prefix, "emha"), out);
    expand.collect(join_name(prefix, "expand"), out);
    norm2.collect(join_name(prefix, "norm2"), out);
    mlp_in.collect(join_name(prefix, "mlp_in"), out);
    mlp_out.collect(join_name(prefix, "mlp_out"), out);
}

template <typename T>
void EfficientTransformer<T>::describe(const std::string& prefix, Extent2 e,
                                       accounting::LayerTable& t) const {
    const Index C = cfg.model_dim, r = cfg.reduced_dim(), tokens = e.h * e.w;
    t.layer_norm(join_name(prefix, "norm1"), C);
    t.linear(join_name(prefix, "reduce"), tokens, C, r, true);
    attention.describe(join_name(prefix, "emha"), tokens, t);
    t.linear(join_name(prefix, "expand"), tokens, r, C, true);
    t.layer_norm(join_name(prefix, "norm2"), C);
    t.linear(join_name(prefix, "mlp_in"), tokens, C, cfg.mlp_ratio * C, true);
    t.linear(join_name(prefix, "mlp_out"), tokens, cfg.mlp_ratio * C, C, true);
}

// ---------------------------------------------------------------------------
// FE

template <typename T>
FeatureEnhancement<T>::FeatureEnhancement(const FeConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    const Index C = cfg.channels, squeezed = C / cfg.reduction;
    squeeze = Conv2d<T>(ConvSpec::pointwise(C, squeezed, true), rng);
    excite = Conv2d<T>(ConvSpec::pointwise(squeezed, C, true), rng);
    ConvSpec sp;
    sp.in_channels = 2;
    sp.out_channels = 1;
    sp.kernel = {3, 3};
    sp.padding = {1, 1};
    spatial = Conv2d<T>(sp, rng);
    spatial_bn = BatchNorm2d<T>(1);
    fuse_channel = Conv2d<T>(ConvSpec::pointwise(C, C, true), rng);
    fuse_spatial = Conv2d<T>(ConvSpec::pointwise(C, C, true), rng);
}

template <typename T>
BasicTensor<T> FeatureEnhancement<T>::forward(const BasicTensor<T>& x, NormMode mode) {
    require_channels(x, cfg.channels, "FE");
    auto channel_gate = sigmoid(excite(relu(squeeze(pool2d(x, PoolKind::Avg, PoolWindow::whole())))));
    auto m_c = mul(x, channel_gate);
    auto pooled = concat<T>({channel_pool(x, PoolKind::Avg), channel_pool(x, PoolKind::Max)}, 1);
    auto spatial_gate = sigmoid(spatial_bn(spatial(pooled), mode));
    auto m_s = mul(x, spatial_gate);
    return add(add(fuse_channel(m_c), fuse_spatial(m_s)), x);
}

template <typename T>
void FeatureEnhancement<T>::collect(const std::string& prefix, ParamCollector<T>& out) const {
    squeeze.collect(join_name(prefix, "squeeze"), out);
    excite.collect(join_name(prefix, "excite"), out);
    spatial.collect(join_name(prefix, "spatial"), out);
    spatial_bn.collect(join_name(prefix, "spatial_bn"), out);
    fuse_channel.collect(join_name(prefix, "fuse_channel"), out);
    fuse_spatial.collect(join_name(prefix, "fuse_spatial"), out);
}

template <typename T>
void FeatureEnhancement<T>::describe(const std::string& prefix, Extent2 e,
                                     accounting::LayerTable& t) const {
    const Index C = cfg.channels;
    const auto plane = static_cast<std::uint64_t>(C * e.h * e.w);
    t.pool(join_name(prefix, "avgpool"), plane);
    t.conv(join_name(prefix, "squeeze"), squeeze.spec, {1, 1});
    t.conv(join_name(prefix, "excite"), excite.spec, {1, 1});
    t.pool(join_name(prefix, "channel_avg"), plane);
    t.pool(join_name(prefix, "channel_max"), plane);
    t.conv(join_name(prefix, "spatial"), spatial.spec, e);
    t.batch_norm(join_name(prefix, "spatial_bn"), 1);
    t.conv(join_name(prefix, "fuse_channel"), fuse_channel.spec, e);
    t.conv(join_name(prefix, "fuse_spatial"), fuse_spatial.spec, e);
}

// ---------------------------------------------------------------------------
// PA

template <typename T>
PixelAttention<T>::PixelAttention(const PaConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    proj = Conv2d<T>(ConvSpec::pointwise(cfg.channels, cfg.channels, true), rng);
}

template <typename T>
BasicTensor<T> PixelAttention<T>::forward(const BasicTensor<T>& x) const {
    require_channels(x, cfg.channels, "PA");
    return mul(sigmoid(proj(x)), x);
}

template <typename T>
void PixelAttention<T>::collect(const std::string& prefix, ParamCollector<T>& out) const {
    proj.collect(join_name(prefix, "proj"), out);
}

template <typename T>
void PixelAttention<T>::describe(const std::string& prefix, Extent2 e, accounting::LayerTable& t) const {
    t.conv(join_name(prefix, "proj"), proj.spec, e);
}

#define LETNET_BLOCKS(T)                                                              \
    template struct ChannelAttention<T>;                                              \
    template struct LdbBlock<T>;                                                      \
    template struct EmhaBlock<T>;                                                     \
    template struct EfficientTransformer<T>;                                          \
    template struct FeatureEnhancement<T>;                                            \
    template struct PixelAttention<T>;                                                \
    template BasicTensor<T> to_tokens<T>(const BasicTensor<T>&);                      \
    template BasicTensor<T> from_tokens<T>(const BasicTensor<T>&, Index, Index);

LETNET_BLOCKS(float)
LETNET_BLOCKS(double)

}  // namespace letnet
