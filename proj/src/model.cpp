#include "letnet/model.hpp"

#include <algorithm>

namespace letnet {

std::string_view to_string(SkipMode mode) {
    switch (mode) {
        case SkipMode::Off:
            return "off";
        case SkipMode::Plain:
            return "plain";
        case SkipMode::Enhanced:
            return "fe";
    }
    return "off";
}

SkipMode parse_skip_mode(std::string_view text) {
    if (text == "off") return SkipMode::Off;
    if (text == "plain") return SkipMode::Plain;
    if (text == "fe") return SkipMode::Enhanced;
    throw ConfigError("unknown skip mode '" + std::string(text) + "' (expected off, plain or fe)");
}

ModelConfig ModelConfig::preset(std::string_view name) {
    ModelConfig cfg;
    const auto set_skips = [&](SkipMode mode, int count) {
        for (int i = 0; i < 3; ++i) cfg.skips[i] = i < count ? mode : SkipMode::Off;
    };
    if (name == "letnet" || name == "c3") return cfg;
    if (name == "tiny") {
        cfg.num_classes = 3;
        cfg.channels = {8, 16, 32};
        cfg.depths = {1, 1, 2};
        cfg.heads = 2;
        cfg.fe_reduction = 2;
        cfg.resolution = {64, 64};
        return cfg;
    }
    cfg.transformer = false;
    cfg.pixel_attention = false;
    set_skips(SkipMode::Off, 0);
    if (name == "baseline") return cfg;
    if (name.size() == 2 && name[1] >= '1' && name[1] <= '3') {
        const int count = name[1] - '0';
        switch (name[0]) {
            case 'a':
                set_skips(SkipMode::Plain, count);
                return cfg;
            case 'b':
                set_skips(SkipMode::Enhanced, count);
                return cfg;
            case 'c':
                cfg.transformer = true;
                if (count >= 2) set_skips(SkipMode::Enhanced, 3);
                return cfg;
            default:
                break;
        }
    }
    throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

std::vector<std::string> ModelConfig::preset_names() {
    return {"baseline", "a1", "a2", "a3", "b1", "b2", "b3", "c1", "c2", "c3", "letnet", "tiny"};
}

std::vector<Index> ModelConfig::dilation_schedule() const {
    if (!dilations.empty()) return dilations;
    std::vector<Index> out(static_cast<std::size_t>(depths[0] + depths[1]), 1);
    constexpr Index cycle[] = {1, 2, 4, 8};
    for (Index i = 0; i < depths[2]; ++i) out.push_back(cycle[i % 4]);
    return out;
}

void ModelConfig::validate() const {
    if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
    for (int i = 0; i < 3; ++i) {
        if (channels[i] < 2 || channels[i] % 2 != 0) {
            throw ConfigError("model.channels must be even and >= 2");
        }
        if (depths[i] < 0) throw ConfigError("model.depths must be non-negative");
    }
    if (channels[1] <= channels[0] || channels[2] <= channels[1]) {
        throw ConfigError("model.channels must be strictly increasing (down units concatenate a pooled branch)");
    }
    if (!dilations.empty() && static_cast<Index>(dilations.size()) != total_blocks()) {
        throw ConfigError("model.dilations has " + std::to_string(dilations.size()) +
                          " entries, expected " + std::to_string(total_blocks()));
    }
    for (Index d : dilation_schedule())
        if (d < 1) throw ConfigError("model.dilations entries must be >= 1");
    if (ca_kernel < 1 || ca_kernel % 2 == 0) throw ConfigError("model.ca_kernel must be odd");
    if (transformer) EmhaConfig{channels[2], heads, segments, mlp_ratio}.validate();
    for (int i = 0; i < 3; ++i) {
        if (skips[i] == SkipMode::Enhanced) FeConfig{channels[i], fe_reduction}.validate();
    }
    if (resolution.h < 1 || resolution.w < 1) throw ConfigError("model.resolution must be positive");
}

void ModelConfig::validate_input(Index height, Index width) const {
    if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
        throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                          " must have height and width divisible by 8");
    }
    if (transformer && ((height / 8) * (width / 8)) % segments != 0) {
        throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                          ": (H/8)*(W/8) must be divisible by " + std::to_string(segments) +
                          " attention segments, i.e. H*W a multiple of " +
                          std::to_string(64 * segments));
    }
}

namespace {

ConvSpec conv3x3(Index in, Index out, Index stride) {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = {3, 3};
    s.stride = {stride, stride};
    s.padding = {1, 1};
    return s;
}

}  // namespace

template <typename T>
LetNet<T> LetNet<T>::build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    LetNet net;
    net.cfg_ = cfg;
    const auto [c1, c2, c3] = cfg.channels;
    const auto dil = cfg.dilation_schedule();
    std::size_t block = 0;
    auto make_stage = [&](std::vector<LdbBlock<T>>& stage, Index channels, Index count) {
        for (Index i = 0; i < count; ++i)
            stage.emplace_back(LdbConfig{channels, dil[block++], cfg.ca_kernel, 0}, rng);
    };

    net.init_conv_ = Conv2d<T>(conv3x3(3, c1, 2), rng);
    net.init_bn_ = BatchNorm2d<T>(c1);
    make_stage(net.stage1_, c1, cfg.depths[0]);
    net.down2_conv_ = Conv2d<T>(conv3x3(c1, c2 - c1, 2), rng);
    net.down2_bn_ = BatchNorm2d<T>(c2);
    make_stage(net.stage2_, c2, cfg.depths[1]);
    net.down3_conv_ = Conv2d<T>(conv3x3(c2, c3 - c2, 2), rng);
    net.down3_bn_ = BatchNorm2d<T>(c3);
    make_stage(net.stage3_, c3, cfg.depths[2]);
    if (cfg.transformer) {
        net.transformer_.emplace(EmhaConfig{c3, cfg.heads, cfg.segments, cfg.mlp_ratio}, rng);
    }
    // decoder order: L3, up1, L2, up2, L1
    auto make_skip = [&](int level) {
        SkipUnit& s = net.skips_[level];
        s.mode = cfg.skips[level];
        if (s.mode == SkipMode::Off) return;
        const Index ch = cfg.channels[level];
        if (s.mode == SkipMode::Enhanced) s.enhance.emplace(FeConfig{ch, cfg.fe_reduction}, rng);
        s.proj = Conv2d<T>(ConvSpec::pointwise(ch, ch, true), rng);
    };
    make_skip(2);
    net.up1_conv_ = Conv2d<T>(conv3x3(c3, c2, 1), rng);
    net.up1_bn_ = BatchNorm2d<T>(c2);
    make_skip(1);
    net.up2_conv_ = Conv2d<T>(conv3x3(c2, c1, 1), rng);
    net.up2_bn_ = BatchNorm2d<T>(c1);
    make_skip(0);
    if (cfg.pixel_attention) net.pixel_attention_.emplace(PaConfig{c1}, rng);
    net.classifier_ = Conv2d<T>(ConvSpec::pointwise(c1, cfg.num_classes, true), rng);
    return net;
}

template <typename T>
BasicTensor<T> LetNet<T>::apply_skip(SkipUnit& skip, const BasicTensor<T>& feature, NormMode mode) {
    BasicTensor<T> f = feature;
    if (skip.enhance) f = skip.enhance->forward(f, mode);
    return skip.proj(f);
}

template <typename T>
BasicTensor<T> LetNet<T>::forward(const BasicTensor<T>& images, NormMode mode) {
    if (images.rank() != 4 || images.dim(1) != 3) {
        throw ConfigError("model input must be N x 3 x H x W, got " + shape_str(images.shape()));
    }
    const Index H = images.dim(2), W = images.dim(3);
    cfg_.validate_input(H, W);
    // eval mode keeps no graph, so intermediates are freed layer by layer
    std::optional<NoGradGuard> no_grad;
    if (mode == NormMode::Eval) no_grad.emplace();

    auto x = relu(init_bn_(init_conv_(images), mode));
    for (auto& b : stage1_) x = b.forward(x, mode);
    const auto s1 = x;
    x = relu(down2_bn_(concat<T>({down2_conv_(s1), pool2d(s1, PoolKind::Max, PoolWindow::spatial(2, 2))}, 1), mode));
    for (auto& b : stage2_) x = b.forward(x, mode);
    const auto s2 = x;
    x = relu(down3_bn_(concat<T>({down3_conv_(s2), pool2d(s2, PoolKind::Max, PoolWindow::spatial(2, 2))}, 1), mode));
    for (auto& b : stage3_) x = b.forward(x, mode);
    const auto s3 = x;

    if (transformer_) x = transformer_->forward(x);
    if (skips_[2].mode != SkipMode::Off) x = add(x, apply_skip(skips_[2], s3, mode));
    x = relu(up1_bn_(up1_conv_(resize_bilinear(x, s2.dim(2), s2.dim(3))), mode));
    if (skips_[1].mode != SkipMode::Off) x = add(x, apply_skip(skips_[1], s2, mode));
    x = relu(up2_bn_(up2_conv_(resize_bilinear(x, s1.dim(2), s1.dim(3))), mode));
    if (skips_[0].mode != SkipMode::Off) x = add(x, apply_skip(skips_[0], s1, mode));
    if (pixel_attention_) x = pixel_attention_->forward(x);
    return resize_bilinear(classifier_(x), H, W);
}

template <typename T>
void LetNet<T>::collect(ParamCollector<T>& out) const {
    init_conv_.collect("init.conv", out);
    init_bn_.collect("init.bn", out);
    for (std::size_t i = 0; i < stage1_.size(); ++i) stage1_[i].collect("stage1." + std::to_string(i), out);
    down2_conv_.collect("down2.conv", out);
    down2_bn_.collect("down2.bn", out);
    for (std::size_t i = 0; i < stage2_.size(); ++i) stage2_[i].collect("stage2." + std::to_string(i), out);
    down3_conv_.collect("down3.conv", out);
    down3_bn_.collect("down3.bn", out);
    for (std::size_t i = 0; i < stage3_.size(); ++i) stage3_[i].collect("stage3." + std::to_string(i), out);
    if (transformer_) transformer_->collect("et", out);
    auto skip = [&](int level) {
        const SkipUnit& s = skips_[level];
        if (s.mode == SkipMode::Off) return;
        const std::string prefix = "skip" + std::to_string(level + 1);
        if (s.enhance) s.enhance->collect(prefix + ".fe", out);
        s.proj.collect(prefix + ".proj", out);
    };
    skip(2);
    up1_conv_.collect("up1.conv", out);
    up1_bn_.collect("up1.bn", out);
    skip(1);
    up2_conv_.collect("up2.conv", out);
    up2_bn_.collect("up2.bn", out);
    skip(0);
    if (pixel_attention_) pixel_attention_->collect("pa", out);
    classifier_.collect("classifier", out);
}

template <typename T>
std::vector<NamedTensor<T>> LetNet<T>::parameters() const {
    ParamCollector<T> c;
    collect(c);
    return c.params;
}

template <typename T>
std::vector<NamedTensor<T>> LetNet<T>::buffers() const {
    ParamCollector<T> c;
    collect(c);
    return c.buffers;
}

template <typename T>
AccountingReport LetNet<T>::describe(Extent2 resolution) const {
    cfg_.validate_input(resolution.h, resolution.w);
    AccountingReport report;
    report.resolution = resolution;
    accounting::LayerTable t(report.rows);
    const auto [c1, c2, c3] = cfg_.channels;

    Extent2 e = t.conv("init.conv", init_conv_.spec, resolution);
    t.batch_norm("init.bn", c1);
    for (std::size_t i = 0; i < stage1_.size(); ++i) stage1_[i].describe("stage1." + std::to_string(i), e, t);
    const Extent2 e1 = e;
    t.pool("down2.maxpool", static_cast<std::uint64_t>(c1 * e.h * e.w));
    e = t.conv("down2.conv", down2_conv_.spec, e);
    t.batch_norm("down2.bn", c2);
    for (std::size_t i = 0; i < stage2_.size(); ++i) stage2_[i].describe("stage2." + std::to_string(i), e, t);
    const Extent2 e2 = e;
    t.pool("down3.maxpool", static_cast<std::uint64_t>(c2 * e.h * e.w));
    e = t.conv("down3.conv", down3_conv_.spec, e);
    t.batch_norm("down3.bn", c3);
    for (std::size_t i = 0; i < stage3_.size(); ++i) stage3_[i].describe("stage3." + std::to_string(i), e, t);
    const Extent2 e3 = e;
    if (transformer_) transformer_->describe("et", e3, t);
    auto skip = [&](int level, Extent2 extent) {
        const SkipUnit& s = skips_[level];
        if (s.mode == SkipMode::Off) return;
        const std::string prefix = "skip" + std::to_string(level + 1);
        if (s.enhance) s.enhance->describe(prefix + ".fe", extent, t);
        t.conv(prefix + ".proj", s.proj.spec, extent);
    };
    skip(2, e3);
    t.conv("up1.conv", up1_conv_.spec, e2);
    t.batch_norm("up1.bn", c2);
    skip(1, e2);
    t.conv("up2.conv", up2_conv_.spec, e1);
    t.batch_norm("up2.bn", c1);
    skip(0, e1);
    if (pixel_attention_) pixel_attention_->describe("pa", e1, t);
    t.conv("classifier", classifier_.spec, e1);
    return report;
}

template <typename T>
AccountingReport count_params(const LetNet<T>& model) {
    return model.describe(model.config().resolution);
}

template <typename T>
AccountingReport count_macs(const LetNet<T>& model, Extent2 resolution) {
    return model.describe(resolution);
}

template class LetNet<float>;
template class LetNet<double>;
template AccountingReport count_params<float>(const LetNet<float>&);
template AccountingReport count_params<double>(const LetNet<double>&);
template AccountingReport count_macs<float>(const LetNet<float>&, Extent2);
template AccountingReport count_macs<double>(const LetNet<double>&, Extent2);

}  // namespace letnet
