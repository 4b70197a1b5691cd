#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "letnet/accounting.hpp"
#include "letnet/blocks.hpp"

namespace letnet {

enum class SkipMode { Off, Plain, Enhanced };

std::string_view to_string(SkipMode mode);
SkipMode parse_skip_mode(std::string_view text);

struct ModelConfig {
    Index num_classes = 19;
    std::array<Index, 3> channels{32, 64, 128};
    std::array<Index, 3> depths{2, 2, 12};
    // One dilation per LDB, stage order. Empty selects the default schedule:
    // 1 for stages 1-2, cycling 1,2,4,8 in stage 3.
    std::vector<Index> dilations;
    bool transformer = true;
    // Long connections L1 (stage-1 resolution), L2, L3.
    std::array<SkipMode, 3> skips{SkipMode::Enhanced, SkipMode::Enhanced, SkipMode::Enhanced};
    bool pixel_attention = true;
    Index heads = 8;
    Index segments = 4;
    Index mlp_ratio = 4;
    Index fe_reduction = 4;
    Index ca_kernel = 3;
    Extent2 resolution{512, 1024};  // used by accounting

    // Named presets: baseline, a1-a3, b1-b3, c1-c3 (ablation rows), letnet
    // (= c3), tiny (small widths for tests and desk-scale training).
    static ModelConfig preset(std::string_view name);
    static std::vector<std::string> preset_names();

    std::vector<Index> dilation_schedule() const;
    Index total_blocks() const { return depths[0] + depths[1] + depths[2]; }
    void validate() const;
    // Throws ConfigError naming the required multiples.
    void validate_input(Index height, Index width) const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Encoder-transformer-decoder segmentation network.
//
//   init 3x3/2 -> stage1 (LDB x n1 @ c1) -> down -> stage2 -> down -> stage3
//   -> [ET] -> (+L3) -> up(c3->c2) -> (+L2) -> up(c2->c1) -> (+L1) -> [PA]
//   -> 1x1 classifier -> bilinear restore to the input resolution
//
// A down unit concatenates a 3x3/2 conv with a 2x2 max pool; an up unit is
// bilinear x2 followed by 3x3 conv, BN, ReLU. A skip unit is an optional FE
// block followed by a 1x1 conv, added to the decoder feature.
template <typename T>
class LetNet {
   public:
    static LetNet build(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    // Eval mode records no graph regardless of the grad-mode setting.
    BasicTensor<T> forward(const BasicTensor<T>& images, NormMode mode);

    // Learnable tensors in a fixed order with dotted names.
    std::vector<NamedTensor<T>> parameters() const;
    // BN running statistics.
    std::vector<NamedTensor<T>> buffers() const;

    // Closed-form per-layer rows at the given input resolution.
    AccountingReport describe(Extent2 resolution) const;

   private:
    struct SkipUnit {
        SkipMode mode = SkipMode::Off;
        std::optional<FeatureEnhancement<T>> enhance;
        Conv2d<T> proj;
    };

    LetNet() = default;
    void collect(ParamCollector<T>& out) const;
    BasicTensor<T> apply_skip(SkipUnit& skip, const BasicTensor<T>& feature, NormMode mode);

    ModelConfig cfg_;
    Conv2d<T> init_conv_;
    BatchNorm2d<T> init_bn_;
    std::vector<LdbBlock<T>> stage1_, stage2_, stage3_;
    Conv2d<T> down2_conv_, down3_conv_;
    BatchNorm2d<T> down2_bn_, down3_bn_;
    std::optional<EfficientTransformer<T>> transformer_;
    std::array<SkipUnit, 3> skips_;
    Conv2d<T> up1_conv_, up2_conv_;
    BatchNorm2d<T> up1_bn_, up2_bn_;
    std::optional<PixelAttention<T>> pixel_attention_;
    Conv2d<T> classifier_;
};

using Model = LetNet<float>;

// Learnable-parameter rows (MACs evaluated at cfg.resolution).
template <typename T>
AccountingReport count_params(const LetNet<T>& model);
template <typename T>
AccountingReport count_macs(const LetNet<T>& model, Extent2 resolution);

}  // namespace letnet
