#include "letnet/accounting.hpp"

#include <numeric>

namespace letnet {

std::uint64_t AccountingReport::total_params() const {
    return std::accumulate(rows.begin(), rows.end(), std::uint64_t{0},
                           [](std::uint64_t acc, const LayerRow& r) { return acc + r.params; });
}

std::uint64_t AccountingReport::total_macs() const {
    return std::accumulate(rows.begin(), rows.end(), std::uint64_t{0},
                           [](std::uint64_t acc, const LayerRow& r) { return acc + r.macs; });
}

namespace accounting {

std::uint64_t conv_params(const ConvSpec& spec) {
    const auto w = static_cast<std::uint64_t>(spec.kernel.h * spec.kernel.w * spec.in_channels *
                                              spec.out_channels / spec.groups);
    return w + (spec.bias ? static_cast<std::uint64_t>(spec.out_channels) : 0);
}

std::uint64_t conv_macs(const ConvSpec& spec, Index batch, Extent2 input) {
    const Extent2 out = spec.output_extent(input);
    return static_cast<std::uint64_t>(batch * spec.out_channels * out.h * out.w) *
           static_cast<std::uint64_t>(spec.kernel.h * spec.kernel.w * (spec.in_channels / spec.groups));
}

std::uint64_t norm_params(Index channels) { return 2 * static_cast<std::uint64_t>(channels); }

std::uint64_t linear_params(Index in, Index out, bool bias) {
    return static_cast<std::uint64_t>(in * out + (bias ? out : 0));
}

Extent2 LayerTable::conv(const std::string& name, const ConvSpec& spec, Extent2 input) {
    rows_.push_back({name, "conv", conv_params(spec), conv_macs(spec, 1, input)});
    return spec.output_extent(input);
}

void LayerTable::batch_norm(const std::string& name, Index channels) {
    rows_.push_back({name, "bn", norm_params(channels), 0});
}

void LayerTable::layer_norm(const std::string& name, Index channels) {
    rows_.push_back({name, "ln", norm_params(channels), 0});
}

void LayerTable::linear(const std::string& name, Index tokens, Index in, Index out, bool bias) {
    rows_.push_back({name, "linear", linear_params(in, out, bias),
                     static_cast<std::uint64_t>(tokens * in * out)});
}

void LayerTable::attention(const std::string& name, Index tokens, Index segments, Index dim) {
    // per segment: (L x d)(d x L) scores and (L x L)(L x d) mixing, summed over heads
    const Index len = tokens / segments;
    rows_.push_back({name, "attention", 0, static_cast<std::uint64_t>(2 * segments * len * len * dim)});
}

void LayerTable::pool(const std::string& name, std::uint64_t reads) {
    rows_.push_back({name, "pool", 0, reads});
}

}  // namespace accounting
}  // namespace letnet
