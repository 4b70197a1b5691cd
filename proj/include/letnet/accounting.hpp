#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "letnet/ops.hpp"

namespace letnet {

// One leaf layer of the network as seen by the accounting engine.
struct LayerRow {
    std::string name;
    std::string kind;  // conv, bn, ln, linear, attention, pool
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
};

struct AccountingReport {
    std::vector<LayerRow> rows;
    Extent2 resolution{};

    std::uint64_t total_params() const;
    std::uint64_t total_macs() const;
    std::uint64_t total_flops() const { return 2 * total_macs(); }
};

// Closed-form per-layer counts used to build the report. Counting
// conventions: conv MACs = output elements * kh*kw*Cin/groups; linear MACs =
// rows*in*out; attention MACs = Q K^T plus weights V per segment; pooling is
// one add (or compare) per window element read; normalization, activations,
// elementwise ops and resizing are not counted.
namespace accounting {

std::uint64_t conv_params(const ConvSpec& spec);
std::uint64_t conv_macs(const ConvSpec& spec, Index batch, Extent2 input);
std::uint64_t norm_params(Index channels);  // BN and LN: gamma + beta
std::uint64_t linear_params(Index in, Index out, bool bias);

// Appends rows for a layer stack while tracking the spatial extent.
class LayerTable {
   public:
    explicit LayerTable(std::vector<LayerRow>& rows) : rows_(rows) {}

    // Returns the conv output extent.
    Extent2 conv(const std::string& name, const ConvSpec& spec, Extent2 input);
    void batch_norm(const std::string& name, Index channels);
    void layer_norm(const std::string& name, Index channels);
    void linear(const std::string& name, Index tokens, Index in, Index out, bool bias);
    void attention(const std::string& name, Index tokens, Index segments, Index dim);
    void pool(const std::string& name, std::uint64_t reads);

   private:
    std::vector<LayerRow>& rows_;
};

}  // namespace accounting
}  // namespace letnet
