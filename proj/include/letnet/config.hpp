#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "letnet/data_io.hpp"
#include "letnet/model.hpp"
#include "letnet/training.hpp"

namespace letnet {

enum class DataKind { Synthetic, Camvid };

struct DataConfig {
    DataKind kind = DataKind::Synthetic;
    std::filesystem::path root;  // camvid layout root
    std::int32_t ignore_index = 255;
    std::vector<std::string> class_names;
    Normalization norm;
    // synthetic stream; class count follows model.num_classes
    std::uint64_t synth_seed = 7;
    Extent2 synth_size{64, 64};
    double synth_density = 3.0;
    double synth_noise = 0.05;
    Index train_count = 256;
    Index val_count = 32;
    Index test_count = 32;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct OutputConfig {
    std::filesystem::path checkpoint = "letnet.ckpt";
    std::filesystem::path metrics = "metrics.csv";
    friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

// Line-oriented `section.key = value` configuration. `#` starts a comment.
// `model.preset` is applied before any other model key regardless of its
// position. Lists are comma separated, extents are written HxW.
struct RunConfig {
    std::string preset = "letnet";
    ModelConfig model = ModelConfig::preset("letnet");
    TrainConfig train;
    DataConfig data;
    OutputConfig output;

    // Throws ConfigError as "<source>:<line>:<column>: message".
    static RunConfig parse(std::string_view text, std::string_view source = "<config>");
    static RunConfig load(const std::filesystem::path& path);
    // Applies one `key=value` override (e.g. from the command line).
    void set(std::string_view assignment, std::string_view source = "--set");
    // Every key in canonical order; parse(dump()) reproduces the config.
    std::string dump() const;
    // Cross-section checks; also copies shared fields (ignore index).
    void finalize();

    SyntheticSpec synthetic_spec(std::uint64_t stream_offset) const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// All recognized keys in canonical order.
const std::vector<std::string>& config_keys();

}  // namespace letnet
