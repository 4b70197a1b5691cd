#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "letnet/model.hpp"

namespace letnet {

// File layout (little-endian):
//   "LETN", u32 version, u32 tensor count,
//   per tensor: u16 name length, name bytes, u8 rank, u32 dims..., f32 payload,
//   u32 CRC32 of everything between the 12-byte header and the checksum.
// Besides parameters and BN running statistics the file carries the
// architecture as "config.*" tensors so it can be rebuilt without a config.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
// Throws IoError on bad magic, version mismatch, truncation or checksum failure.
std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes,
                                               std::string_view source = "<memory>");

std::vector<CheckpointEntry> checkpoint_entries(const Model& model);
// Architecture recorded in the "config.*" entries.
ModelConfig config_from_entries(const std::vector<CheckpointEntry>& entries);
// True when two configs build identical networks (resolution is ignored).
bool same_architecture(const ModelConfig& a, const ModelConfig& b);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
// Rebuilds the model from the recorded architecture and loads its weights.
Model load_checkpoint(const std::filesystem::path& path);
// Loads weights into an existing model. Throws ConfigError naming the first
// file tensor absent from the model, then the first model tensor absent from
// the file, then the first shape mismatch, then any architecture mismatch.
// The model is left untouched on error.
void load_weights(Model& model, const std::vector<CheckpointEntry>& entries);
void load_weights(Model& model, const std::filesystem::path& path);

}  // namespace letnet
