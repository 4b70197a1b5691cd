#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "letnet/tensor.hpp"

namespace letnet {

// H x W class indices. Every value is either < num_classes or ignore_index.
struct LabelMap {
    Index height = 0;
    Index width = 0;
    Index num_classes = 0;
    std::int32_t ignore_index = 255;
    std::vector<std::int32_t> values;

    LabelMap() = default;
    LabelMap(Index h, Index w, Index classes, std::int32_t ignore, std::int32_t fill = 0);

    std::int32_t at(Index row, Index col) const { return values[static_cast<std::size_t>(row * width + col)]; }
    std::int32_t& at(Index row, Index col) { return values[static_cast<std::size_t>(row * width + col)]; }
    // Throws DataError naming the first offending pixel.
    void validate() const;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

struct Palette {
    std::vector<Rgb> colors;  // one per class
    Rgb ignore_color{0, 0, 0};

    // Fixed colors for up to 24 classes (CamVid-like order first).
    static Palette standard(Index num_classes);
    // Throws ConfigError when two entries (including the ignore color) coincide.
    void validate() const;
};

// Binary PPM (P6, maxval 255) <-> 3 x H x W tensor in [0, 1].
Tensor decode_ppm(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");
std::vector<std::uint8_t> encode_ppm(const Tensor& image);
Tensor read_image(const std::filesystem::path& path);
void write_image(const Tensor& image, const std::filesystem::path& path);

// Binary PGM (P5) with class indices as gray values.
LabelMap decode_pgm_labels(std::span<const std::uint8_t> bytes, Index num_classes,
                           std::int32_t ignore_index, std::string_view source = "<memory>");
std::vector<std::uint8_t> encode_pgm_labels(const LabelMap& labels);
LabelMap read_labels(const std::filesystem::path& path, Index num_classes, std::int32_t ignore_index);
void write_labels(const LabelMap& labels, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Palette lookup per pixel; ignore pixels take the ignore color.
Tensor colorize(const LabelMap& labels, const Palette& palette);

struct Sample {
    std::string stem;
    Tensor image;            // 3 x H x W
    std::optional<LabelMap> labels;
};

// Random-access sample source. Implementations are read-only after
// construction and safe to share.
class Dataset {
   public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual Sample sample(std::size_t index) const = 0;
    virtual bool labeled() const = 0;
    bool empty() const { return size() == 0; }
};

class MemoryDataset final : public Dataset {
   public:
    MemoryDataset() = default;
    explicit MemoryDataset(std::vector<Sample> samples);
    std::size_t size() const override { return samples_.size(); }
    Sample sample(std::size_t index) const override { return samples_.at(index); }
    bool labeled() const override;
    const std::vector<Sample>& samples() const { return samples_; }

   private:
    std::vector<Sample> samples_;
};

// Samples read from disk on access.
class FileDataset final : public Dataset {
   public:
    struct Entry {
        std::string stem;
        std::filesystem::path image;
        std::filesystem::path labels;  // empty when unlabeled
    };
    FileDataset(std::vector<Entry> entries, Index num_classes, std::int32_t ignore_index);
    std::size_t size() const override { return entries_.size(); }
    Sample sample(std::size_t index) const override;
    bool labeled() const override;
    const std::vector<Entry>& entries() const { return entries_; }

   private:
    std::vector<Entry> entries_;
    Index num_classes_;
    std::int32_t ignore_index_;
};

// Directory layout:
//   root/images/<stem>.ppm, root/labels/<stem>.pgm,
//   root/{train,val,test}.txt with one stem per line.
// A split whose label files are all absent is loaded unlabeled; a split
// with only some labels present is an error naming the first missing stem.
struct SplitSet {
    std::shared_ptr<const Dataset> train, val, test;
    const Dataset& split(std::string_view name) const;
};

SplitSet load_camvid_dir(const std::filesystem::path& root, Index num_classes, std::int32_t ignore_index);
// Parses a split list; throws DataError with the line number on malformed entries.
std::vector<std::string> parse_split_list(std::string_view text, std::string_view source);

struct SyntheticSpec {
    std::uint64_t seed = 1;
    Index height = 64;
    Index width = 64;
    Index num_classes = 3;
    double density = 3.0;  // mean shapes per image
    double noise = 0.05;   // std of per-pixel gaussian noise
    std::int32_t ignore_index = 255;

    void validate() const;
};

// Geometry of one painted shape. Odd classes are axis-aligned rectangles
// covering rows [y0, y1) and columns [x0, x1); even classes are disks of
// `radius` around (cy, cx) covering pixel centers at distance <= radius.
struct SyntheticShape {
    Index class_id = 0;
    bool disk = false;
    Index y0 = 0, x0 = 0, y1 = 0, x1 = 0;
    double cy = 0, cx = 0, radius = 0;
    bool contains(Index row, Index col) const;
};

// Shapes of image `index`, in paint order (later shapes overwrite).
std::vector<SyntheticShape> synth_shapes(const SyntheticSpec& spec, std::size_t index);
Sample synth_sample(const SyntheticSpec& spec, std::size_t index);
// Images 0..n-1 of the stream defined by spec.
MemoryDataset synth_dataset(const SyntheticSpec& spec, std::size_t n);

// Per-channel (x - mean) / std applied to a 3 x H x W or N x 3 x H x W tensor.
struct Normalization {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};
    Tensor apply(const Tensor& images) const;
    friend bool operator==(const Normalization&, const Normalization&) = default;
};

}  // namespace letnet
