#include "letnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "letnet/diagnostics.hpp"
#include "letnet/error.hpp"
#include "letnet/rng.hpp"

namespace letnet {

namespace fs = std::filesystem;

LabelMap::LabelMap(Index h, Index w, Index classes, std::int32_t ignore, std::int32_t fill)
    : height(h), width(w), num_classes(classes), ignore_index(ignore),
      values(static_cast<std::size_t>(h * w), fill) {}

void LabelMap::validate() const {
    if (static_cast<Index>(values.size()) != height * width) {
        throw DataError("label map holds " + std::to_string(values.size()) + " values, expected " +
                        std::to_string(height) + "x" + std::to_string(width));
    }
    for (Index r = 0; r < height; ++r) {
        for (Index c = 0; c < width; ++c) {
            const auto v = at(r, c);
            if (v == ignore_index) continue;
            if (v < 0 || v >= num_classes) {
                throw DataError("label " + std::to_string(v) + " at row " + std::to_string(r) + ", column " +
                                std::to_string(c) + " is outside [0, " + std::to_string(num_classes) +
                                ") and is not the ignore value " + std::to_string(ignore_index));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// palette

Palette Palette::standard(Index num_classes) {
    static constexpr Rgb base[] = {
        {128, 128, 128}, {128, 0, 0},   {192, 192, 128}, {128, 64, 128}, {0, 0, 192},    {128, 128, 0},
        {192, 128, 128}, {64, 64, 128}, {64, 0, 128},    {64, 64, 0},    {0, 128, 192},  {244, 35, 232},
        {70, 70, 70},    {102, 102, 156}, {190, 153, 153}, {250, 170, 30}, {220, 220, 0}, {107, 142, 35},
        {152, 251, 152}, {70, 130, 180}, {220, 20, 60},  {255, 0, 0},    {0, 0, 142},    {0, 60, 100},
    };
    if (num_classes < 1 || num_classes > 256) throw ConfigError("palette supports 1..256 classes");
    Palette p;
    std::set<Rgb> used{p.ignore_color};
    for (const auto& c : base) {
        if (static_cast<Index>(p.colors.size()) == num_classes) break;
        p.colors.push_back(c);
        used.insert(c);
    }
    std::uint64_t state = 0x9e3779b97f4a7c15ULL;
    while (static_cast<Index>(p.colors.size()) < num_classes) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        const Rgb c{static_cast<std::uint8_t>(state >> 56), static_cast<std::uint8_t>(state >> 48),
                    static_cast<std::uint8_t>(state >> 40)};
        if (used.insert(c).second) p.colors.push_back(c);
    }
    return p;
}

void Palette::validate() const {
    std::set<Rgb> seen{ignore_color};
    for (std::size_t k = 0; k < colors.size(); ++k) {
        if (!seen.insert(colors[k]).second) {
            throw ConfigError("palette color of class " + std::to_string(k) +
                              " duplicates an earlier entry or the ignore color");
        }
    }
}

Tensor colorize(const LabelMap& labels, const Palette& palette) {
    Tensor out({3, labels.height, labels.width});
    auto y = out.data();
    const Index plane = labels.height * labels.width;
    for (Index i = 0; i < plane; ++i) {
        const auto v = labels.values[static_cast<std::size_t>(i)];
        Rgb c;
        if (v == labels.ignore_index) {
            c = palette.ignore_color;
        } else if (v >= 0 && v < static_cast<std::int32_t>(palette.colors.size())) {
            c = palette.colors[static_cast<std::size_t>(v)];
        } else {
            throw ConfigError("palette has no color for class " + std::to_string(v) + " (row " +
                              std::to_string(i / labels.width) + ", column " + std::to_string(i % labels.width) +
                              ")");
        }
        for (Index ch = 0; ch < 3; ++ch) y[ch * plane + i] = static_cast<float>(c[ch]) / 255.0f;
    }
    return out;
}

// ---------------------------------------------------------------------------
// portable pixmaps

namespace {

struct PnmHeader {
    Index width = 0, height = 0, maxval = 0;
    std::size_t payload = 0;  // offset of the first payload byte
};

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

PnmHeader parse_pnm_header(std::span<const std::uint8_t> bytes, char kind, std::string_view source) {
    const std::string where(source);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<std::uint8_t>(kind)) {
        throw DataError(where + ": bad magic at byte 0, expected 'P" + std::string(1, kind) + "'");
    }
    std::size_t pos = 2;
    auto read_field = [&](const char* name) -> Index {
        // whitespace and comments before each field
        for (;;) {
            while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size()) throw DataError(where + ": truncated header, missing " + name);
        if (bytes[pos] < '0' || bytes[pos] > '9') {
            throw DataError(where + ": expected " + std::string(name) + " at byte " + std::to_string(pos));
        }
        const std::size_t start = pos;
        Index v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1'000'000) throw DataError(where + ": " + name + " at byte " + std::to_string(start) + " too large");
            ++pos;
        }
        return v;
    };
    PnmHeader h;
    h.width = read_field("width");
    h.height = read_field("height");
    h.maxval = read_field("maxval");
    if (pos >= bytes.size() || !is_space(bytes[pos])) {
        throw DataError(where + ": expected a single whitespace byte after maxval at byte " + std::to_string(pos));
    }
    h.payload = pos + 1;
    if (h.width < 1 || h.height < 1) throw DataError(where + ": image extent must be positive");
    return h;
}

void require_payload(std::span<const std::uint8_t> bytes, const PnmHeader& h, std::size_t need,
                     std::string_view source) {
    const std::size_t have = bytes.size() - h.payload;
    if (have < need) {
        throw DataError(std::string(source) + ": truncated payload, " + std::to_string(have) + " of " +
                        std::to_string(need) + " bytes starting at byte " + std::to_string(h.payload));
    }
}

std::vector<std::uint8_t> header_bytes(char kind, Index w, Index h) {
    const std::string s = "P" + std::string(1, kind) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    return {s.begin(), s.end()};
}

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes, std::string_view source) {
    const auto h = parse_pnm_header(bytes, '6', source);
    if (h.maxval != 255) {
        throw DataError(std::string(source) + ": maxval " + std::to_string(h.maxval) + " unsupported, expected 255");
    }
    const Index plane = h.width * h.height;
    require_payload(bytes, h, static_cast<std::size_t>(3 * plane), source);
    Tensor out({3, h.height, h.width});
    auto y = out.data();
    const auto* p = bytes.data() + h.payload;
    for (Index i = 0; i < plane; ++i)
        for (Index c = 0; c < 3; ++c) y[c * plane + i] = static_cast<float>(p[3 * i + c]) / 255.0f;
    return out;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ConfigError("write_image expects a 3 x H x W tensor, got " + shape_str(image.shape()));
    }
    const Index H = image.dim(1), W = image.dim(2), plane = H * W;
    auto out = header_bytes('6', W, H);
    const auto x = image.data();
    out.reserve(out.size() + static_cast<std::size_t>(3 * plane));
    for (Index i = 0; i < plane; ++i) {
        for (Index c = 0; c < 3; ++c) {
            const float v = std::clamp(x[c * plane + i], 0.0f, 1.0f);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
        }
    }
    return out;
}

LabelMap decode_pgm_labels(std::span<const std::uint8_t> bytes, Index num_classes, std::int32_t ignore_index,
                           std::string_view source) {
    const auto h = parse_pnm_header(bytes, '5', source);
    if (h.maxval < 1 || h.maxval > 255) {
        throw DataError(std::string(source) + ": maxval " + std::to_string(h.maxval) + " unsupported, expected 1..255");
    }
    require_payload(bytes, h, static_cast<std::size_t>(h.width * h.height), source);
    LabelMap labels(h.height, h.width, num_classes, ignore_index);
    std::copy_n(bytes.data() + h.payload, h.width * h.height, labels.values.begin());
    try {
        labels.validate();
    } catch (const DataError& e) {
        throw DataError(std::string(source) + ": " + e.what());
    }
    return labels;
}

std::vector<std::uint8_t> encode_pgm_labels(const LabelMap& labels) {
    auto out = header_bytes('5', labels.width, labels.height);
    for (std::size_t i = 0; i < labels.values.size(); ++i) {
        const auto v = labels.values[i];
        if (v < 0 || v > 255) {
            throw DataError("label " + std::to_string(v) + " at row " + std::to_string(i / labels.width) +
                            ", column " + std::to_string(i % labels.width) + " does not fit a gray byte");
        }
        out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_image(const fs::path& path) { return decode_ppm(read_file(path), path.string()); }

void write_image(const Tensor& image, const fs::path& path) { write_file(path, encode_ppm(image)); }

LabelMap read_labels(const fs::path& path, Index num_classes, std::int32_t ignore_index) {
    return decode_pgm_labels(read_file(path), num_classes, ignore_index, path.string());
}

void write_labels(const LabelMap& labels, const fs::path& path) { write_file(path, encode_pgm_labels(labels)); }

// ---------------------------------------------------------------------------
// datasets

MemoryDataset::MemoryDataset(std::vector<Sample> samples) : samples_(std::move(samples)) {}

bool MemoryDataset::labeled() const {
    return !samples_.empty() &&
           std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return s.labels.has_value(); });
}

FileDataset::FileDataset(std::vector<Entry> entries, Index num_classes, std::int32_t ignore_index)
    : entries_(std::move(entries)), num_classes_(num_classes), ignore_index_(ignore_index) {}

bool FileDataset::labeled() const {
    return !entries_.empty() &&
           std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return !e.labels.empty(); });
}

Sample FileDataset::sample(std::size_t index) const {
    const Entry& e = entries_.at(index);
    Sample s;
    s.stem = e.stem;
    s.image = read_image(e.image);
    if (!e.labels.empty()) {
        s.labels = read_labels(e.labels, num_classes_, ignore_index_);
        if (s.labels->height != s.image.dim(1) || s.labels->width != s.image.dim(2)) {
            throw DataError("sample '" + e.stem + "': label map " + std::to_string(s.labels->height) + "x" +
                            std::to_string(s.labels->width) + " does not match image " +
                            std::to_string(s.image.dim(1)) + "x" + std::to_string(s.image.dim(2)));
        }
    }
    return s;
}

const Dataset& SplitSet::split(std::string_view name) const {
    const std::shared_ptr<const Dataset>* p = nullptr;
    if (name == "train") p = &train;
    if (name == "val") p = &val;
    if (name == "test") p = &test;
    if (p == nullptr) throw ConfigError("unknown split '" + std::string(name) + "' (expected train, val or test)");
    if (!*p) throw ConfigError("split '" + std::string(name) + "' is not available");
    return **p;
}

std::vector<std::string> parse_split_list(std::string_view text, std::string_view source) {
    std::vector<std::string> stems;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        ++line_no;
        const auto end = text.find('\n', pos);
        const std::string_view line = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
        pos = end == std::string_view::npos ? text.size() : end + 1;
        if (line.empty()) continue;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (is_space(static_cast<std::uint8_t>(c)) || c == '/' || c == '\\' || c == '\0') {
                throw DataError(std::string(source) + ":" + std::to_string(line_no) + ":" + std::to_string(i + 1) +
                                ": malformed stem (whitespace or path separator)");
            }
        }
        if (line == "." || line == "..") {
            throw DataError(std::string(source) + ":" + std::to_string(line_no) + ":1: malformed stem");
        }
        stems.emplace_back(line);
    }
    return stems;
}

SplitSet load_camvid_dir(const fs::path& root, Index num_classes, std::int32_t ignore_index) {
    if (!fs::is_directory(root)) throw IoError("dataset root " + root.string() + " is not a directory");
    SplitSet set;
    std::size_t total = 0;
    auto load_split = [&](const char* name) -> std::shared_ptr<const Dataset> {
        const fs::path list = root / (std::string(name) + ".txt");
        std::vector<FileDataset::Entry> entries;
        if (fs::exists(list)) {
            const auto bytes = read_file(list);
            const auto stems = parse_split_list(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                                list.string());
            std::size_t labeled = 0;
            std::string first_missing;
            for (const auto& stem : stems) {
                FileDataset::Entry e{stem, root / "images" / (stem + ".ppm"), root / "labels" / (stem + ".pgm")};
                if (!fs::exists(e.image)) {
                    throw DataError(list.string() + ": sample '" + stem + "' has no image " + e.image.string());
                }
                if (fs::exists(e.labels)) {
                    ++labeled;
                } else {
                    if (first_missing.empty()) first_missing = stem;
                    e.labels.clear();
                }
                entries.push_back(std::move(e));
            }
            if (labeled != 0 && labeled != entries.size()) {
                throw DataError(list.string() + ": sample '" + first_missing + "' has no label file " +
                                (root / "labels" / (first_missing + ".pgm")).string());
            }
        }
        total += entries.size();
        return std::make_shared<FileDataset>(std::move(entries), num_classes, ignore_index);
    };
    set.train = load_split("train");
    set.val = load_split("val");
    set.test = load_split("test");
    if (total == 0) warn("dataset root " + root.string() + " holds no samples");
    return set;
}

// ---------------------------------------------------------------------------
// synthetic shapes

void SyntheticSpec::validate() const {
    if (height < 8 || width < 8) throw ConfigError("synthetic images must be at least 8x8");
    if (num_classes < 2 || num_classes > 255) throw ConfigError("synthetic class count must be in [2, 255]");
    if (density < 0) throw ConfigError("synthetic density must be non-negative");
    if (noise < 0) throw ConfigError("synthetic noise must be non-negative");
    if (ignore_index >= 0 && ignore_index < num_classes) {
        throw ConfigError("ignore index " + std::to_string(ignore_index) + " collides with a class id");
    }
}

bool SyntheticShape::contains(Index row, Index col) const {
    if (!disk) return row >= y0 && row < y1 && col >= x0 && col < x1;
    const double dy = static_cast<double>(row) + 0.5 - cy;
    const double dx = static_cast<double>(col) + 0.5 - cx;
    return dy * dy + dx * dx <= radius * radius;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng image_rng(const SyntheticSpec& spec, std::size_t index) {
    return Rng(splitmix(spec.seed ^ splitmix(static_cast<std::uint64_t>(index) + 1)));
}

// Base colors: background first, then one per class.
std::array<double, 3> class_color(Index k) {
    static constexpr std::array<double, 3> table[] = {
        {0.30, 0.32, 0.30}, {0.85, 0.25, 0.20}, {0.20, 0.40, 0.90}, {0.90, 0.85, 0.20},
        {0.25, 0.80, 0.30}, {0.80, 0.30, 0.85}, {0.20, 0.85, 0.85}, {0.95, 0.60, 0.20},
    };
    if (k < 8) return table[k];
    const auto h = splitmix(static_cast<std::uint64_t>(k));
    return {static_cast<double>(h & 0xff) / 255.0, static_cast<double>((h >> 8) & 0xff) / 255.0,
            static_cast<double>((h >> 16) & 0xff) / 255.0};
}

std::vector<SyntheticShape> draw_shapes(const SyntheticSpec& spec, Rng& rng) {
    std::vector<SyntheticShape> shapes;
    const double whole = std::floor(spec.density);
    Index count = static_cast<Index>(whole);
    if (rng.uniform() < spec.density - whole) ++count;
    const Index side = std::min(spec.height, spec.width);
    const Index smin = std::max<Index>(2, side / 8);
    const Index smax = std::max<Index>(smin + 1, side / 3);
    for (Index i = 0; i < count; ++i) {
        SyntheticShape s;
        s.class_id = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.num_classes - 1)));
        s.disk = s.class_id % 2 == 0;
        if (s.disk) {
            s.radius = rng.uniform(static_cast<double>(smin) / 2.0, static_cast<double>(smax) / 2.0);
            s.cy = rng.uniform(0.0, static_cast<double>(spec.height));
            s.cx = rng.uniform(0.0, static_cast<double>(spec.width));
        } else {
            const auto span = static_cast<std::uint64_t>(smax - smin + 1);
            const Index h = smin + static_cast<Index>(rng.below(span));
            const Index w = smin + static_cast<Index>(rng.below(span));
            s.y0 = static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.height - h + 1)));
            s.x0 = static_cast<Index>(rng.below(static_cast<std::uint64_t>(spec.width - w + 1)));
            s.y1 = s.y0 + h;
            s.x1 = s.x0 + w;
        }
        shapes.push_back(s);
    }
    return shapes;
}

}  // namespace

std::vector<SyntheticShape> synth_shapes(const SyntheticSpec& spec, std::size_t index) {
    spec.validate();
    Rng rng = image_rng(spec, index);
    return draw_shapes(spec, rng);
}

Sample synth_sample(const SyntheticSpec& spec, std::size_t index) {
    spec.validate();
    Rng rng = image_rng(spec, index);
    const auto shapes = draw_shapes(spec, rng);
    const Index H = spec.height, W = spec.width, plane = H * W;

    LabelMap labels(H, W, spec.num_classes, spec.ignore_index, 0);
    std::vector<double> img(static_cast<std::size_t>(3 * plane));
    auto jitter = [&](Index k) {
        auto c = class_color(k);
        for (auto& v : c) v += rng.uniform(-0.08, 0.08);
        return c;
    };
    const auto bg = jitter(0);
    for (Index i = 0; i < plane; ++i)
        for (Index c = 0; c < 3; ++c) img[static_cast<std::size_t>(c * plane + i)] = bg[c];
    for (const auto& s : shapes) {
        const auto color = jitter(s.class_id);
        for (Index r = 0; r < H; ++r) {
            for (Index col = 0; col < W; ++col) {
                if (!s.contains(r, col)) continue;
                labels.at(r, col) = static_cast<std::int32_t>(s.class_id);
                for (Index c = 0; c < 3; ++c) img[static_cast<std::size_t>(c * plane + r * W + col)] = color[c];
            }
        }
    }
    Tensor image({3, H, W});
    auto y = image.data();
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img[i] + spec.noise * rng.normal(), 0.0, 1.0);
        // quantized to 8 bits so images survive a P6 round trip unchanged
        y[i] = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
    }
    Sample out;
    out.stem = "synth_" + std::to_string(index);
    out.image = std::move(image);
    out.labels = std::move(labels);
    return out;
}

MemoryDataset synth_dataset(const SyntheticSpec& spec, std::size_t n) {
    std::vector<Sample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) samples.push_back(synth_sample(spec, i));
    return MemoryDataset(std::move(samples));
}

Tensor Normalization::apply(const Tensor& images) const {
    const std::size_t rank = images.rank();
    if ((rank != 3 && rank != 4) || images.dim(rank - 3) != 3) {
        throw ConfigError("normalization expects 3 x H x W or N x 3 x H x W, got " + shape_str(images.shape()));
    }
    for (double s : stddev)
        if (!(s > 0)) throw ConfigError("data.std entries must be positive");
    Tensor out = images.detach();
    auto y = out.data();
    const Index plane = images.dim(rank - 2) * images.dim(rank - 1);
    const Index batch = rank == 4 ? images.dim(0) : 1;
    for (Index n = 0; n < batch; ++n) {
        for (Index c = 0; c < 3; ++c) {
            const float m = static_cast<float>(mean[c]);
            const float inv = static_cast<float>(1.0 / stddev[c]);
            float* p = y.data() + (n * 3 + c) * plane;
            for (Index i = 0; i < plane; ++i) p[i] = (p[i] - m) * inv;
        }
    }
    return out;
}

}  // namespace letnet
