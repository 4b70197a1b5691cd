#include "letnet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <map>

#include "letnet/data_io.hpp"
#include "letnet/error.hpp"

namespace letnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'E', 'T', 'N'};
constexpr std::size_t kHeaderSize = 12;
constexpr std::string_view kConfigPrefix = "config.";

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
   public:
    Reader(std::span<const std::uint8_t> bytes, std::string_view source) : bytes_(bytes), source_(source) {}

    template <typename U>
    U get(const char* what) {
        need(sizeof(U), what);
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

   private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw IoError(std::string(source_) + ": truncated checkpoint while reading " + what + " at byte " +
                          std::to_string(pos_));
        }
    }
    std::span<const std::uint8_t> bytes_;
    std::string_view source_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

CheckpointEntry config_entry(const std::string& key, std::vector<Index> values) {
    CheckpointEntry e;
    e.name = std::string(kConfigPrefix) + key;
    e.shape = {static_cast<Index>(values.size())};
    for (Index v : values) e.data.push_back(static_cast<float>(v));
    return e;
}

bool is_config(const std::string& name) { return name.starts_with(kConfigPrefix); }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff) throw ConfigError("tensor name too long: " + e.name.substr(0, 64));
        if (e.shape.size() > 0xff) throw ConfigError("tensor rank too large: " + e.name);
        if (shape_numel(e.shape) != static_cast<Index>(e.data.size())) {
            throw ConfigError("tensor " + e.name + " data does not match its shape");
        }
        put<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put<std::uint8_t>(out, static_cast<std::uint8_t>(e.shape.size()));
        for (Index d : e.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        const auto* p = reinterpret_cast<const std::uint8_t*>(e.data.data());
        out.insert(out.end(), p, p + e.data.size() * sizeof(float));
    }
    put<std::uint32_t>(out, crc32_of(std::span(out).subspan(kHeaderSize)));
    return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes, std::string_view source) {
    Reader r(bytes, source);
    const auto magic = r.take(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw IoError(std::string(source) + ": bad magic, not a LETN checkpoint");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw IoError(std::string(source) + ": checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = r.get<std::uint32_t>("tensor count");
    std::vector<CheckpointEntry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const auto len = r.get<std::uint16_t>("name length");
        const auto name = r.take(len, "tensor name");
        e.name.assign(name.begin(), name.end());
        const auto rank = r.get<std::uint8_t>("rank");
        std::uint64_t numel = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const auto dim = r.get<std::uint32_t>("dimension");
            e.shape.push_back(static_cast<Index>(dim));
            numel *= dim;
            if (numel > bytes.size()) {
                throw IoError(std::string(source) + ": tensor " + e.name + " is larger than the file");
            }
        }
        const auto payload = r.take(numel * sizeof(float), "tensor payload");
        e.data.resize(numel);
        std::memcpy(e.data.data(), payload.data(), payload.size());
        entries.push_back(std::move(e));
    }
    const std::size_t end = r.pos();
    const auto stored = r.get<std::uint32_t>("checksum");
    if (r.pos() != bytes.size()) {
        throw IoError(std::string(source) + ": " + std::to_string(bytes.size() - r.pos()) +
                      " trailing bytes after checksum");
    }
    if (crc32_of(bytes.subspan(kHeaderSize, end - kHeaderSize)) != stored) {
        throw IoError(std::string(source) + ": checksum mismatch, file is corrupted");
    }
    return entries;
}

std::vector<CheckpointEntry> checkpoint_entries(const Model& model) {
    std::vector<CheckpointEntry> out;
    auto add = [&](const std::vector<NamedTensor<float>>& tensors) {
        for (const auto& t : tensors)
            out.push_back({t.name, t.tensor.shape(), {t.tensor.data().begin(), t.tensor.data().end()}});
    };
    add(model.parameters());
    add(model.buffers());
    const auto& c = model.config();
    auto arr = [](const std::array<Index, 3>& a) { return std::vector<Index>(a.begin(), a.end()); };
    out.push_back(config_entry("num_classes", {c.num_classes}));
    out.push_back(config_entry("channels", arr(c.channels)));
    out.push_back(config_entry("depths", arr(c.depths)));
    out.push_back(config_entry("dilations", c.dilation_schedule()));
    out.push_back(config_entry("transformer", {c.transformer ? 1 : 0}));
    out.push_back(config_entry("skips", {static_cast<Index>(c.skips[0]), static_cast<Index>(c.skips[1]),
                                         static_cast<Index>(c.skips[2])}));
    out.push_back(config_entry("pixel_attention", {c.pixel_attention ? 1 : 0}));
    out.push_back(config_entry("heads", {c.heads}));
    out.push_back(config_entry("segments", {c.segments}));
    out.push_back(config_entry("mlp_ratio", {c.mlp_ratio}));
    out.push_back(config_entry("fe_reduction", {c.fe_reduction}));
    out.push_back(config_entry("ca_kernel", {c.ca_kernel}));
    return out;
}

ModelConfig config_from_entries(const std::vector<CheckpointEntry>& entries) {
    std::map<std::string, std::vector<Index>> values;
    for (const auto& e : entries) {
        if (!is_config(e.name)) continue;
        auto& v = values[e.name.substr(kConfigPrefix.size())];
        for (float f : e.data) v.push_back(static_cast<Index>(f));
    }
    auto get = [&](const std::string& key, std::size_t n) -> const std::vector<Index>& {
        const auto it = values.find(key);
        if (it == values.end()) throw ConfigError("checkpoint lacks config." + key);
        if (n != 0 && it->second.size() != n) throw ConfigError("checkpoint config." + key + " has the wrong length");
        return it->second;
    };
    auto arr = [&](const std::string& key) {
        const auto& v = get(key, 3);
        return std::array<Index, 3>{v[0], v[1], v[2]};
    };
    auto skip = [](Index v) {
        if (v < 0 || v > 2) throw ConfigError("checkpoint config.skips holds an invalid mode");
        return static_cast<SkipMode>(v);
    };
    ModelConfig c;
    c.num_classes = get("num_classes", 1)[0];
    c.channels = arr("channels");
    c.depths = arr("depths");
    c.dilations = get("dilations", 0);
    c.transformer = get("transformer", 1)[0] != 0;
    const auto s = arr("skips");
    c.skips = {skip(s[0]), skip(s[1]), skip(s[2])};
    c.pixel_attention = get("pixel_attention", 1)[0] != 0;
    c.heads = get("heads", 1)[0];
    c.segments = get("segments", 1)[0];
    c.mlp_ratio = get("mlp_ratio", 1)[0];
    c.fe_reduction = get("fe_reduction", 1)[0];
    c.ca_kernel = get("ca_kernel", 1)[0];
    c.validate();
    return c;
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
    ModelConfig x = a, y = b;
    x.dilations = a.dilation_schedule();
    y.dilations = b.dilation_schedule();
    x.resolution = y.resolution;
    return x == y;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(checkpoint_entries(model)));
}

void load_weights(Model& model, const std::vector<CheckpointEntry>& entries) {
    std::vector<NamedTensor<float>> targets = model.parameters();
    for (auto& b : model.buffers()) targets.push_back(b);
    std::map<std::string, const NamedTensor<float>*> by_name;
    for (const auto& t : targets) by_name[t.name] = &t;
    std::map<std::string, const CheckpointEntry*> in_file;
    for (const auto& e : entries) {
        if (is_config(e.name)) continue;
        if (by_name.find(e.name) == by_name.end()) {
            throw ConfigError("checkpoint tensor '" + e.name + "' is absent from the model");
        }
        in_file[e.name] = &e;
    }
    for (const auto& t : targets) {
        if (in_file.find(t.name) == in_file.end()) {
            throw ConfigError("model tensor '" + t.name + "' is absent from the checkpoint");
        }
    }
    for (const auto& t : targets) {
        const auto* e = in_file[t.name];
        if (e->shape != t.tensor.shape()) {
            throw ConfigError("tensor '" + t.name + "' has shape " + shape_str(e->shape) + " in the checkpoint but " +
                              shape_str(t.tensor.shape()) + " in the model");
        }
    }
    if (!same_architecture(config_from_entries(entries), model.config())) {
        throw ConfigError("checkpoint architecture differs from the model configuration");
    }
    for (auto& t : targets) {
        const auto* e = in_file[t.name];
        std::copy(e->data.begin(), e->data.end(), t.tensor.data().begin());
    }
}

void load_weights(Model& model, const std::filesystem::path& path) {
    load_weights(model, decode_checkpoint(read_file(path), path.string()));
}

Model load_checkpoint(const std::filesystem::path& path) {
    const auto entries = decode_checkpoint(read_file(path), path.string());
    Model model = Model::build(config_from_entries(entries), 0);
    load_weights(model, entries);
    return model;
}

}  // namespace letnet
