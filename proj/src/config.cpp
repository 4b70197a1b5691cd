#include "letnet/config.hpp"

#include <charconv>
#include <functional>
#include <map>

#include "letnet/error.hpp"

namespace letnet {

namespace {

// Value-level failure; the parser adds the position.
struct BadValue {
    std::string message;
};

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename I>
I parse_integer(std::string_view v) {
    I out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue{"expected an integer, got '" + std::string(v) + "'"};
    return out;
}

Index parse_index(std::string_view v) { return parse_integer<Index>(v); }

double parse_double(std::string_view v) {
    double out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue{"expected a number, got '" + std::string(v) + "'"};
    return out;
}

bool parse_bool(std::string_view v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw BadValue{"expected true or false, got '" + std::string(v) + "'"};
}

std::vector<std::string_view> split_list(std::string_view v) {
    std::vector<std::string_view> out;
    if (v.empty()) return out;
    std::size_t pos = 0;
    for (;;) {
        const auto comma = v.find(',', pos);
        out.push_back(trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::array<Index, 3> parse_triple(std::string_view v) {
    const auto parts = split_list(v);
    if (parts.size() != 3) throw BadValue{"expected three comma-separated integers"};
    return {parse_index(parts[0]), parse_index(parts[1]), parse_index(parts[2])};
}

std::array<double, 3> parse_double_triple(std::string_view v) {
    const auto parts = split_list(v);
    if (parts.size() != 3) throw BadValue{"expected three comma-separated numbers"};
    return {parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2])};
}

Extent2 parse_extent(std::string_view v) {
    const auto x = v.find('x');
    if (x == std::string_view::npos) throw BadValue{"expected HxW, got '" + std::string(v) + "'"};
    return {parse_index(trim(v.substr(0, x))), parse_index(trim(v.substr(x + 1)))};
}

std::string fmt(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}
std::string fmt(Index v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(Extent2 e) { return std::to_string(e.h) + "x" + std::to_string(e.w); }

template <typename Seq>
std::string join(const Seq& seq) {
    std::string out;
    for (const auto& x : seq) {
        if (!out.empty()) out += ",";
        if constexpr (std::is_convertible_v<decltype(x), std::string>) {
            out += x;
        } else {
            out += fmt(x);
        }
    }
    return out;
}

struct Key {
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

using KeyTable = std::vector<std::pair<std::string, Key>>;

const KeyTable& key_table() {
    static const KeyTable table = [] {
        KeyTable t;
        auto add = [&](std::string name, Key k) { t.emplace_back(std::move(name), std::move(k)); };
        // model.preset is handled by the parser before other keys
        add("model.preset", {[](RunConfig& c, std::string_view v) {
                                 c.model = ModelConfig::preset(v);
                                 c.preset = std::string(v);
                             },
                             [](const RunConfig& c) { return c.preset; }});
        add("model.num_classes", {[](RunConfig& c, std::string_view v) { c.model.num_classes = parse_index(v); },
                                  [](const RunConfig& c) { return fmt(c.model.num_classes); }});
        add("model.channels", {[](RunConfig& c, std::string_view v) { c.model.channels = parse_triple(v); },
                               [](const RunConfig& c) { return join(c.model.channels); }});
        add("model.depths", {[](RunConfig& c, std::string_view v) { c.model.depths = parse_triple(v); },
                             [](const RunConfig& c) { return join(c.model.depths); }});
        add("model.dilations", {[](RunConfig& c, std::string_view v) {
                                    c.model.dilations.clear();
                                    if (v == "default") return;
                                    for (auto p : split_list(v)) c.model.dilations.push_back(parse_index(p));
                                },
                                [](const RunConfig& c) {
                                    return c.model.dilations.empty() ? std::string("default") : join(c.model.dilations);
                                }});
        add("model.transformer", {[](RunConfig& c, std::string_view v) { c.model.transformer = parse_bool(v); },
                                  [](const RunConfig& c) { return fmt(c.model.transformer); }});
        add("model.skips", {[](RunConfig& c, std::string_view v) {
                                const auto parts = split_list(v);
                                if (parts.size() != 3) throw BadValue{"expected three skip modes for L1,L2,L3"};
                                try {
                                    for (int i = 0; i < 3; ++i) c.model.skips[i] = parse_skip_mode(parts[i]);
                                } catch (const ConfigError& e) {
                                    throw BadValue{e.what()};
                                }
                            },
                            [](const RunConfig& c) {
                                std::string out;
                                for (int i = 0; i < 3; ++i) out += (i ? "," : "") + std::string(to_string(c.model.skips[i]));
                                return out;
                            }});
        add("model.pixel_attention",
            {[](RunConfig& c, std::string_view v) { c.model.pixel_attention = parse_bool(v); },
             [](const RunConfig& c) { return fmt(c.model.pixel_attention); }});
        add("model.heads", {[](RunConfig& c, std::string_view v) { c.model.heads = parse_index(v); },
                            [](const RunConfig& c) { return fmt(c.model.heads); }});
        add("model.segments", {[](RunConfig& c, std::string_view v) { c.model.segments = parse_index(v); },
                               [](const RunConfig& c) { return fmt(c.model.segments); }});
        add("model.mlp_ratio", {[](RunConfig& c, std::string_view v) { c.model.mlp_ratio = parse_index(v); },
                                [](const RunConfig& c) { return fmt(c.model.mlp_ratio); }});
        add("model.fe_reduction", {[](RunConfig& c, std::string_view v) { c.model.fe_reduction = parse_index(v); },
                                   [](const RunConfig& c) { return fmt(c.model.fe_reduction); }});
        add("model.ca_kernel", {[](RunConfig& c, std::string_view v) { c.model.ca_kernel = parse_index(v); },
                                [](const RunConfig& c) { return fmt(c.model.ca_kernel); }});
        add("model.resolution", {[](RunConfig& c, std::string_view v) { c.model.resolution = parse_extent(v); },
                                 [](const RunConfig& c) { return fmt(c.model.resolution); }});

        add("train.batch_size", {[](RunConfig& c, std::string_view v) { c.train.batch_size = parse_index(v); },
                                 [](const RunConfig& c) { return fmt(c.train.batch_size); }});
        add("train.iterations", {[](RunConfig& c, std::string_view v) { c.train.max_iterations = parse_index(v); },
                                 [](const RunConfig& c) { return fmt(c.train.max_iterations); }});
        add("train.optimizer", {[](RunConfig& c, std::string_view v) {
                                    try {
                                        c.train.optimizer = parse_optimizer(v);
                                    } catch (const ConfigError& e) {
                                        throw BadValue{e.what()};
                                    }
                                },
                                [](const RunConfig& c) { return std::string(to_string(c.train.optimizer)); }});
        add("train.lr", {[](RunConfig& c, std::string_view v) { c.train.initial_lr = parse_double(v); },
                         [](const RunConfig& c) { return fmt(c.train.initial_lr); }});
        add("train.power", {[](RunConfig& c, std::string_view v) { c.train.power = parse_double(v); },
                            [](const RunConfig& c) { return fmt(c.train.power); }});
        add("train.momentum", {[](RunConfig& c, std::string_view v) { c.train.momentum = parse_double(v); },
                               [](const RunConfig& c) { return fmt(c.train.momentum); }});
        add("train.beta1", {[](RunConfig& c, std::string_view v) { c.train.beta1 = parse_double(v); },
                            [](const RunConfig& c) { return fmt(c.train.beta1); }});
        add("train.beta2", {[](RunConfig& c, std::string_view v) { c.train.beta2 = parse_double(v); },
                            [](const RunConfig& c) { return fmt(c.train.beta2); }});
        add("train.eps", {[](RunConfig& c, std::string_view v) { c.train.eps = parse_double(v); },
                          [](const RunConfig& c) { return fmt(c.train.eps); }});
        add("train.weight_decay", {[](RunConfig& c, std::string_view v) { c.train.weight_decay = parse_double(v); },
                                   [](const RunConfig& c) { return fmt(c.train.weight_decay); }});
        add("train.class_weights", {[](RunConfig& c, std::string_view v) {
                                        c.train.class_weights.clear();
                                        if (v == "uniform") return;
                                        for (auto p : split_list(v)) c.train.class_weights.push_back(parse_double(p));
                                    },
                                    [](const RunConfig& c) {
                                        return c.train.class_weights.empty() ? std::string("uniform")
                                                                             : join(c.train.class_weights);
                                    }});
        add("train.seed", {[](RunConfig& c, std::string_view v) { c.train.seed = parse_integer<std::uint64_t>(v); },
                           [](const RunConfig& c) { return std::to_string(c.train.seed); }});
        add("train.log_every", {[](RunConfig& c, std::string_view v) { c.train.log_every = parse_index(v); },
                                [](const RunConfig& c) { return fmt(c.train.log_every); }});
        add("train.flip", {[](RunConfig& c, std::string_view v) { c.train.flip = parse_bool(v); },
                           [](const RunConfig& c) { return fmt(c.train.flip); }});
        add("train.crop", {[](RunConfig& c, std::string_view v) { c.train.crop = parse_extent(v); },
                           [](const RunConfig& c) { return fmt(c.train.crop); }});

        add("data.kind", {[](RunConfig& c, std::string_view v) {
                              if (v == "synthetic") {
                                  c.data.kind = DataKind::Synthetic;
                              } else if (v == "camvid") {
                                  c.data.kind = DataKind::Camvid;
                              } else {
                                  throw BadValue{"expected synthetic or camvid, got '" + std::string(v) + "'"};
                              }
                          },
                          [](const RunConfig& c) {
                              return std::string(c.data.kind == DataKind::Synthetic ? "synthetic" : "camvid");
                          }});
        add("data.root", {[](RunConfig& c, std::string_view v) { c.data.root = std::string(v); },
                          [](const RunConfig& c) { return c.data.root.string(); }});
        add("data.ignore_index", {[](RunConfig& c, std::string_view v) {
                                      c.data.ignore_index = parse_integer<std::int32_t>(v);
                                  },
                                  [](const RunConfig& c) { return std::to_string(c.data.ignore_index); }});
        add("data.class_names", {[](RunConfig& c, std::string_view v) {
                                     c.data.class_names.clear();
                                     for (auto p : split_list(v)) c.data.class_names.emplace_back(p);
                                 },
                                 [](const RunConfig& c) { return join(c.data.class_names); }});
        add("data.mean", {[](RunConfig& c, std::string_view v) { c.data.norm.mean = parse_double_triple(v); },
                          [](const RunConfig& c) { return join(c.data.norm.mean); }});
        add("data.std", {[](RunConfig& c, std::string_view v) { c.data.norm.stddev = parse_double_triple(v); },
                         [](const RunConfig& c) { return join(c.data.norm.stddev); }});
        add("data.synth_seed", {[](RunConfig& c, std::string_view v) { c.data.synth_seed = parse_integer<std::uint64_t>(v); },
                                [](const RunConfig& c) { return std::to_string(c.data.synth_seed); }});
        add("data.synth_size", {[](RunConfig& c, std::string_view v) { c.data.synth_size = parse_extent(v); },
                                [](const RunConfig& c) { return fmt(c.data.synth_size); }});
        add("data.synth_density", {[](RunConfig& c, std::string_view v) { c.data.synth_density = parse_double(v); },
                                   [](const RunConfig& c) { return fmt(c.data.synth_density); }});
        add("data.synth_noise", {[](RunConfig& c, std::string_view v) { c.data.synth_noise = parse_double(v); },
                                 [](const RunConfig& c) { return fmt(c.data.synth_noise); }});
        add("data.train_count", {[](RunConfig& c, std::string_view v) { c.data.train_count = parse_index(v); },
                                 [](const RunConfig& c) { return fmt(c.data.train_count); }});
        add("data.val_count", {[](RunConfig& c, std::string_view v) { c.data.val_count = parse_index(v); },
                               [](const RunConfig& c) { return fmt(c.data.val_count); }});
        add("data.test_count", {[](RunConfig& c, std::string_view v) { c.data.test_count = parse_index(v); },
                                [](const RunConfig& c) { return fmt(c.data.test_count); }});

        add("output.checkpoint", {[](RunConfig& c, std::string_view v) { c.output.checkpoint = std::string(v); },
                                  [](const RunConfig& c) { return c.output.checkpoint.string(); }});
        add("output.metrics", {[](RunConfig& c, std::string_view v) { c.output.metrics = std::string(v); },
                               [](const RunConfig& c) { return c.output.metrics.string(); }});
        return t;
    }();
    return table;
}

const Key* find_key(std::string_view name) {
    for (const auto& [k, v] : key_table())
        if (k == name) return &v;
    return nullptr;
}

struct Assignment {
    std::string_view key, value;
    std::size_t line = 0, key_col = 0, value_col = 0;
};

std::string where(std::string_view source, std::size_t line, std::size_t col) {
    return std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(col) + ": ";
}

// Splits one line into key and value; returns false for blank/comment lines.
bool split_line(std::string_view raw, std::size_t line_no, std::string_view source, Assignment& out) {
    const auto hash = raw.find('#');
    const std::string_view line = hash == std::string_view::npos ? raw : raw.substr(0, hash);
    if (trim(line).empty()) return false;
    const auto eq = line.find('=');
    const auto key_start = line.find_first_not_of(" \t");
    if (eq == std::string_view::npos) {
        throw ConfigError(where(source, line_no, key_start + 1) + "expected 'section.key = value'");
    }
    out.line = line_no;
    out.key = trim(line.substr(0, eq));
    out.key_col = key_start + 1;
    const std::string_view rest = line.substr(eq + 1);
    out.value = trim(rest);
    const auto vs = rest.find_first_not_of(" \t");
    out.value_col = eq + 2 + (vs == std::string_view::npos ? 0 : vs);
    if (out.key.empty()) throw ConfigError(where(source, line_no, eq + 1) + "missing key before '='");
    return true;
}

void apply(RunConfig& cfg, const Assignment& a, std::string_view source) {
    const Key* key = find_key(a.key);
    if (key == nullptr) {
        throw ConfigError(where(source, a.line, a.key_col) + "unknown key '" + std::string(a.key) + "'");
    }
    try {
        key->set(cfg, a.value);
    } catch (const BadValue& e) {
        throw ConfigError(where(source, a.line, a.value_col) + std::string(a.key) + ": " + e.message);
    } catch (const ConfigError& e) {
        throw ConfigError(where(source, a.line, a.value_col) + std::string(a.key) + ": " + e.what());
    }
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : key_table()) k.push_back(name);
        return k;
    }();
    return keys;
}

RunConfig RunConfig::parse(std::string_view text, std::string_view source) {
    std::vector<Assignment> lines;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        ++line_no;
        const auto end = text.find('\n', pos);
        const auto raw = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        Assignment a;
        if (split_line(raw, line_no, source, a)) lines.push_back(a);
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    RunConfig cfg;
    std::map<std::string_view, std::size_t> seen;
    for (const auto& a : lines) {
        if (const auto [it, fresh] = seen.emplace(a.key, a.line); !fresh) {
            throw ConfigError(where(source, a.line, a.key_col) + "duplicate key '" + std::string(a.key) +
                              "' (first set on line " + std::to_string(it->second) + ")");
        }
    }
    for (const auto& a : lines)
        if (a.key == "model.preset") apply(cfg, a, source);
    for (const auto& a : lines)
        if (a.key != "model.preset") apply(cfg, a, source);
    try {
        cfg.finalize();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(source) + ": " + e.what());
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

void RunConfig::set(std::string_view assignment, std::string_view source) {
    Assignment a;
    if (!split_line(assignment, 1, source, a)) throw ConfigError(std::string(source) + ": empty assignment");
    apply(*this, a, source);
    finalize();
}

std::string RunConfig::dump() const {
    std::string out;
    std::string section;
    for (const auto& [name, key] : key_table()) {
        const std::string s = name.substr(0, name.find('.'));
        if (s != section) {
            if (!section.empty()) out += "\n";
            section = s;
        }
        out += name + " = " + key.get(*this) + "\n";
    }
    return out;
}

void RunConfig::finalize() {
    model.validate();
    train.ignore_index = data.ignore_index;
    train.validate();
    if (data.ignore_index >= 0 && data.ignore_index < model.num_classes) {
        throw ConfigError("data.ignore_index " + std::to_string(data.ignore_index) + " collides with a class id");
    }
    if (!train.class_weights.empty() && static_cast<Index>(train.class_weights.size()) != model.num_classes) {
        throw ConfigError("train.class_weights has " + std::to_string(train.class_weights.size()) + " entries, model has " +
                          std::to_string(model.num_classes) + " classes");
    }
    if (!data.class_names.empty() && static_cast<Index>(data.class_names.size()) != model.num_classes) {
        throw ConfigError("data.class_names has " + std::to_string(data.class_names.size()) + " entries, model has " +
                          std::to_string(model.num_classes) + " classes");
    }
    if (data.kind == DataKind::Synthetic) synthetic_spec(0).validate();
    if (data.train_count < 0 || data.val_count < 0 || data.test_count < 0) {
        throw ConfigError("data split counts must be non-negative");
    }
}

SyntheticSpec RunConfig::synthetic_spec(std::uint64_t stream_offset) const {
    SyntheticSpec s;
    s.seed = data.synth_seed * 1000003ULL + stream_offset;
    s.height = data.synth_size.h;
    s.width = data.synth_size.w;
    s.num_classes = model.num_classes;
    s.density = data.synth_density;
    s.noise = data.synth_noise;
    s.ignore_index = data.ignore_index;
    return s;
}

}  // namespace letnet
