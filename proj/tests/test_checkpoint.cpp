#include <doctest.h>

#include <cstring>
#include <random>
#include <set>

#include "letnet/checkpoint.hpp"
#include "letnet/data_io.hpp"
#include "oracles.hpp"

using namespace letnet;

namespace {

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_bitwise(const std::uint8_t* p, std::size_t n) {
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < n; ++i) {
        c ^= p[i];
        for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
    }
    return ~c;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

Tensor random_images(std::uint64_t seed, Index n, Index h, Index w) {
    std::mt19937_64 gen(seed);
    return testutil::to_tensor(testutil::random_values(gen, static_cast<std::size_t>(n * 3 * h * w), 0, 1), {n, 3, h, w});
}

}  // namespace

TEST_CASE("encoding matches a hand-built byte layout") {
    const std::vector<CheckpointEntry> entries{{"ab", {2}, {1.0f, -2.5f}}, {"s", {}, {0.5f}}};
    std::vector<std::uint8_t> expect{'L', 'E', 'T', 'N'};
    put_u32(expect, 1);
    put_u32(expect, 2);
    const std::size_t body = expect.size();
    expect.insert(expect.end(), {2, 0, 'a', 'b', 1});
    put_u32(expect, 2);
    for (float f : {1.0f, -2.5f}) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(expect, bits);
    }
    expect.insert(expect.end(), {1, 0, 's', 0});
    std::uint32_t half;
    const float h = 0.5f;
    std::memcpy(&half, &h, 4);
    put_u32(expect, half);
    put_u32(expect, crc32_bitwise(expect.data() + body, expect.size() - body));

    CHECK(encode_checkpoint(entries) == expect);
    const auto back = decode_checkpoint(expect);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "ab");
    CHECK(back[0].shape == Shape{2});
    CHECK(back[0].data == std::vector<float>{1.0f, -2.5f});
    CHECK(back[1].shape.empty());
}

TEST_CASE("decode errors") {
    const Model m = Model::build(ModelConfig::preset("tiny"), 1);
    const auto bytes = encode_checkpoint(checkpoint_entries(m));

    auto expect_io = [](std::vector<std::uint8_t> b, const char* fragment) {
        try {
            decode_checkpoint(b, "x.ckpt");
            FAIL("expected IoError");
        } catch (const IoError& e) {
            const std::string msg = e.what();
            CHECK_MESSAGE(msg.find(fragment) != std::string::npos, msg);
            CHECK(msg.find("x.ckpt") != std::string::npos);
        }
    };
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    expect_io(bad_magic, "magic");
    auto bad_version = bytes;
    bad_version[4] = 9;
    expect_io(bad_version, "version");
    expect_io(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)),
              "truncated");
    expect_io(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 6), "truncated");
    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    expect_io(flipped, "");
    auto trailing = bytes;
    trailing.push_back(0);
    expect_io(trailing, "");
}

TEST_CASE("decoding arbitrary bytes never crashes") {
    std::mt19937_64 gen(12);
    const auto good = encode_checkpoint({{"w", {3}, {1, 2, 3}}});
    for (int i = 0; i < 2000; ++i) {
        std::vector<std::uint8_t> b = good;
        const int edits = 1 + static_cast<int>(gen() % 4);
        for (int e = 0; e < edits; ++e) b[gen() % b.size()] = static_cast<std::uint8_t>(gen());
        if (gen() % 3 == 0) b.resize(gen() % (b.size() + 1));
        try {
            decode_checkpoint(b);
        } catch (const IoError&) {
        }
    }
    CHECK(true);
}

TEST_CASE("save, load and forward round trip is bitwise") {
    testutil::TempDir dir("ckpt");
    Model m = Model::build(ModelConfig::preset("tiny"), 3);
    const Tensor x = random_images(4, 2, 32, 32);
    m.forward(x, NormMode::Train);  // moves BN running statistics off their initial values
    const Tensor before = m.forward(x, NormMode::Eval);
    save_checkpoint(m, dir / "m.ckpt");

    Model loaded = load_checkpoint(dir / "m.ckpt");
    CHECK(same_architecture(loaded.config(), m.config()));
    CHECK(loaded.forward(x, NormMode::Eval).storage() == before.storage());

    Model fresh = Model::build(ModelConfig::preset("tiny"), 77);
    load_weights(fresh, dir / "m.ckpt");
    CHECK(fresh.forward(x, NormMode::Eval).storage() == before.storage());

    // saving is deterministic
    save_checkpoint(loaded, dir / "again.ckpt");
    CHECK(read_file(dir / "m.ckpt") == read_file(dir / "again.ckpt"));
}

TEST_CASE("architecture is recorded in the file") {
    ModelConfig cfg = ModelConfig::preset("tiny");
    cfg.skips = {SkipMode::Plain, SkipMode::Off, SkipMode::Enhanced};
    cfg.num_classes = 5;
    const Model m = Model::build(cfg, 1);
    const ModelConfig back = config_from_entries(checkpoint_entries(m));
    CHECK(same_architecture(back, cfg));
    CHECK(back.skips == cfg.skips);
    CHECK(back.num_classes == 5);
}

TEST_CASE("loading a C3 checkpoint into the baseline names the first absent tensor") {
    const Model c3 = Model::build(ModelConfig::preset("c3"), 1);
    Model base = Model::build(ModelConfig::preset("baseline"), 1);
    const auto entries = checkpoint_entries(c3);

    std::set<std::string> base_names;
    for (const auto& p : base.parameters()) base_names.insert(p.name);
    for (const auto& b : base.buffers()) base_names.insert(b.name);
    std::string first_absent;
    for (const auto& e : entries) {
        if (e.name.rfind("config.", 0) == 0) continue;
        if (!base_names.count(e.name)) {
            first_absent = e.name;
            break;
        }
    }
    REQUIRE_FALSE(first_absent.empty());

    const auto weights_before = base.parameters().front().tensor.storage();
    try {
        load_weights(base, entries);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("'" + first_absent + "'") != std::string::npos);
    }
    CHECK(base.parameters().front().tensor.storage() == weights_before);
}

TEST_CASE("baseline checkpoint into C3 names the first model tensor missing from the file") {
    const Model base = Model::build(ModelConfig::preset("baseline"), 1);
    Model c3 = Model::build(ModelConfig::preset("c3"), 1);
    try {
        load_weights(c3, checkpoint_entries(base));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("absent from the checkpoint") != std::string::npos);
    }
}

TEST_CASE("same names but a different head size is a shape mismatch") {
    ModelConfig a = ModelConfig::preset("tiny"), b = a;
    b.num_classes = 4;
    Model mb = Model::build(b, 1);
    try {
        load_weights(mb, checkpoint_entries(Model::build(a, 1)));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("classifier") != std::string::npos);
    }
}

TEST_CASE("missing checkpoint file is an I/O error") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/m.ckpt"), IoError);
}
