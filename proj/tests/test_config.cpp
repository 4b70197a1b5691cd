#include <doctest.h>

#include <fstream>
#include <set>

#include "letnet/config.hpp"
#include "letnet/pipeline.hpp"
#include "oracles.hpp"

using namespace letnet;

namespace {

std::string config_error(std::string_view text) {
    try {
        RunConfig::parse(text, "run.cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "<no ConfigError>";
}

}  // namespace

TEST_CASE("defaults describe the full network") {
    const RunConfig c = RunConfig::parse("");
    CHECK(c.model == ModelConfig::preset("letnet"));
    CHECK(c.train.batch_size == 8);
    CHECK(c.train.initial_lr == 4.5e-2);
    CHECK(c.train.optimizer == OptimizerKind::Sgd);
    CHECK(c.data.kind == DataKind::Synthetic);
    CHECK(c.data.ignore_index == 255);
}

TEST_CASE("parse values of every kind") {
    const RunConfig c = RunConfig::parse(R"(
# comment line
model.preset = tiny
model.num_classes = 4   # trailing comment
model.skips = plain, off, fe
model.dilations = 1,1,2,4
train.optimizer = adam
train.lr = 1e-3
train.class_weights = 1, 2, 0.5, 1
train.flip = true
train.crop = 32x48
data.mean = 0.4, 0.5, 0.6
data.class_names = a,b,c,d
data.synth_size = 64x96
output.metrics = out/m.csv
)");
    CHECK(c.preset == "tiny");
    CHECK(c.model.num_classes == 4);
    CHECK(c.model.channels == ModelConfig::preset("tiny").channels);
    CHECK(c.model.skips == std::array<SkipMode, 3>{SkipMode::Plain, SkipMode::Off, SkipMode::Enhanced});
    CHECK(c.model.dilations == std::vector<Index>{1, 1, 2, 4});
    CHECK(c.train.optimizer == OptimizerKind::Adam);
    CHECK(c.train.initial_lr == 1e-3);
    CHECK(c.train.class_weights == std::vector<double>{1, 2, 0.5, 1});
    CHECK(c.train.flip);
    CHECK(c.train.crop == Extent2{32, 48});
    CHECK(c.data.norm.mean == std::array<double, 3>{0.4, 0.5, 0.6});
    CHECK(c.data.class_names == std::vector<std::string>{"a", "b", "c", "d"});
    CHECK(c.data.synth_size == Extent2{64, 96});
    CHECK(c.output.metrics == std::filesystem::path("out/m.csv"));
}

TEST_CASE("the preset applies before other model keys wherever it appears") {
    const RunConfig c = RunConfig::parse("model.num_classes = 6\nmodel.preset = tiny\n");
    CHECK(c.model.num_classes == 6);
    CHECK(c.model.channels == ModelConfig::preset("tiny").channels);
}

TEST_CASE("errors report source, line and column") {
    CHECK(config_error("model.heads = 2\n  bogus.key = 1\n").rfind("run.cfg:2:3: unknown key 'bogus.key'", 0) == 0);
    CHECK(config_error("train.lr =   fast\n").rfind("run.cfg:1:14: train.lr: expected a number", 0) == 0);
    CHECK(config_error("\n\njust words\n").rfind("run.cfg:3:1: expected", 0) == 0);
    CHECK(config_error(" = 3\n").rfind("run.cfg:1:2: missing key", 0) == 0);
    CHECK(config_error("train.crop = 32\n").find("expected HxW") != std::string::npos);
    CHECK(config_error("train.optimizer = rmsprop\n").find("rmsprop") != std::string::npos);
    CHECK(config_error("model.skips = plain, off\n").find("three skip modes") != std::string::npos);
    CHECK(config_error("model.transformer = maybe\n").find("true or false") != std::string::npos);
}

TEST_CASE("duplicate keys name both lines") {
    const std::string msg = config_error("train.lr = 0.1\ntrain.seed = 3\ntrain.lr = 0.2\n");
    CHECK(msg.rfind("run.cfg:3:1: duplicate key 'train.lr'", 0) == 0);
    CHECK(msg.find("line 1") != std::string::npos);
}

TEST_CASE("cross-section checks") {
    CHECK(config_error("model.preset = tiny\ndata.ignore_index = 2\n").find("collides") != std::string::npos);
    CHECK(config_error("model.preset = tiny\ntrain.class_weights = 1,1\n").find("class_weights") !=
          std::string::npos);
    CHECK(config_error("model.preset = tiny\ndata.class_names = a\n").find("class_names") != std::string::npos);
    CHECK(config_error("train.batch_size = 0\n").find("batch_size") != std::string::npos);
    CHECK(config_error("model.heads = 3\n").rfind("run.cfg:", 0) == 0);
    const RunConfig c = RunConfig::parse("model.preset = tiny\ndata.ignore_index = 9\n");
    CHECK(c.train.ignore_index == 9);
}

TEST_CASE("dump lists every key and parses back to the same config") {
    RunConfig c = RunConfig::parse(R"(
model.preset = b2
model.dilations = 1,1,1,1,2,4,8,16,1,2,4,8,16,1,2,4
train.optimizer = adam
train.weight_decay = 0.000123456789
train.class_weights = 0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1,1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9
data.kind = camvid
data.root = /data/camvid
data.std = 0.229, 0.224, 0.225
)");
    const std::string text = c.dump();
    CHECK(RunConfig::parse(text) == c);
    std::set<std::string> dumped;
    for (const auto& key : config_keys()) {
        const bool listed = text.find("\n" + key + " = ") != std::string::npos || text.rfind(key + " = ", 0) == 0;
        CHECK_MESSAGE(listed, key);
        dumped.insert(key);
    }
    CHECK(dumped.size() == config_keys().size());
    CHECK(RunConfig::parse(RunConfig().dump()) == RunConfig());
}

TEST_CASE("command-line style overrides") {
    RunConfig c = RunConfig::parse("model.preset = tiny\n");
    c.set("train.iterations=50");
    c.set("  data.synth_density = 1.5 ");
    CHECK(c.train.max_iterations == 50);
    CHECK(c.data.synth_density == 1.5);
    try {
        c.set("train.momentum=2");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("momentum") != std::string::npos);
    }
    CHECK_THROWS_AS(c.set("nokey"), ConfigError);
    CHECK_THROWS_AS(c.set(""), ConfigError);
}

TEST_CASE("load reads a file and names it in errors") {
    testutil::TempDir dir("cfg");
    std::ofstream(dir / "a.cfg") << "model.preset = tiny\ntrain.iterations = 3\n";
    CHECK(RunConfig::load(dir / "a.cfg").train.max_iterations == 3);
    std::ofstream(dir / "b.cfg") << "train.iterations = -\n";
    try {
        RunConfig::load(dir / "b.cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("b.cfg:1:") != std::string::npos);
    }
    CHECK_THROWS_AS(RunConfig::load(dir / "missing.cfg"), IoError);
}

TEST_CASE("synthetic splits use separate streams") {
    RunConfig c = RunConfig::parse("model.preset = tiny\ndata.train_count = 3\ndata.val_count = 2\ndata.test_count = 0\n");
    const SplitSet s = make_splits(c);
    CHECK(s.split("train").size() == 3);
    CHECK(s.split("val").size() == 2);
    CHECK(s.split("test").empty());
    CHECK(s.split("train").sample(0).image.storage() != s.split("val").sample(0).image.storage());
    CHECK(s.split("train").sample(0).image.storage() == synth_sample(c.synthetic_spec(0), 0).image.storage());
    CHECK(c.synthetic_spec(1).num_classes == 3);

    c.set("data.kind = camvid");
    c.set("data.root = /nonexistent/camvid");
    CHECK_THROWS_AS(make_splits(c), ConfigError);
}
