#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "letnet/checkpoint.hpp"
#include "letnet/config.hpp"
#include "letnet/error.hpp"
#include "letnet/gradcheck.hpp"
#include "letnet/pipeline.hpp"

using namespace letnet;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3, kIo = 4 };

struct Common {
    std::string config;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "config file (section.key = value)");
    cmd->add_option("--set", c.sets, "override one key, e.g. --set train.iterations=100");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
    for (const auto& s : c.sets) cfg.set(s);
    return cfg;
}

Extent2 parse_resolution(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument("");
        std::size_t a = 0, b = 0;
        const Index h = std::stoll(text.substr(0, x), &a);
        const Index w = std::stoll(text.substr(x + 1), &b);
        if (a != x || b != text.size() - x - 1) throw std::invalid_argument("");
        return {h, w};
    } catch (const std::logic_error&) {
        throw ConfigError("--resolution expects HxW, got '" + text + "'");
    }
}

std::string group(std::uint64_t v) {
    std::string s = std::to_string(v), out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != 0 && (s.size() - i) % 3 == 0) out += ',';
        out += s[i];
    }
    return out;
}

int run_analyze(const Common& common, const std::string& preset, const std::string& resolution,
                const std::string& csv) {
    RunConfig cfg = resolve(common);
    if (!preset.empty()) cfg.set("model.preset=" + preset);
    const Extent2 res = resolution.empty() ? cfg.model.resolution : parse_resolution(resolution);
    const Model model = Model::build(cfg.model, cfg.train.seed);
    const AccountingReport r = count_macs(model, res);
    std::printf("%-36s %-9s %12s %16s\n", "layer", "kind", "params", "MACs");
    for (const auto& row : r.rows)
        std::printf("%-36s %-9s %12s %16s\n", row.name.c_str(), row.kind.c_str(), group(row.params).c_str(),
                    group(row.macs).c_str());
    std::printf("\nresolution   %lldx%lld\n", static_cast<long long>(res.h), static_cast<long long>(res.w));
    std::printf("parameters   %s (%.3f M)\n", group(r.total_params()).c_str(), r.total_params() / 1e6);
    std::printf("MACs         %s (%.3f G)\n", group(r.total_macs()).c_str(), r.total_macs() / 1e9);
    std::printf("FLOPs        %s (%.3f G, 2 x MACs)\n", group(r.total_flops()).c_str(), r.total_flops() / 1e9);
    if (!csv.empty()) {
        std::ofstream out(csv);
        if (!out) throw IoError("cannot open " + csv);
        out << "layer,kind,params,macs\n";
        for (const auto& row : r.rows) out << row.name << ',' << row.kind << ',' << row.params << ',' << row.macs << '\n';
        out << "total,," << r.total_params() << ',' << r.total_macs() << '\n';
        if (!out) throw IoError("failed writing " + csv);
    }
    return kOk;
}

int run_train(const Common& common, const std::string& checkpoint, const std::string& metrics) {
    RunConfig cfg = resolve(common);
    if (!checkpoint.empty()) cfg.output.checkpoint = checkpoint;
    if (!metrics.empty()) cfg.output.metrics = metrics;
    const SplitSet splits = make_splits(cfg);
    Model model = Model::build(cfg.model, cfg.train.seed);
    if (cfg.train.max_iterations > 0) {
        if (splits.train->empty()) throw ConfigError("training split is empty");
        MetricsCsv csv(cfg.output.metrics, 1);
        TrainSinks sinks;
        sinks.csv = &csv;
        const auto t0 = std::chrono::steady_clock::now();
        sinks.on_record = [&](const TrainRecord& r) {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("iter %6lld  lr %.6f  loss %.5f  %.1fs\n", static_cast<long long>(r.iteration), r.lr, r.loss, s);
            std::fflush(stdout);
        };
        train(model, *splits.train, cfg.train, cfg.data.norm, sinks);
    }
    save_checkpoint(model, cfg.output.checkpoint);
    std::printf("checkpoint   %s\n", cfg.output.checkpoint.string().c_str());
    if (splits.val && !splits.val->empty() && splits.val->labeled()) {
        const auto report = iou(evaluate(model, *splits.val, cfg.data.norm), cfg.data.class_names);
        std::printf("val mIoU     %.4f\n", report.mean);
    }
    return kOk;
}

Model load_for(const RunConfig& cfg, const std::string& checkpoint) {
    Model model = Model::build(cfg.model, 0);
    load_weights(model, checkpoint);
    return model;
}

int run_infer(const Common& common, const std::string& checkpoint, const std::string& input,
              const std::string& output, std::string labels_path) {
    const RunConfig cfg = resolve(common);
    Model model = load_for(cfg, checkpoint);
    const Tensor image = read_image(input);
    cfg.model.validate_input(image.dim(1), image.dim(2));
    const LabelMap labels = infer_labels(model, image, cfg.data.norm, cfg.data.ignore_index);
    if (labels_path.empty()) labels_path = std::filesystem::path(output).replace_extension(".pgm").string();
    write_image(colorize(labels, Palette::standard(cfg.model.num_classes)), output);
    write_labels(labels, labels_path);
    std::printf("segmentation %s\nlabels       %s\n", output.c_str(), labels_path.c_str());
    return kOk;
}

int run_eval(const Common& common, const std::string& checkpoint, const std::string& split, const std::string& csv) {
    const RunConfig cfg = resolve(common);
    Model model = load_for(cfg, checkpoint);
    const SplitSet splits = make_splits(cfg);
    const Dataset& data = splits.split(split);
    if (data.empty()) throw ConfigError("split '" + split + "' is empty");
    if (!data.labeled()) throw ConfigError("split '" + split + "' has no labels");
    const IoUReport report = iou(evaluate(model, data, cfg.data.norm), cfg.data.class_names);
    std::fputs(to_text_table(report).c_str(), stdout);
    if (!csv.empty()) {
        const std::string text = to_csv(report);
        write_file(csv, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    } else {
        std::fputs(to_csv(report).c_str(), stdout);
    }
    return kOk;
}

int run_gradcheck(const std::string& scope, std::uint64_t seed, bool corrupt) {
    GradCheckOptions opts;
    opts.seed = seed;
    opts.corrupt = corrupt;
    std::vector<GradCheckResult> results;
    if (scope == "primitive" || scope == "all") {
        for (auto& r : gradcheck_primitives(opts)) results.push_back(r);
    }
    if (scope == "block" || scope == "all") {
        for (auto& r : gradcheck_blocks(opts)) results.push_back(r);
    }
    if (scope == "model" || scope == "all") results.push_back(gradcheck_model(opts));
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-26s %-4s worst relative error %.3e  (%s, %lld elements)\n", r.name.c_str(),
                    r.passed ? "pass" : "FAIL", r.worst_error, r.worst_tensor.c_str(), static_cast<long long>(r.checked));
        ok = ok && r.passed;
    }
    std::printf("%s\n", ok ? "all gradient checks passed" : "gradient check FAILED");
    return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lightweight encoder-transformer segmentation network"};
    app.require_subcommand(1);

    Common common;
    std::string preset, resolution, csv, checkpoint, metrics, input, output, labels, split = "val", scope = "all";
    std::uint64_t seed = 1;
    bool corrupt = false;

    auto* analyze = app.add_subcommand("analyze", "per-layer parameters and MACs");
    add_common(analyze, common);
    analyze->add_option("--preset", preset, "model preset (baseline, a1..c3, letnet, tiny)");
    analyze->add_option("--resolution", resolution, "input HxW (default model.resolution)");
    analyze->add_option("--csv", csv, "write per-layer rows as CSV");

    auto* train_cmd = app.add_subcommand("train", "train and write a checkpoint plus metrics CSV");
    add_common(train_cmd, common);
    train_cmd->add_option("--checkpoint", checkpoint, "checkpoint path (default output.checkpoint)");
    train_cmd->add_option("--metrics", metrics, "metrics CSV path (default output.metrics)");

    auto* infer = app.add_subcommand("infer", "segment one P6 image");
    add_common(infer, common);
    infer->add_option("--checkpoint", checkpoint)->required();
    infer->add_option("--input", input, "P6 image")->required();
    infer->add_option("--output", output, "colorized P6 segmentation")->required();
    infer->add_option("--labels", labels, "P5 label map (default: output with .pgm)");

    auto* eval = app.add_subcommand("eval", "per-class and mean IoU on a split");
    add_common(eval, common);
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--split", split, "train, val or test");
    eval->add_option("--csv", csv, "write class,iou CSV here instead of stdout");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    grad->add_option("--scope", scope, "primitive, block, model or all")
        ->check(CLI::IsMember({"primitive", "block", "model", "all"}));
    grad->add_option("--seed", seed);
    grad->add_flag("--corrupt", corrupt)->group("");  // negative-control hook

    auto* dump = app.add_subcommand("dump-config", "print the resolved config in canonical form");
    add_common(dump, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*analyze) return run_analyze(common, preset, resolution, csv);
        if (*train_cmd) return run_train(common, checkpoint, metrics);
        if (*infer) return run_infer(common, checkpoint, input, output, labels);
        if (*eval) return run_eval(common, checkpoint, split, csv);
        if (*grad) return run_gradcheck(scope, seed, corrupt);
        if (*dump) {
            std::fputs(resolve(common).dump().c_str(), stdout);
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kNumeric;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kIo;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kIo;
    }
    return kUsage;
}
