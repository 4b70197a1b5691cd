#include "letnet/pipeline.hpp"

#include "letnet/error.hpp"
#include "letnet/ops.hpp"

namespace letnet {

SplitSet make_splits(const RunConfig& cfg) {
    if (cfg.data.kind == DataKind::Camvid) {
        if (cfg.data.root.empty()) throw ConfigError("data.root is required for camvid data");
        if (!std::filesystem::is_directory(cfg.data.root)) {
            throw ConfigError("data.root '" + cfg.data.root.string() + "' does not exist");
        }
        return load_camvid_dir(cfg.data.root, cfg.model.num_classes, cfg.data.ignore_index);
    }
    SplitSet s;
    s.train = std::make_shared<MemoryDataset>(synth_dataset(cfg.synthetic_spec(0), static_cast<std::size_t>(cfg.data.train_count)));
    s.val = std::make_shared<MemoryDataset>(synth_dataset(cfg.synthetic_spec(1), static_cast<std::size_t>(cfg.data.val_count)));
    s.test = std::make_shared<MemoryDataset>(synth_dataset(cfg.synthetic_spec(2), static_cast<std::size_t>(cfg.data.test_count)));
    return s;
}

ConfusionMatrix evaluate(Model& model, const Dataset& data, const Normalization& norm, Index batch) {
    if (data.empty()) throw ConfigError("evaluation split is empty");
    if (!data.labeled()) throw ConfigError("evaluation split has no labels");
    const Index K = model.config().num_classes;
    ConfusionMatrix cm(K);
    NoGradGuard guard;
    TrainConfig plain;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch)) {
        std::vector<Sample> samples;
        for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch)); ++i)
            samples.push_back(data.sample(i));
        const Batch b = make_batch(samples, norm, plain, nullptr);
        const auto preds = predict_labels(model.forward(b.images, NormMode::Eval));
        for (std::size_t i = 0; i < samples.size(); ++i) {
            LabelMap p = preds[i];
            p.ignore_index = samples[i].labels->ignore_index;
            accumulate(cm, p, *samples[i].labels);
        }
    }
    return cm;
}

LabelMap infer_labels(Model& model, const Tensor& image, const Normalization& norm, std::int32_t ignore_index) {
    if (image.rank() != 3 || image.dim(0) != 3) throw ConfigError("expected a 3 x H x W image");
    NoGradGuard guard;
    const Tensor batch = reshape(norm.apply(image), {1, 3, image.dim(1), image.dim(2)});
    return predict_labels(model.forward(batch, NormMode::Eval), ignore_index).front();
}

}  // namespace letnet
