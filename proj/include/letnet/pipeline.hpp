#pragma once

#include "letnet/config.hpp"
#include "letnet/evaluation.hpp"

namespace letnet {

// Synthetic splits use stream offsets 0 (train), 1 (val), 2 (test).
// Throws ConfigError when a camvid root does not exist.
SplitSet make_splits(const RunConfig& cfg);

// Eval-mode argmax predictions over a labeled dataset, `batch` samples at a time.
ConfusionMatrix evaluate(Model& model, const Dataset& data, const Normalization& norm, Index batch = 8);

// Eval-mode prediction for one 3 x H x W image.
LabelMap infer_labels(Model& model, const Tensor& image, const Normalization& norm, std::int32_t ignore_index);

}  // namespace letnet
