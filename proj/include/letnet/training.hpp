#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "letnet/data_io.hpp"
#include "letnet/model.hpp"
#include "letnet/rng.hpp"

namespace letnet {

// lr = initial * (1 - iteration / max_iteration)^power. Throws UsageError
// outside 0 <= iteration <= max_iteration.
double poly_lr(double initial, std::int64_t iteration, std::int64_t max_iteration, double power = 0.9);

enum class OptimizerKind { Sgd, Adam };
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct TrainConfig {
    Index batch_size = 8;
    std::int64_t max_iterations = 2000;
    OptimizerKind optimizer = OptimizerKind::Sgd;
    double initial_lr = 4.5e-2;
    double power = 0.9;
    double momentum = 0.9;  // SGD
    double beta1 = 0.9;     // Adam
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    std::vector<double> class_weights;  // empty = uniform
    std::int32_t ignore_index = 255;
    std::uint64_t seed = 1;
    std::int64_t log_every = 10;
    bool flip = false;  // random horizontal flips
    Extent2 crop{0, 0};  // random crops of this size; 0x0 disables

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Per-parameter optimizer memory: SGD velocity in `first`, Adam moments in
// `first` and `second`.
struct OptimizerState {
    std::vector<std::vector<float>> first;
    std::vector<std::vector<float>> second;
    std::int64_t steps = 0;
};

// v <- momentum*v + (g + wd*p); p <- p - lr*v. Gradients are read from each
// tensor's grad buffer (zeros when absent).
void sgd_step(const std::vector<Tensor>& params, OptimizerState& state, double lr, double momentum,
              double weight_decay);
// Bias-corrected Adam with the decay term added to the gradient.
void adam_step(const std::vector<Tensor>& params, OptimizerState& state, double lr, double beta1, double beta2,
               double eps, double weight_decay);

struct TrainRecord {
    std::int64_t iteration = 0;
    double lr = 0;
    double loss = 0;
};

struct TrainState {
    std::int64_t iteration = 0;
    OptimizerState optimizer;
    Rng rng{0};
    double last_loss = 0;
    double smoothed_loss = 0;  // exponential moving average, factor 0.9
    std::vector<TrainRecord> history;  // every iteration
};

// Appends `iteration,lr,loss` lines; the header is written on open and the
// stream is flushed every `flush_every` records and on destruction.
class MetricsCsv {
   public:
    MetricsCsv(const std::filesystem::path& path, std::int64_t flush_every = 10);
    void append(const TrainRecord& record);
    void flush();

   private:
    std::ofstream out_;
    std::int64_t flush_every_;
    std::int64_t pending_ = 0;
};

struct TrainSinks {
    MetricsCsv* csv = nullptr;                           // every log_every iterations
    std::function<void(const TrainRecord&)> on_record;   // every log_every iterations
};

// Stacks samples into an N x 3 x H x W batch and flat labels, applying the
// optional flip/crop augmentation with the given generator.
struct Batch {
    Tensor images;
    std::vector<std::int32_t> labels;
};
Batch make_batch(const std::vector<Sample>& samples, const Normalization& norm, const TrainConfig& cfg, Rng* augment);

// Runs cfg.max_iterations steps of sample, forward, loss, backward, update
// with the poly schedule. Sample order is drawn from a generator seeded by
// cfg.seed: each epoch is a fresh permutation of the dataset.
TrainState train(Model& model, const Dataset& data, const TrainConfig& cfg, const Normalization& norm = {},
                 const TrainSinks& sinks = {});

}  // namespace letnet
