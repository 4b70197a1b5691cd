#include "letnet/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "letnet/error.hpp"
#include "letnet/ops.hpp"

namespace letnet {

double poly_lr(double initial, std::int64_t iteration, std::int64_t max_iteration, double power) {
    if (iteration < 0 || iteration > max_iteration) {
        throw UsageError("poly_lr: iteration " + std::to_string(iteration) + " outside [0, " +
                         std::to_string(max_iteration) + "]");
    }
    if (iteration == 0) return initial;
    return initial * std::pow(1.0 - static_cast<double>(iteration) / static_cast<double>(max_iteration), power);
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "sgd") return OptimizerKind::Sgd;
    if (text == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + std::string(text) + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (max_iterations < 0) throw ConfigError("train.iterations must be >= 0");
    if (!(initial_lr > 0)) throw ConfigError("train.lr must be > 0");
    if (!(power > 0)) throw ConfigError("train.power must be > 0");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("train.beta1/beta2 must be in [0, 1)");
    if (!(eps > 0)) throw ConfigError("train.eps must be > 0");
    if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
    for (double w : class_weights)
        if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("train.class_weights entries must be finite and >= 0");
    if (log_every < 1) throw ConfigError("train.log_every must be >= 1");
    if ((crop.h == 0) != (crop.w == 0) || crop.h < 0 || crop.w < 0) {
        throw ConfigError("train.crop must be HxW with both positive, or 0x0");
    }
}

namespace {

void ensure_slots(std::vector<std::vector<float>>& slots, const std::vector<Tensor>& params) {
    if (slots.empty()) {
        for (const auto& p : params) slots.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
    }
    if (slots.size() != params.size()) {
        throw ConfigError("optimizer state holds " + std::to_string(slots.size()) + " slots for " +
                          std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (static_cast<Index>(slots[i].size()) != params[i].numel()) {
            throw ConfigError("optimizer slot " + std::to_string(i) + " does not match parameter shape " +
                              shape_str(params[i].shape()));
        }
    }
}

}  // namespace

void sgd_step(const std::vector<Tensor>& params, OptimizerState& state, double lr, double momentum,
              double weight_decay) {
    ensure_slots(state.first, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto w = p.data();
        const auto g = p.grad();
        auto& v = state.first[i];
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double d = static_cast<double>(g[j]) + weight_decay * static_cast<double>(w[j]);
            const double vj = momentum * static_cast<double>(v[j]) + d;
            v[j] = static_cast<float>(vj);
            w[j] = static_cast<float>(static_cast<double>(w[j]) - lr * vj);
        }
    }
    ++state.steps;
}

void adam_step(const std::vector<Tensor>& params, OptimizerState& state, double lr, double beta1, double beta2,
               double eps, double weight_decay) {
    ensure_slots(state.first, params);
    ensure_slots(state.second, params);
    ++state.steps;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.steps));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        auto w = p.data();
        const auto g = p.grad();
        auto& m = state.first[i];
        auto& v = state.second[i];
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double d = static_cast<double>(g[j]) + weight_decay * static_cast<double>(w[j]);
            const double mj = beta1 * static_cast<double>(m[j]) + (1.0 - beta1) * d;
            const double vj = beta2 * static_cast<double>(v[j]) + (1.0 - beta2) * d * d;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double step = (mj / c1) / (std::sqrt(vj / c2) + eps);
            w[j] = static_cast<float>(static_cast<double>(w[j]) - lr * step);
        }
    }
}

MetricsCsv::MetricsCsv(const std::filesystem::path& path, std::int64_t flush_every)
    : out_(path, std::ios::trunc), flush_every_(std::max<std::int64_t>(1, flush_every)) {
    if (!out_) throw IoError("cannot open metrics file " + path.string());
    out_ << "iteration,lr,loss\n";
    out_.flush();
}

void MetricsCsv::append(const TrainRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g\n", static_cast<long long>(r.iteration), r.lr, r.loss);
    out_ << buf;
    if (++pending_ >= flush_every_) flush();
}

void MetricsCsv::flush() {
    out_.flush();
    pending_ = 0;
    if (!out_) throw IoError("failed writing metrics");
}

Batch make_batch(const std::vector<Sample>& samples, const Normalization& norm, const TrainConfig& cfg, Rng* augment) {
    if (samples.empty()) throw ConfigError("empty batch");
    const Index H0 = samples[0].image.dim(1), W0 = samples[0].image.dim(2);
    const bool crop = cfg.crop.h > 0;
    const Index H = crop ? cfg.crop.h : H0, W = crop ? cfg.crop.w : W0;
    if (H > H0 || W > W0) {
        throw ConfigError("train.crop " + std::to_string(H) + "x" + std::to_string(W) + " exceeds image " +
                          std::to_string(H0) + "x" + std::to_string(W0));
    }
    const Index N = static_cast<Index>(samples.size()), plane = H * W;
    Batch b;
    b.images = Tensor({N, 3, H, W});
    b.labels.resize(static_cast<std::size_t>(N * plane));
    auto y = b.images.data();
    for (Index n = 0; n < N; ++n) {
        const Sample& s = samples[static_cast<std::size_t>(n)];
        if (s.image.dim(1) != H0 || s.image.dim(2) != W0) {
            throw DataError("sample '" + s.stem + "' is " + std::to_string(s.image.dim(1)) + "x" +
                            std::to_string(s.image.dim(2)) + ", batch expects " + std::to_string(H0) + "x" +
                            std::to_string(W0));
        }
        if (!s.labels) throw DataError("sample '" + s.stem + "' has no labels");
        Index oy = 0, ox = 0;
        bool flip = false;
        if (augment != nullptr) {
            if (crop) {
                oy = static_cast<Index>(augment->below(static_cast<std::uint64_t>(H0 - H + 1)));
                ox = static_cast<Index>(augment->below(static_cast<std::uint64_t>(W0 - W + 1)));
            }
            if (cfg.flip) flip = augment->uniform() < 0.5;
        }
        const auto x = s.image.data();
        for (Index r = 0; r < H; ++r) {
            for (Index c = 0; c < W; ++c) {
                const Index sc = ox + (flip ? W - 1 - c : c);
                for (Index ch = 0; ch < 3; ++ch)
                    y[((n * 3 + ch) * H + r) * W + c] = x[(ch * H0 + oy + r) * W0 + sc];
                b.labels[static_cast<std::size_t>(n * plane + r * W + c)] = s.labels->at(oy + r, sc);
            }
        }
    }
    b.images = norm.apply(b.images);
    return b;
}

TrainState train(Model& model, const Dataset& data, const TrainConfig& cfg, const Normalization& norm,
                 const TrainSinks& sinks) {
    cfg.validate();
    if (data.empty()) throw ConfigError("training dataset is empty");
    if (!data.labeled()) throw ConfigError("training dataset is unlabeled");
    if (!cfg.class_weights.empty() && static_cast<Index>(cfg.class_weights.size()) != model.config().num_classes) {
        throw ConfigError("train.class_weights has " + std::to_string(cfg.class_weights.size()) + " entries for " +
                          std::to_string(model.config().num_classes) + " classes");
    }
    TrainState state;
    state.rng = Rng(cfg.seed);
    std::vector<Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);

    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size();
    auto next_index = [&]() {
        if (cursor == order.size()) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state.rng.below(i)]);
            cursor = 0;
        }
        return order[cursor++];
    };

    for (std::int64_t it = 0; it < cfg.max_iterations; ++it) {
        const double lr = poly_lr(cfg.initial_lr, it, cfg.max_iterations, cfg.power);
        std::vector<Sample> samples;
        for (Index i = 0; i < cfg.batch_size; ++i) samples.push_back(data.sample(next_index()));
        const Batch batch = make_batch(samples, norm, cfg, &state.rng);

        for (auto& p : params) p.zero_grad();
        const Tensor logits = model.forward(batch.images, NormMode::Train);
        Tensor loss = cross_entropy<float>(logits, batch.labels, cfg.class_weights, cfg.ignore_index);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "non-finite loss at iteration %lld (lr=%.9g, loss=%g)",
                          static_cast<long long>(it), lr, value);
            throw NumericError(buf);
        }
        backward(loss);
        if (cfg.optimizer == OptimizerKind::Sgd) {
            sgd_step(params, state.optimizer, lr, cfg.momentum, cfg.weight_decay);
        } else {
            adam_step(params, state.optimizer, lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
        }
        state.iteration = it + 1;
        state.last_loss = value;
        state.smoothed_loss = it == 0 ? value : 0.9 * state.smoothed_loss + 0.1 * value;
        const TrainRecord record{it, lr, value};
        state.history.push_back(record);
        if (it % cfg.log_every == 0 || it + 1 == cfg.max_iterations) {
            if (sinks.csv != nullptr) sinks.csv->append(record);
            if (sinks.on_record) sinks.on_record(record);
        }
    }
    if (sinks.csv != nullptr) sinks.csv->flush();
    return state;
}

}  // namespace letnet
