#pragma once

// Parameter-owning wrappers around the primitives, shared by blocks and model.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "letnet/ops.hpp"
#include "letnet/rng.hpp"

namespace letnet {

template <typename T>
struct NamedTensor {
    std::string name;
    BasicTensor<T> tensor;
};

// Collects learnable parameters and non-learnable buffers under dotted names.
template <typename T>
struct ParamCollector {
    std::vector<NamedTensor<T>> params;
    std::vector<NamedTensor<T>> buffers;

    void param(const std::string& name, const BasicTensor<T>& t) { params.push_back({name, t}); }
    void buffer(const std::string& name, const BasicTensor<T>& t) { buffers.push_back({name, t}); }
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) parameter tensor.
template <typename T>
BasicTensor<T> fan_in_uniform(Shape shape, Index fan_in, Rng& rng) {
    BasicTensor<T> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    t.set_requires_grad(true);
    return t;
}

template <typename T>
struct Conv2d {
    ConvSpec spec;
    BasicTensor<T> weight;
    std::optional<BasicTensor<T>> bias;

    Conv2d() = default;
    Conv2d(const ConvSpec& s, Rng& rng) : spec(s) {
        spec.validate();
        const Index fan_in = spec.in_channels / spec.groups * spec.kernel.h * spec.kernel.w;
        weight = fan_in_uniform<T>(spec.weight_shape(), fan_in, rng);
        if (spec.bias) bias = fan_in_uniform<T>({spec.out_channels}, fan_in, rng);
    }

    BasicTensor<T> operator()(const BasicTensor<T>& x) const { return conv2d(x, weight, bias, spec); }

    void collect(const std::string& prefix, ParamCollector<T>& out) const {
        out.param(join_name(prefix, "weight"), weight);
        if (bias) out.param(join_name(prefix, "bias"), *bias);
    }
};

template <typename T>
struct BatchNorm2d {
    BasicTensor<T> gamma, beta, running_mean, running_var;

    BatchNorm2d() = default;
    explicit BatchNorm2d(Index channels)
        : gamma(Shape{channels}, T{1}),
          beta(Shape{channels}, T{0}),
          running_mean(Shape{channels}, T{0}),
          running_var(Shape{channels}, T{1}) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    BasicTensor<T> operator()(const BasicTensor<T>& x, NormMode mode) {
        return batch_norm(x, gamma, beta, running_mean, running_var, mode);
    }

    Index channels() const { return gamma.numel(); }

    void collect(const std::string& prefix, ParamCollector<T>& out) const {
        out.param(join_name(prefix, "gamma"), gamma);
        out.param(join_name(prefix, "beta"), beta);
        out.buffer(join_name(prefix, "running_mean"), running_mean);
        out.buffer(join_name(prefix, "running_var"), running_var);
    }
};

template <typename T>
struct Linear {
    Index in_features = 0, out_features = 0;
    BasicTensor<T> weight;
    std::optional<BasicTensor<T>> bias;

    Linear() = default;
    Linear(Index in, Index out, Rng& rng, bool with_bias = true) : in_features(in), out_features(out) {
        weight = fan_in_uniform<T>({out, in}, in, rng);
        if (with_bias) bias = fan_in_uniform<T>({out}, in, rng);
    }

    BasicTensor<T> operator()(const BasicTensor<T>& x) const { return linear(x, weight, bias); }

    void collect(const std::string& prefix, ParamCollector<T>& out) const {
        out.param(join_name(prefix, "weight"), weight);
        if (bias) out.param(join_name(prefix, "bias"), *bias);
    }
};

template <typename T>
struct LayerNorm {
    BasicTensor<T> gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(Index features) : gamma(Shape{features}, T{1}), beta(Shape{features}, T{0}) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    BasicTensor<T> operator()(const BasicTensor<T>& x) const { return layer_norm(x, gamma, beta); }

    void collect(const std::string& prefix, ParamCollector<T>& out) const {
        out.param(join_name(prefix, "gamma"), gamma);
        out.param(join_name(prefix, "beta"), beta);
    }
};

}  // namespace letnet
