#include "letnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "letnet/blocks.hpp"
#include "letnet/model.hpp"
#include "letnet/ops.hpp"

namespace letnet {

namespace {

TensorD random_tensor(Shape shape, Rng& rng, double spread = 1.0) {
    TensorD t(std::move(shape));
    for (auto& v : t.data()) v = spread * rng.normal();
    t.set_requires_grad(true);
    return t;
}

double loss_value(const std::function<TensorD()>& f, const TensorD& projection) {
    NoGradGuard guard;
    const TensorD y = f();
    const auto a = y.data();
    const auto r = projection.data();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * r[i];
    return s;
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const std::vector<NamedTensor<double>>& inputs,
                                const std::function<TensorD()>& f, const GradCheckOptions& opts) {
    GradCheckResult result;
    result.name = name;
    Rng rng(opts.seed ^ std::hash<std::string>{}(name));

    TensorD projection;
    {
        NoGradGuard guard;
        projection = TensorD(f().shape());
    }
    // unit-scale loss keeps finite-difference roundoff near 1e-10
    const double norm = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(1, projection.numel())));
    for (auto& v : projection.data()) v = rng.normal() * norm;

    for (const auto& in : inputs) in.tensor.zero_grad();
    TensorD loss = sum(mul(f(), projection));
    backward(loss);

    for (const auto& in : inputs) {
        TensorD x = in.tensor;
        const Index n = x.numel();
        std::vector<Index> picks(static_cast<std::size_t>(n));
        std::iota(picks.begin(), picks.end(), Index{0});
        if (opts.max_elements > 0 && n > opts.max_elements) {
            for (Index i = 0; i < opts.max_elements; ++i) {
                const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
                std::swap(picks[static_cast<std::size_t>(i)], picks[static_cast<std::size_t>(j)]);
            }
            picks.resize(static_cast<std::size_t>(opts.max_elements));
        }
        const auto grad = x.grad();
        auto data = x.data();
        for (Index i : picks) {
            const auto k = static_cast<std::size_t>(i);
            const double saved = data[k];
            data[k] = saved + opts.step;
            const double up = loss_value(f, projection);
            data[k] = saved - opts.step;
            const double down = loss_value(f, projection);
            data[k] = saved;
            const double numeric = (up - down) / (2.0 * opts.step);
            const double analytic = grad[k] * (opts.corrupt ? 1.01 : 1.0);
            const double err = std::abs(analytic - numeric) / (std::abs(numeric) + opts.abs_floor);
            ++result.checked;
            if (err > result.worst_error) {
                result.worst_error = err;
                result.worst_tensor = in.name;
            }
        }
    }
    result.passed = result.worst_error < opts.tolerance;
    return result;
}

std::vector<GradCheckResult> gradcheck_primitives(const GradCheckOptions& opts) {
    Rng rng(opts.seed);
    std::vector<GradCheckResult> out;
    auto run = [&](const std::string& name, std::vector<NamedTensor<double>> inputs, std::function<TensorD()> f) {
        out.push_back(check_gradients(name, inputs, f, opts));
    };

    {
        ConvSpec s{3, 4, {3, 3}, {2, 2}, {1, 1}, {1, 1}, 1, true};
        auto x = random_tensor({1, 3, 6, 6}, rng), w = random_tensor(s.weight_shape(), rng), b = random_tensor({4}, rng);
        run("conv2d", {{"x", x}, {"w", w}, {"b", b}}, [=] { return conv2d<double>(x, w, b, s); });
    }
    {
        const ConvSpec s = ConvSpec::vertical(4, 4, 3, 2, 4);
        auto x = random_tensor({2, 4, 7, 5}, rng), w = random_tensor(s.weight_shape(), rng);
        run("conv2d_depthwise_dilated", {{"x", x}, {"w", w}}, [=] { return conv2d<double>(x, w, std::nullopt, s); });
    }
    {
        ConvSpec s{4, 6, {1, 3}, {1, 2}, {0, 1}, {1, 1}, 2, false};
        auto x = random_tensor({1, 4, 5, 6}, rng), w = random_tensor(s.weight_shape(), rng);
        run("conv2d_grouped", {{"x", x}, {"w", w}}, [=] { return conv2d<double>(x, w, std::nullopt, s); });
    }
    {
        auto x = random_tensor({2, 3, 4, 4}, rng), g = random_tensor({3}, rng), b = random_tensor({3}, rng);
        auto rm = TensorD::zeros({3}), rv = TensorD::full({3}, 1.0);
        run("batch_norm_train", {{"x", x}, {"gamma", g}, {"beta", b}},
            [=]() mutable { return batch_norm<double>(x, g, b, rm, rv, NormMode::Train); });
        auto em = TensorD({3}, std::vector<double>{0.1, -0.2, 0.3}), ev = TensorD({3}, std::vector<double>{0.5, 1.5, 2.0});
        run("batch_norm_eval", {{"x", x}, {"gamma", g}, {"beta", b}},
            [=]() mutable { return batch_norm<double>(x, g, b, em, ev, NormMode::Eval); });
    }
    {
        auto x = random_tensor({2, 3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
        run("layer_norm", {{"x", x}, {"gamma", g}, {"beta", b}}, [=] { return layer_norm<double>(x, g, b); });
    }
    {
        auto x = random_tensor({2, 3, 5}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({4}, rng);
        run("linear", {{"x", x}, {"w", w}, {"b", b}}, [=] { return linear<double>(x, w, b); });
    }
    {
        auto x = random_tensor({2, 3, 4, 4}, rng);
        run("relu", {{"x", x}}, [=] { return relu(x); });
        run("sigmoid", {{"x", x}}, [=] { return sigmoid(x); });
        run("gelu", {{"x", x}}, [=] { return gelu(x); });
        run("softmax_axis1", {{"x", x}}, [=] { return softmax(x, 1); });
        run("softmax_last", {{"x", x}}, [=] { return softmax(x, 3); });
        run("avg_pool2x2", {{"x", x}}, [=] { return pool2d(x, PoolKind::Avg, PoolWindow::spatial(2, 2)); });
        run("max_pool2x2", {{"x", x}}, [=] { return pool2d(x, PoolKind::Max, PoolWindow::spatial(2, 2)); });
        run("global_avg_pool", {{"x", x}}, [=] { return pool2d(x, PoolKind::Avg, PoolWindow::whole()); });
        run("global_max_pool", {{"x", x}}, [=] { return pool2d(x, PoolKind::Max, PoolWindow::whole()); });
        run("channel_avg_pool", {{"x", x}}, [=] { return channel_pool(x, PoolKind::Avg); });
        run("channel_max_pool", {{"x", x}}, [=] { return channel_pool(x, PoolKind::Max); });
        run("resize_up", {{"x", x}}, [=] { return resize_bilinear(x, 8, 7); });
        run("resize_down", {{"x", x}}, [=] { return resize_bilinear(x, 3, 2); });
        run("scale", {{"x", x}}, [=] { return scale(x, 0.75); });
        run("reshape", {{"x", x}}, [=] { return reshape(x, {6, 16}); });
        run("permute", {{"x", x}}, [=] { return permute(x, {0, 2, 3, 1}); });
        run("sum", {{"x", x}}, [=] { return sum(x); });
        run("mean", {{"x", x}}, [=] { return mean(x); });
    }
    {
        auto x = random_tensor({1, 6, 3, 3}, rng);
        run("channel_shuffle", {{"x", x}}, [=] { return channel_shuffle(x, 3); });
    }
    {
        auto a = random_tensor({2, 3, 4, 4}, rng), b = random_tensor({1, 3, 1, 4}, rng);
        run("add_broadcast", {{"a", a}, {"b", b}}, [=] { return add(a, b); });
        run("mul_broadcast", {{"a", a}, {"b", b}}, [=] { return mul(a, b); });
        auto c = random_tensor({2, 2, 4, 4}, rng);
        run("concat", {{"a", a}, {"c", c}}, [=] { return concat<double>({a, c}, 1); });
    }
    for (int variant = 0; variant < 4; ++variant) {
        const bool ta = variant & 1, tb = variant & 2;
        auto a = random_tensor(ta ? Shape{2, 4, 3} : Shape{2, 3, 4}, rng);
        auto b = random_tensor(tb ? Shape{2, 5, 4} : Shape{2, 4, 5}, rng);
        run("bmm_" + std::to_string(variant), {{"a", a}, {"b", b}}, [=] { return bmm(a, b, ta, tb); });
    }
    {
        auto x = random_tensor({2, 4, 3, 3}, rng);
        std::vector<std::int32_t> labels(18);
        for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(4));
        labels[5] = 255;
        labels[11] = 255;
        const std::vector<double> weights{1.0, 0.5, 2.0, 1.5};
        run("cross_entropy", {{"logits", x}},
            [=] { return cross_entropy<double>(x, labels, weights, 255); });
    }
    return out;
}

std::vector<GradCheckResult> gradcheck_blocks(const GradCheckOptions& opts) {
    Rng rng(opts.seed);
    std::vector<GradCheckResult> out;
    auto with_params = [](std::vector<NamedTensor<double>> inputs, const auto& block) {
        ParamCollector<double> c;
        block.collect("", c);
        for (auto& p : c.params) inputs.push_back(p);
        return inputs;
    };
    {
        ChannelAttention<double> ca(3, rng);
        auto x = random_tensor({1, 16, 8, 8}, rng);
        out.push_back(check_gradients("CA", with_params({{"x", x}}, ca), [=] { return ca(x); }, opts));
    }
    {
        auto ldb = std::make_shared<LdbBlock<double>>(LdbConfig{16, 2, 3, 0}, rng);
        auto x = random_tensor({1, 16, 8, 8}, rng);
        out.push_back(check_gradients("LDB", with_params({{"x", x}}, *ldb),
                                      [=] { return ldb->forward(x, NormMode::Train); }, opts));
    }
    const EmhaConfig ecfg{16, 2, 4, 2};
    {
        EmhaBlock<double> emha(ecfg, rng);
        auto x = random_tensor({1, 64, 8}, rng);
        out.push_back(check_gradients("EMHA", with_params({{"x", x}}, emha), [=] { return emha.forward(x); }, opts));
    }
    {
        EfficientTransformer<double> et(ecfg, rng);
        auto x = random_tensor({1, 16, 8, 8}, rng);
        out.push_back(check_gradients("ET", with_params({{"x", x}}, et), [=] { return et.forward(x); }, opts));
    }
    {
        auto fe = std::make_shared<FeatureEnhancement<double>>(FeConfig{16, 4}, rng);
        auto x = random_tensor({1, 16, 8, 8}, rng);
        out.push_back(check_gradients("FE", with_params({{"x", x}}, *fe),
                                      [=] { return fe->forward(x, NormMode::Train); }, opts));
    }
    {
        PixelAttention<double> pa(PaConfig{16}, rng);
        auto x = random_tensor({1, 16, 8, 8}, rng);
        out.push_back(check_gradients("PA", with_params({{"x", x}}, pa), [=] { return pa.forward(x); }, opts));
    }
    return out;
}

GradCheckResult gradcheck_model(const GradCheckOptions& opts) {
    ModelConfig cfg = ModelConfig::preset("tiny");
    cfg.num_classes = 2;
    cfg.resolution = {16, 16};
    auto net = std::make_shared<LetNet<double>>(LetNet<double>::build(cfg, opts.seed));
    Rng rng(opts.seed + 1);
    auto x = random_tensor({2, 3, 16, 16}, rng);
    std::vector<NamedTensor<double>> inputs{{"input", x}};
    for (auto& p : net->parameters()) inputs.push_back(p);
    GradCheckOptions o = opts;
    if (o.max_elements == 0) o.max_elements = 16;
    return check_gradients("model", inputs, [=] { return net->forward(x, NormMode::Train); }, o);
}

}  // namespace letnet
