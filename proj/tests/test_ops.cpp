#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "letnet/ops.hpp"
#include "properties.hpp"

using namespace letnet;
using testutil::to_tensor;

namespace {
const std::optional<Tensor> kNoBias;
}

TEST_CASE("conv2d identity kernel") {
    Tensor x({1, 1, 3, 4});
    std::iota(x.data().begin(), x.data().end(), 0.0f);
    Tensor w({1, 1, 1, 1}, 1.0f);
    const Tensor y = conv2d(x, w, kNoBias, ConvSpec::pointwise(1, 1, false));
    CHECK(y.shape() == x.shape());
    CHECK(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
}

TEST_CASE("conv2d dilated output extent") {
    ConvSpec s{1, 1, {3, 3}, {1, 1}, {2, 2}, {2, 2}, 1, false};
    CHECK(s.output_extent({7, 7}) == Extent2{7, 7});
    const Tensor y = conv2d(Tensor({1, 1, 7, 7}, 1.0f), Tensor({1, 1, 3, 3}, 1.0f), kNoBias, s);
    CHECK(y.shape() == Shape{1, 1, 7, 7});
}

TEST_CASE("depthwise vertical three-sum") {
    Tensor x({1, 2, 3, 3});
    std::iota(x.data().begin(), x.data().end(), 0.0f);
    ConvSpec s{2, 2, {3, 1}, {1, 1}, {1, 0}, {1, 1}, 2, false};
    const Tensor y = conv2d(x, Tensor({2, 1, 3, 1}, 1.0f), kNoBias, s);
    Index oh, ow;
    const auto ref = oracle::conv2d(testutil::widen(x), {1, 2, 3, 3}, std::vector<double>(6, 1.0), nullptr,
                                    {2, 3, 1, 1, 1, 1, 0, 1, 1, 2}, oh, ow);
    CHECK(testutil::max_abs_diff(y, ref) == 0.0);
    // first channel, middle column: 1+4, 1+4+7, 4+7
    CHECK(y.at({0, 0, 0, 1}) == 5.0f);
    CHECK(y.at({0, 0, 1, 1}) == 12.0f);
    CHECK(y.at({0, 0, 2, 1}) == 11.0f);
}

TEST_CASE("conv2d errors") {
    CHECK_THROWS_AS(conv2d(Tensor({1, 3, 4, 4}), Tensor({1, 2, 1, 1}), kNoBias, ConvSpec::pointwise(2, 1, false)),
                    ConfigError);
    ConvSpec big{1, 1, {5, 5}, {1, 1}, {0, 0}, {1, 1}, 1, false};
    CHECK_THROWS_AS(big.output_extent({3, 3}), ConfigError);
    ConvSpec bad_groups{3, 4, {1, 1}, {1, 1}, {0, 0}, {1, 1}, 2, false};
    CHECK_THROWS_AS(bad_groups.validate(), ConfigError);
}

TEST_CASE("batch norm examples") {
    SUBCASE("eval with running mean equal to a constant input gives zeros") {
        Tensor x({2, 3, 2, 2}, 0.7f), g({3}, 1.0f), b({3}, 0.0f), rm({3}, 0.7f), rv({3}, 1.0f);
        const Tensor y = batch_norm(x, g, b, rm, rv, NormMode::Eval);
        for (float v : y.data()) CHECK(v == 0.0f);
    }
    SUBCASE("gamma zero yields beta") {
        std::mt19937_64 gen(1);
        Tensor x = to_tensor(testutil::random_values(gen, 24), {2, 3, 2, 2});
        Tensor g({3}, 0.0f), b({3}, std::vector<float>{1, -2, 3}), rm({3}, 0.0f), rv({3}, 1.0f);
        const Tensor y = batch_norm(x, g, b, rm, rv, NormMode::Train);
        for (Index n = 0; n < 2; ++n)
            for (Index c = 0; c < 3; ++c)
                for (Index i = 0; i < 2; ++i) CHECK(y.at({n, c, i, 1}) == b.data()[c]);
    }
    SUBCASE("train mode standardizes each channel") {
        std::mt19937_64 gen(2);
        TensorD x = to_tensor<double>(testutil::random_values(gen, 96, -3, 5), {2, 3, 4, 4});
        TensorD g({3}, 1.0), b({3}, 0.0), rm({3}, 0.0), rv({3}, 1.0);
        const TensorD y = batch_norm(x, g, b, rm, rv, NormMode::Train, 0.1, 0.0);
        for (Index c = 0; c < 3; ++c) {
            double m = 0, v = 0, xm = 0, xv = 0;
            for (Index n = 0; n < 2; ++n)
                for (Index i = 0; i < 16; ++i) {
                    m += y.data()[(n * 3 + c) * 16 + i];
                    xm += x.data()[(n * 3 + c) * 16 + i];
                }
            m /= 32;
            xm /= 32;
            for (Index n = 0; n < 2; ++n)
                for (Index i = 0; i < 16; ++i) {
                    v += std::pow(y.data()[(n * 3 + c) * 16 + i] - m, 2);
                    xv += std::pow(x.data()[(n * 3 + c) * 16 + i] - xm, 2);
                }
            CHECK(std::abs(m) < 1e-12);
            CHECK(v / 32 == doctest::Approx(1.0).epsilon(1e-12));
            // running statistics use the unbiased variance
            CHECK(rm.data()[c] == doctest::Approx(0.1 * xm).epsilon(1e-12));
            CHECK(rv.data()[c] == doctest::Approx(0.9 + 0.1 * xv / 31).epsilon(1e-12));
        }
    }
}

TEST_CASE("activations") {
    const Tensor x({3}, std::vector<float>{0.0f, -3.2f, 2.0f});
    const Tensor s = sigmoid(x);
    CHECK(s.data()[0] == 0.5f);
    CHECK(relu(x).data()[1] == 0.0f);
    CHECK(relu(x).data()[2] == 2.0f);
    // 1 / (1 + e^-2) evaluated to 20 digits
    CHECK(std::abs(s.data()[2] - 0.88079707797788244406) < 1e-7);
    const TensorD sd = sigmoid(TensorD({1}, 2.0));
    CHECK(std::abs(sd.data()[0] - 0.88079707797788244406) < 1e-15);
    // exact GELU: x * Phi(x); Phi(1) = 0.841344746068542948586
    const TensorD gd = gelu(TensorD({1}, 1.0));
    CHECK(std::abs(gd.data()[0] - 0.841344746068542948586) < 1e-15);
}

TEST_CASE("softmax examples") {
    const Tensor eq = softmax(Tensor({4}, 1.5f), 0);
    for (float v : eq.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-7));
    CHECK(softmax(Tensor({2, 1}, 3.0f), 1).data()[0] == 1.0f);
    const Tensor y = softmax(Tensor({3}, std::vector<float>{1, 2, 3}), 0);
    CHECK(testutil::max_abs_diff(y, oracle::softmax({1, 2, 3}, {3}, 0)) <= 1e-7);
    CHECK_THROWS_AS(softmax(Tensor({3}), 1), ConfigError);
}

TEST_CASE("pooling examples") {
    CHECK(pool2d(Tensor({1, 2, 3, 5}, 4.25f), PoolKind::Avg, PoolWindow::whole()).data()[1] == 4.25f);
    Tensor onehot({1, 1, 4, 4}, 0.0f);
    onehot.at({0, 0, 2, 3}) = 1.0f;
    CHECK(pool2d(onehot, PoolKind::Max, PoolWindow::whole()).item() == 1.0f);
    Tensor grid({1, 1, 4, 4});
    std::iota(grid.data().begin(), grid.data().end(), 0.0f);
    const Tensor y = pool2d(grid, PoolKind::Avg, PoolWindow::spatial(2, 2));
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    // hand loop: (0+1+4+5)/4, (2+3+6+7)/4, (8+9+12+13)/4, (10+11+14+15)/4
    CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{2.5f, 4.5f, 10.5f, 12.5f});
    const Tensor cp = channel_pool(to_tensor({1, 5, -2, 0}, {1, 2, 1, 2}), PoolKind::Max);
    CHECK(cp.data()[0] == 1.0f);
    CHECK(cp.data()[1] == 5.0f);
}

TEST_CASE("channel shuffle examples") {
    Tensor x({1, 4, 1, 1}, std::vector<float>{0, 1, 2, 3});
    const Tensor y = channel_shuffle(x, 2);
    CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{0, 2, 1, 3});
    std::mt19937_64 gen(3);
    const Tensor r = to_tensor(testutil::random_values(gen, 2 * 6 * 3 * 2), {2, 6, 3, 2});
    CHECK(testutil::max_abs_diff(channel_shuffle(r, 1), testutil::widen(r)) == 0.0);
    CHECK(testutil::max_abs_diff(channel_shuffle(r, 6), testutil::widen(r)) == 0.0);
    // shuffling by g then by C/g restores the original order
    CHECK(testutil::max_abs_diff(channel_shuffle(channel_shuffle(r, 2), 3), testutil::widen(r)) == 0.0);
    for (Index c = 0; c < 6; ++c) CHECK(shuffled_channel(c, 6, 2) == (c % 2) * 3 + c / 2);
    CHECK_THROWS_AS(channel_shuffle(r, 4), ConfigError);
}

TEST_CASE("bilinear resize examples") {
    const Tensor c = resize_bilinear(Tensor({1, 2, 3, 5}, -1.75f), 7, 2);
    for (float v : c.data()) CHECK(v == -1.75f);
    const Tensor one = resize_bilinear(Tensor({1, 1, 1, 1}, 3.0f), 2, 2);
    for (float v : one.data()) CHECK(v == 3.0f);
    const Tensor x({1, 1, 2, 2}, std::vector<float>{0, 1, 2, 3});
    const Tensor y = resize_bilinear(x, 4, 4);
    const auto ref = oracle::resize_bilinear({0, 1, 2, 3}, {1, 1, 2, 2}, 4, 4);
    CHECK(testutil::max_abs_diff(y, ref) <= 1e-7);
    // row 1 of the half-pixel grid: source y = 0.25, x = -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
    CHECK(y.at({0, 0, 1, 0}) == doctest::Approx(0.5));
    CHECK(y.at({0, 0, 1, 1}) == doctest::Approx(0.75));
    CHECK(y.at({0, 0, 1, 2}) == doctest::Approx(1.25));
    CHECK(y.at({0, 0, 1, 3}) == doctest::Approx(1.5));
}

TEST_CASE("linear, layer norm, bmm, concat, permute on hand values") {
    const Tensor x({1, 2}, std::vector<float>{1, 2});
    const Tensor w({3, 2}, std::vector<float>{1, 0, 0, 1, 1, 1});
    const Tensor y = linear(x, w, std::optional<Tensor>(Tensor({3}, std::vector<float>{0.5f, 0, -1})));
    CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{1.5f, 2, 2});

    const TensorD ln = layer_norm(TensorD({1, 4}, std::vector<double>{1, 2, 3, 4}), TensorD({4}, 1.0),
                                  TensorD({4}, 0.0), 0.0);
    const double sd = std::sqrt(1.25);
    CHECK(ln.data()[0] == doctest::Approx(-1.5 / sd).epsilon(1e-12));
    CHECK(ln.data()[3] == doctest::Approx(1.5 / sd).epsilon(1e-12));

    const Tensor a({1, 2, 2}, std::vector<float>{1, 2, 3, 4}), b({1, 2, 2}, std::vector<float>{5, 6, 7, 8});
    const Tensor ab = bmm(a, b);
    CHECK(std::vector<float>(ab.data().begin(), ab.data().end()) == std::vector<float>{19, 22, 43, 50});
    const Tensor atb = bmm(a, b, true, false);  // [1 3; 2 4] * B = [26 30; 38 44]
    CHECK(std::vector<float>(atb.data().begin(), atb.data().end()) == std::vector<float>{26, 30, 38, 44});

    const Tensor cat = concat<float>({Tensor({1, 1, 1, 2}, 1.0f), Tensor({1, 2, 1, 2}, 2.0f)}, 1);
    CHECK(cat.shape() == Shape{1, 3, 1, 2});
    CHECK(cat.at({0, 2, 0, 1}) == 2.0f);

    Tensor p({2, 3});
    std::iota(p.data().begin(), p.data().end(), 0.0f);
    const Tensor pt = permute(p, {1, 0});
    CHECK(std::vector<float>(pt.data().begin(), pt.data().end()) == std::vector<float>{0, 3, 1, 4, 2, 5});
    CHECK_THROWS_AS(reshape(p, {4}), ConfigError);
}

TEST_CASE("broadcasting") {
    const Tensor a({2, 3}, 1.0f), b({1, 3}, std::vector<float>{1, 2, 3});
    const Tensor y = mul(add(a, b), b);
    CHECK(y.at({1, 2}) == 12.0f);
    CHECK_THROWS_AS(add(a, Tensor({2, 2})), ConfigError);
}

TEST_CASE("mac counter instruments convolutions") {
    // 3x3 conv, 16 -> 16, 32x32 output: 32*32*16*9*16
    const ConvSpec s{16, 16, {3, 3}, {1, 1}, {1, 1}, {1, 1}, 1, false};
    MacCounter counter;
    conv2d(Tensor({1, 16, 32, 32}), Tensor(s.weight_shape()), kNoBias, s);
    CHECK(counter.total() == 2359296u);
}

TEST_CASE("oracle equivalence on randomized cases") {
    struct Named {
        const char* what;
        props::Result r;
    };
    for (const auto& [what, r] :
         {Named{"conv2d", props::conv_vs_oracle(101, 120)}, Named{"pool", props::pool_vs_oracle(102, 120)},
          Named{"softmax", props::softmax_vs_oracle(103, 120)}, Named{"shuffle", props::shuffle_vs_oracle(104, 120)},
          Named{"resize", props::resize_vs_oracle(105, 120)}}) {
        INFO(what << " worst " << r.worst << " at " << r.note);
        CHECK(r.cases >= 100);
        CHECK(r.worst <= 1e-12);
    }
}

TEST_CASE("float conv agrees with the oracle to float precision") {
    std::mt19937_64 gen(7);
    const ConvSpec s{4, 6, {3, 3}, {2, 1}, {1, 2}, {1, 2}, 2, true};
    const auto xv = testutil::random_values(gen, 2 * 4 * 7 * 9), wv = testutil::random_values(gen, 6 * 2 * 9),
               bv = testutil::random_values(gen, 6);
    const Tensor x = to_tensor(xv, {2, 4, 7, 9});
    const Tensor w = to_tensor(wv, s.weight_shape());
    const Tensor y = conv2d(x, w, std::optional<Tensor>(to_tensor(bv, {6})), s);
    Index oh, ow;
    const std::vector<double> bd = testutil::widen(to_tensor(bv, {6}));
    const auto ref = oracle::conv2d(testutil::widen(x), {2, 4, 7, 9}, testutil::widen(w), &bd,
                                    {6, 3, 3, 2, 1, 1, 2, 1, 2, 2}, oh, ow);
    CHECK(testutil::max_abs_diff(y, ref) < 1e-5);
}

TEST_CASE("check_finite names the tensor") {
    Tensor t({2}, std::vector<float>{1.0f, NAN});
    try {
        check_finite(t, "logits");
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("logits") != std::string::npos);
    }
}

TEST_CASE("NaN propagates through relu and max pooling") {
    Tensor x({1, 2, 2, 2}, 1.0f);
    x.data()[1] = std::nanf("");
    CHECK(std::isnan(relu(x).data()[1]));
    CHECK(std::isnan(pool2d(x, PoolKind::Max, PoolWindow::spatial(2, 2)).data()[0]));
    CHECK(std::isnan(channel_pool(x, PoolKind::Max).data()[1]));
    CHECK_THROWS_AS(check_finite(relu(x), "relu"), NumericError);
}
