#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "letnet/evaluation.hpp"
#include "properties.hpp"

using namespace letnet;

namespace {

LabelMap from_values(Index h, Index w, Index k, std::vector<std::int32_t> v) {
    LabelMap m(h, w, k, 255);
    m.values = std::move(v);
    return m;
}

LabelMap random_map(std::mt19937_64& gen, Index h, Index w, Index k, bool with_ignore) {
    LabelMap m(h, w, k, 255);
    std::uniform_int_distribution<std::int32_t> cls(0, static_cast<std::int32_t>(k - 1)), coin(0, 7);
    for (auto& v : m.values) v = with_ignore && coin(gen) == 0 ? 255 : cls(gen);
    return m;
}

}  // namespace

TEST_CASE("confusion matrix equals nested-loop counting") {
    std::mt19937_64 gen(21);
    const LabelMap pred = random_map(gen, 8, 8, 4, false), truth = random_map(gen, 8, 8, 4, true);
    ConfusionMatrix cm(4);
    accumulate(cm, pred, truth);
    std::uint64_t scored = 0;
    for (std::int32_t t = 0; t < 4; ++t)
        for (std::int32_t p = 0; p < 4; ++p) {
            std::uint64_t n = 0;
            for (Index r = 0; r < 8; ++r)
                for (Index c = 0; c < 8; ++c) n += truth.at(r, c) == t && pred.at(r, c) == p;
            CHECK(cm.at(t, p) == n);
            scored += n;
        }
    CHECK(cm.total() == scored);
    CHECK(scored == static_cast<std::uint64_t>(std::count_if(truth.values.begin(), truth.values.end(),
                                                             [](std::int32_t v) { return v != 255; })));
}

TEST_CASE("one hundred pixels of a single class") {
    const LabelMap m = from_values(10, 10, 4, std::vector<std::int32_t>(100, 3));
    ConfusionMatrix cm(4);
    accumulate(cm, m, m);
    CHECK(cm.at(3, 3) == 100);
    CHECK(cm.total() == 100);
    const IoUReport r = iou(cm);
    CHECK(r.defined == std::vector<bool>{false, false, false, true});
    CHECK(r.iou[3] == 1.0);
    CHECK(r.mean == 1.0);
    CHECK(r.defined_count() == 1);
}

TEST_CASE("all pixels ignored leaves the matrix empty") {
    const LabelMap truth = from_values(2, 3, 3, std::vector<std::int32_t>(6, 255));
    const LabelMap pred = from_values(2, 3, 3, {0, 1, 2, 0, 1, 2});
    ConfusionMatrix cm(3);
    accumulate(cm, pred, truth);
    CHECK(cm.total() == 0);
    const IoUReport r = iou(cm);
    CHECK(r.defined_count() == 0);
    CHECK(r.mean == 0.0);
}

TEST_CASE("hand-computed three-class example") {
    // truth row-major: 0 0 1 1 / 2 2 2 255; prediction: 0 1 1 1 / 2 0 2 1
    const LabelMap truth = from_values(2, 4, 3, {0, 0, 1, 1, 2, 2, 2, 255});
    const LabelMap pred = from_values(2, 4, 3, {0, 1, 1, 1, 2, 0, 2, 1});
    ConfusionMatrix cm(3);
    accumulate(cm, pred, truth);
    const std::uint64_t expect[3][3] = {{1, 1, 0}, {0, 2, 0}, {1, 0, 2}};
    for (Index t = 0; t < 3; ++t)
        for (Index p = 0; p < 3; ++p) CHECK(cm.at(t, p) == expect[t][p]);
    const IoUReport r = iou(cm, {"road", "car"});
    // class 0: 1/(2+2-1), class 1: 2/(2+3-2), class 2: 2/(3+2-2)
    CHECK(r.iou[0] == doctest::Approx(1.0 / 3));
    CHECK(r.iou[1] == doctest::Approx(2.0 / 3));
    CHECK(r.iou[2] == doctest::Approx(2.0 / 3));
    CHECK(r.mean == doctest::Approx(5.0 / 9));
    CHECK(r.class_names == std::vector<std::string>{"road", "car", "class2"});

    CHECK(to_csv(r) == "class,iou\nroad,0.333333\ncar,0.666667\nclass2,0.666667\nmean,0.555556\n");
    CHECK(to_text_table(r) ==
          "         road   car  class2   Avg\n"
          "IoU (%)  33.3  66.7    66.7  55.6\n");
}

TEST_CASE("undefined classes print as nan and dash") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 4;
    const IoUReport r = iou(cm, {"a", "b"});
    CHECK(to_csv(r) == "class,iou\na,1.000000\nb,nan\nmean,1.000000\n");
    CHECK(to_text_table(r, "x").find("-") != std::string::npos);
}

TEST_CASE("relabelling classes permutes the scores") {
    std::mt19937_64 gen(5);
    const Index k = 5;
    const LabelMap pred = random_map(gen, 12, 9, k, false), truth = random_map(gen, 12, 9, k, true);
    std::vector<std::int32_t> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    auto relabel = [&](LabelMap m) {
        for (auto& v : m.values)
            if (v != 255) v = perm[static_cast<std::size_t>(v)];
        return m;
    };
    ConfusionMatrix a(k), b(k);
    accumulate(a, pred, truth);
    accumulate(b, relabel(pred), relabel(truth));
    const IoUReport ra = iou(a), rb = iou(b);
    for (Index c = 0; c < k; ++c) {
        CHECK(rb.defined[perm[c]] == ra.defined[c]);
        CHECK(rb.iou[perm[c]] == ra.iou[c]);
    }
    CHECK(rb.mean == doctest::Approx(ra.mean).epsilon(1e-15));
}

TEST_CASE("accumulation is additive over images") {
    std::mt19937_64 gen(6);
    ConfusionMatrix joint(3), first(3), second(3);
    const LabelMap p1 = random_map(gen, 5, 5, 3, false), t1 = random_map(gen, 5, 5, 3, true);
    const LabelMap p2 = random_map(gen, 7, 4, 3, false), t2 = random_map(gen, 7, 4, 3, true);
    accumulate(joint, p1, t1);
    accumulate(joint, p2, t2);
    accumulate(first, p1, t1);
    accumulate(second, p2, t2);
    first += second;
    CHECK(first == joint);
    ConfusionMatrix other(4);
    CHECK_THROWS_AS(first += other, ConfigError);
}

TEST_CASE("IoU matches brute-force counting on random pairs") {
    const props::Result r = props::iou_vs_brute_force(99, 60);
    CHECK(r.cases == 60);
    CHECK_MESSAGE(r.worst == 0.0, r.note);
}

TEST_CASE("predictions take the argmax with ties to the lower id") {
    // two pixels, three classes: pixel 0 ties classes 1 and 2, pixel 1 ties all
    Tensor logits({1, 3, 1, 2}, std::vector<float>{0.0f, 5.0f, 3.0f, 5.0f, 3.0f, 5.0f});
    const auto maps = predict_labels(logits);
    REQUIRE(maps.size() == 1);
    CHECK(maps[0].values == std::vector<std::int32_t>{1, 0});
    CHECK(maps[0].num_classes == 3);
    CHECK_THROWS_AS(predict_labels(Tensor({3, 2, 2})), ConfigError);
}

TEST_CASE("shape and range errors") {
    ConfusionMatrix cm(3);
    CHECK_THROWS_AS(accumulate(cm, LabelMap(2, 2, 3, 255), LabelMap(2, 3, 3, 255)), ConfigError);
    LabelMap truth(2, 2, 3, 255), pred(2, 2, 3, 255);
    pred.at(1, 0) = 3;
    truth.at(0, 0) = 1;
    try {
        accumulate(cm, pred, truth);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 1") != std::string::npos);
        CHECK(msg.find("column 0") != std::string::npos);
    }
    CHECK(cm.total() == 0);  // a rejected pair adds nothing
    // an out-of-range prediction under an ignored pixel is not counted
    truth.at(1, 0) = 255;
    CHECK_NOTHROW(accumulate(cm, pred, truth));
    CHECK(cm.total() == 3);
    CHECK(cm.at(1, 0) == 1);
}
