#include "letnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "letnet/error.hpp"

namespace letnet {

ConfusionMatrix::ConfusionMatrix(Index num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
    if (num_classes < 0) throw ConfigError("confusion matrix needs a non-negative class count");
}

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(Index k) const {
    std::uint64_t s = 0;
    for (Index p = 0; p < k_; ++p) s += at(k, p);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(Index k) const {
    std::uint64_t s = 0;
    for (Index t = 0; t < k_; ++t) s += at(t, k);
    return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.k_ != k_) {
        throw ConfigError("cannot add confusion matrices of " + std::to_string(k_) + " and " +
                          std::to_string(other.k_) + " classes");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& predictions, const LabelMap& truth) {
    if (predictions.height != truth.height || predictions.width != truth.width) {
        throw ConfigError("prediction " + std::to_string(predictions.height) + "x" +
                          std::to_string(predictions.width) + " does not match truth " +
                          std::to_string(truth.height) + "x" + std::to_string(truth.width));
    }
    const Index K = cm.num_classes();
    for (Index r = 0; r < truth.height; ++r) {
        for (Index c = 0; c < truth.width; ++c) {
            const auto t = truth.at(r, c);
            if (t == truth.ignore_index) continue;
            const auto p = predictions.at(r, c);
            if (t < 0 || t >= K || p < 0 || p >= K) {
                throw DataError("class out of range at row " + std::to_string(r) + ", column " + std::to_string(c) +
                                ": truth " + std::to_string(t) + ", prediction " + std::to_string(p) + ", " +
                                std::to_string(K) + " classes");
            }
        }
    }
    for (Index r = 0; r < truth.height; ++r)
        for (Index c = 0; c < truth.width; ++c)
            if (truth.at(r, c) != truth.ignore_index) ++cm.at(truth.at(r, c), predictions.at(r, c));
}

Index IoUReport::defined_count() const {
    return static_cast<Index>(std::count(defined.begin(), defined.end(), true));
}

IoUReport iou(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    const Index K = cm.num_classes();
    IoUReport r;
    r.iou.assign(static_cast<std::size_t>(K), 0.0);
    r.defined.assign(static_cast<std::size_t>(K), false);
    double sum = 0.0;
    Index n = 0;
    for (Index k = 0; k < K; ++k) {
        const auto i = static_cast<std::size_t>(k);
        r.class_names.push_back(i < class_names.size() ? class_names[i] : "class" + std::to_string(k));
        const std::uint64_t tp = cm.at(k, k);
        const std::uint64_t denom = cm.row_sum(k) + cm.col_sum(k) - tp;
        if (denom == 0) continue;
        r.defined[i] = true;
        r.iou[i] = static_cast<double>(tp) / static_cast<double>(denom);
        sum += r.iou[i];
        ++n;
    }
    r.mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
    return r;
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

std::string to_csv(const IoUReport& report) {
    std::string out = "class,iou\n";
    for (std::size_t k = 0; k < report.iou.size(); ++k)
        out += report.class_names[k] + "," + (report.defined[k] ? fixed(report.iou[k], 6) : "nan") + "\n";
    out += "mean," + fixed(report.mean, 6) + "\n";
    return out;
}

std::string to_text_table(const IoUReport& report, const std::string& row_label) {
    std::vector<std::string> head{""}, row{row_label};
    for (std::size_t k = 0; k < report.iou.size(); ++k) {
        head.push_back(report.class_names[k]);
        row.push_back(report.defined[k] ? fixed(100.0 * report.iou[k], 1) : "-");
    }
    head.push_back("Avg");
    row.push_back(fixed(100.0 * report.mean, 1));
    std::string top, bottom;
    for (std::size_t i = 0; i < head.size(); ++i) {
        const std::size_t w = std::max(head[i].size(), row[i].size());
        const bool first = i == 0;
        auto pad = [&](const std::string& s) {
            const std::string fill(w - s.size(), ' ');
            return first ? s + fill : fill + s;
        };
        top += (first ? "" : "  ") + pad(head[i]);
        bottom += (first ? "" : "  ") + pad(row[i]);
    }
    return top + "\n" + bottom + "\n";
}

std::vector<LabelMap> predict_labels(const Tensor& logits, std::int32_t ignore_index) {
    if (logits.rank() != 4) throw ConfigError("predict_labels expects N x K x H x W, got " + shape_str(logits.shape()));
    const Index N = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3), plane = H * W;
    const auto x = logits.data();
    std::vector<LabelMap> out;
    for (Index n = 0; n < N; ++n) {
        LabelMap m(H, W, K, ignore_index);
        const float* base = x.data() + n * K * plane;
        for (Index i = 0; i < plane; ++i) {
            Index best = 0;
            for (Index k = 1; k < K; ++k)
                if (base[k * plane + i] > base[best * plane + i]) best = k;
            m.values[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
        }
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace letnet
