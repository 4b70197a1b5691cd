#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "letnet/data_io.hpp"

namespace letnet {

// K x K pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
   public:
    explicit ConfusionMatrix(Index num_classes = 0);

    Index num_classes() const { return k_; }
    std::uint64_t at(Index truth, Index predicted) const { return counts_[index(truth, predicted)]; }
    std::uint64_t& at(Index truth, Index predicted) { return counts_[index(truth, predicted)]; }
    std::uint64_t total() const;
    std::uint64_t row_sum(Index k) const;
    std::uint64_t col_sum(Index k) const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

   private:
    std::size_t index(Index t, Index p) const { return static_cast<std::size_t>(t * k_ + p); }
    Index k_;
    std::vector<std::uint64_t> counts_;
};

// Adds one count per pixel whose truth is not the ignore value. Throws
// ConfigError on shape mismatch and DataError on out-of-range classes.
void accumulate(ConfusionMatrix& cm, const LabelMap& predictions, const LabelMap& truth);

struct IoUReport {
    std::vector<std::string> class_names;
    std::vector<double> iou;     // meaningful only where defined
    std::vector<bool> defined;   // false when the class is absent from truth and prediction
    double mean = 0.0;           // over defined classes; 0 when none are defined
    Index defined_count() const;
};

// IoU_k = cm[k][k] / (row_k + col_k - cm[k][k]). Missing names default to
// "class<k>".
IoUReport iou(const ConfusionMatrix& cm, const std::vector<std::string>& class_names = {});

// `class,iou` rows (undefined classes print "nan") plus a final `mean,<value>`.
std::string to_csv(const IoUReport& report);
// Class names across the top and IoU (%) beneath, ending with an Avg column.
std::string to_text_table(const IoUReport& report, const std::string& row_label = "IoU (%)");

// Argmax over the class axis of N x K x H x W logits; ties go to the lower id.
std::vector<LabelMap> predict_labels(const Tensor& logits, std::int32_t ignore_index = 255);

}  // namespace letnet
