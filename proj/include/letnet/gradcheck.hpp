#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "letnet/layers.hpp"

namespace letnet {

// Central finite differences run in double precision: float32 differences
// with a 1e-3 step cannot resolve gradients through a BN layer to 1e-3.
struct GradCheckOptions {
    std::uint64_t seed = 1;
    double step = 1e-6;
    double tolerance = 1e-3;
    // Denominator floor of the relative error. Gradients that are exactly
    // zero (e.g. the key bias under softmax shift invariance) leave only
    // difference noise, which this floor keeps from dominating.
    double abs_floor = 1e-6;
    // Elements probed per tensor, sampled without replacement; 0 probes all.
    Index max_elements = 0;
    // Test hook: scales every analytic gradient by 1.01 so checks must fail.
    bool corrupt = false;
};

struct GradCheckResult {
    std::string name;
    double worst_error = 0.0;   // max |a - n| / (|n| + abs_floor)
    std::string worst_tensor;
    Index checked = 0;
    bool passed = true;
};

// Compares d(sum(R * f()))/d(input) from backward() with central differences
// for every listed input, where R is a fixed random projection.
GradCheckResult check_gradients(const std::string& name, const std::vector<NamedTensor<double>>& inputs,
                                const std::function<TensorD()>& f, const GradCheckOptions& opts);

// Every differentiable primitive on small seeded inputs.
std::vector<GradCheckResult> gradcheck_primitives(const GradCheckOptions& opts);
// CA, LDB, EMHA, ET, FE and PA on inputs no larger than 1 x 16 x 8 x 8.
std::vector<GradCheckResult> gradcheck_blocks(const GradCheckOptions& opts);
// Tiny network (2 classes, 16 x 16 input, widths 8/16/32, depths 1/1/2).
GradCheckResult gradcheck_model(const GradCheckOptions& opts);

}  // namespace letnet
