#pragma once

// Independent reference implementations used as test oracles. They work on
// plain vectors in double or long double and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "letnet/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Index = std::int64_t;

struct Dims {
    Index n, c, h, w;
    Index size() const { return n * c * h * w; }
};

struct Conv {
    Index out_c, kh, kw, sh = 1, sw = 1, ph = 0, pw = 0, dh = 1, dw = 1, groups = 1;
};

// Zero-pads the input explicitly, then correlates the padded image.
inline Vec conv2d(const Vec& x, Dims d, const Vec& w, const Vec* bias, const Conv& k, Index& oh, Index& ow) {
    const Index hp = d.h + 2 * k.ph, wp = d.w + 2 * k.pw;
    Vec padded(static_cast<std::size_t>(d.n * d.c * hp * wp), 0.0);
    for (Index n = 0; n < d.n; ++n)
        for (Index c = 0; c < d.c; ++c)
            for (Index y = 0; y < d.h; ++y)
                for (Index xx = 0; xx < d.w; ++xx)
                    padded[((n * d.c + c) * hp + y + k.ph) * wp + xx + k.pw] = x[((n * d.c + c) * d.h + y) * d.w + xx];
    oh = (hp - k.dh * (k.kh - 1) - 1) / k.sh + 1;
    ow = (wp - k.dw * (k.kw - 1) - 1) / k.sw + 1;
    const Index cin_g = d.c / k.groups, cout_g = k.out_c / k.groups;
    Vec out(static_cast<std::size_t>(d.n * k.out_c * oh * ow), 0.0);
    for (Index n = 0; n < d.n; ++n)
        for (Index oc = 0; oc < k.out_c; ++oc) {
            const Index g = oc / cout_g;
            for (Index y = 0; y < oh; ++y)
                for (Index xx = 0; xx < ow; ++xx) {
                    double acc = bias ? (*bias)[oc] : 0.0;
                    for (Index ic = 0; ic < cin_g; ++ic)
                        for (Index ky = 0; ky < k.kh; ++ky)
                            for (Index kx = 0; kx < k.kw; ++kx) {
                                const Index iy = y * k.sh + ky * k.dh, ix = xx * k.sw + kx * k.dw;
                                acc += w[((oc * cin_g + ic) * k.kh + ky) * k.kw + kx] *
                                       padded[((n * d.c + g * cin_g + ic) * hp + iy) * wp + ix];
                            }
                    out[((n * k.out_c + oc) * oh + y) * ow + xx] = acc;
                }
        }
    return out;
}

// Window pooling without padding; global when k == 0.
inline Vec pool(const Vec& x, Dims d, bool max, Index k, Index s, Index& oh, Index& ow) {
    const Index kh = k == 0 ? d.h : k, kw = k == 0 ? d.w : k, sh = k == 0 ? 1 : s, sw = k == 0 ? 1 : s;
    oh = (d.h - kh) / sh + 1;
    ow = (d.w - kw) / sw + 1;
    Vec out;
    for (Index n = 0; n < d.n; ++n)
        for (Index c = 0; c < d.c; ++c)
            for (Index y = 0; y < oh; ++y)
                for (Index xx = 0; xx < ow; ++xx) {
                    std::vector<double> window;
                    for (Index i = 0; i < kh; ++i)
                        for (Index j = 0; j < kw; ++j)
                            window.push_back(x[((n * d.c + c) * d.h + y * sh + i) * d.w + xx * sw + j]);
                    double v = 0;
                    if (max) {
                        v = *std::max_element(window.begin(), window.end());
                    } else {
                        for (double e : window) v += e;
                        v /= static_cast<double>(window.size());
                    }
                    out.push_back(v);
                }
    return out;
}

// Direct exp-normalize in long double, no max shift.
inline Vec softmax(const Vec& x, const std::vector<Index>& shape, std::size_t axis) {
    Index outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const Index len = shape[axis];
    Vec out(x.size());
    for (Index o = 0; o < outer; ++o)
        for (Index i = 0; i < inner; ++i) {
            long double total = 0;
            for (Index k = 0; k < len; ++k) total += std::exp(static_cast<long double>(x[(o * len + k) * inner + i]));
            for (Index k = 0; k < len; ++k)
                out[(o * len + k) * inner + i] =
                    static_cast<double>(std::exp(static_cast<long double>(x[(o * len + k) * inner + i])) / total);
        }
    return out;
}

// View the channel axis as a (C/g) x g matrix, transpose it, flatten.
inline Vec channel_shuffle(const Vec& x, Dims d, Index g) {
    const Index rows = d.c / g, plane = d.h * d.w;
    Vec out(x.size());
    for (Index n = 0; n < d.n; ++n)
        for (Index a = 0; a < rows; ++a)
            for (Index b = 0; b < g; ++b) {
                const Index src = a * g + b, dst = b * rows + a;
                for (Index p = 0; p < plane; ++p) out[(n * d.c + dst) * plane + p] = x[(n * d.c + src) * plane + p];
            }
    return out;
}

// Half-pixel bilinear interpolation from the textbook formula.
inline Vec resize_bilinear(const Vec& x, Dims d, Index oh, Index ow) {
    Vec out;
    auto coord = [](Index dst, Index in, Index out_len, Index& i0, Index& i1, double& frac) {
        double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out_len) - 0.5;
        if (src < 0) src = 0;
        i0 = static_cast<Index>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        i1 = std::min(i0 + 1, in - 1);
        frac = src - static_cast<double>(i0);
    };
    for (Index n = 0; n < d.n; ++n)
        for (Index c = 0; c < d.c; ++c)
            for (Index y = 0; y < oh; ++y) {
                Index y0, y1;
                double fy;
                coord(y, d.h, oh, y0, y1, fy);
                for (Index xx = 0; xx < ow; ++xx) {
                    Index x0, x1;
                    double fx;
                    coord(xx, d.w, ow, x0, x1, fx);
                    auto at = [&](Index yy, Index xv) { return x[((n * d.c + c) * d.h + yy) * d.w + xv]; };
                    const double top = at(y0, x0) * (1 - fx) + at(y0, x1) * fx;
                    const double bottom = at(y1, x0) * (1 - fx) + at(y1, x1) * fx;
                    out.push_back(top * (1 - fy) + bottom * fy);
                }
            }
    return out;
}

// Brute-force per-class intersection and union by scanning pixels.
struct IouOracle {
    std::vector<double> iou;
    std::vector<bool> defined;
    double mean = 0;
};

inline IouOracle brute_force_iou(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& truth,
                                 std::int32_t classes, std::int32_t ignore) {
    IouOracle r;
    double sum = 0;
    int n = 0;
    for (std::int32_t k = 0; k < classes; ++k) {
        std::uint64_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (truth[i] == ignore) continue;
            const bool t = truth[i] == k, p = pred[i] == k;
            inter += t && p;
            uni += t || p;
        }
        r.defined.push_back(uni > 0);
        r.iou.push_back(uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0);
        if (uni > 0) {
            sum += r.iou.back();
            ++n;
        }
    }
    r.mean = n ? sum / n : 0.0;
    return r;
}

}  // namespace oracle

namespace testutil {

inline std::vector<double> random_values(std::mt19937_64& gen, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
}

template <typename T = float>
letnet::BasicTensor<T> to_tensor(const std::vector<double>& v, letnet::Shape shape) {
    std::vector<T> data(v.begin(), v.end());
    return letnet::BasicTensor<T>(std::move(shape), std::move(data));
}

// Tensor data widened to double, so oracles see exactly the same inputs.
template <typename T>
std::vector<double> widen(const letnet::BasicTensor<T>& t) {
    return {t.data().begin(), t.data().end()};
}

template <typename T>
double max_abs_diff(const letnet::BasicTensor<T>& t, const std::vector<double>& ref) {
    const auto d = t.data();
    if (d.size() != ref.size()) return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) m = std::max(m, std::abs(static_cast<double>(d[i]) - ref[i]));
    return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
   public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("letnet_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

   private:
    std::filesystem::path path_;
};

}  // namespace testutil
