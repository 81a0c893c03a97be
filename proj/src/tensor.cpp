#include "dbd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dbd {

std::string Shape::str() const {
    std::ostringstream os;
    os << "[" << n << "," << c << "," << h << "," << w << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape_(s), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != s.numel())
        throw DimensionError("tensor init: " + std::to_string(data_.size()) + " values for shape " + s.str());
}

double Tensor::item() const {
    if (numel() != 1)
        throw DimensionError("item() on tensor of shape " + shape_.str());
    return data_[0];
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

Tensor Tensor::reshaped(Shape s) const {
    if (s.numel() != numel())
        throw DimensionError("reshape " + shape_.str() + " -> " + s.str());
    Tensor out = *this;
    out.shape_ = s;
    return out;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

double tensor_sum(const Tensor& t) {
    double s = 0.0;
    for (double v : t) s += v;
    return s;
}

double tensor_min(const Tensor& t) {
    double m = t.numel() ? t[0] : 0.0;
    for (double v : t) m = std::min(m, v);
    return m;
}

double tensor_max(const Tensor& t) {
    double m = t.numel() ? t[0] : 0.0;
    for (double v : t) m = std::max(m, v);
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::uint64_t tensor_hash(const Tensor& t) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    std::size_t nbytes = static_cast<std::size_t>(t.numel()) * sizeof(double);
    for (std::size_t i = 0; i < nbytes; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

Tensor resize_bilinear(const Tensor& src, std::int64_t out_h, std::int64_t out_w) {
    const Shape s = src.shape();
    if (s.h == out_h && s.w == out_w) return src;
    Tensor out(Shape{s.n, s.c, out_h, out_w});
    const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
                std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
                double wy = fy - static_cast<double>(y0);
                std::int64_t y0c = std::clamp<std::int64_t>(y0, 0, s.h - 1);
                std::int64_t y1c = std::clamp<std::int64_t>(y0 + 1, 0, s.h - 1);
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
                    std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
                    double wx = fx - static_cast<double>(x0);
                    std::int64_t x0c = std::clamp<std::int64_t>(x0, 0, s.w - 1);
                    std::int64_t x1c = std::clamp<std::int64_t>(x0 + 1, 0, s.w - 1);
                    double v00 = src.at(n, c, y0c, x0c);
                    double v01 = src.at(n, c, y0c, x1c);
                    double v10 = src.at(n, c, y1c, x0c);
                    double v11 = src.at(n, c, y1c, x1c);
                    out.at(n, c, oy, ox) = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                           wy * ((1.0 - wx) * v10 + wx * v11);
                }
            }
    return out;
}

Tensor resize_nearest(const Tensor& src, std::int64_t out_h, std::int64_t out_w) {
    const Shape s = src.shape();
    if (s.h == out_h && s.w == out_w) return src;
    Tensor out(Shape{s.n, s.c, out_h, out_w});
    const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                std::int64_t y = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor((oy + 0.5) * sy)), s.h - 1);
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    std::int64_t x = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor((ox + 0.5) * sx)), s.w - 1);
                    out.at(n, c, oy, ox) = src.at(n, c, y, x);
                }
            }
    return out;
}

Tensor stack_batch(const std::vector<Tensor>& samples) {
    if (samples.empty()) throw ArgumentError("stack_batch: empty sample list");
    const Shape s0 = samples[0].shape();
    Tensor out(Shape{static_cast<std::int64_t>(samples.size()), s0.c, s0.h, s0.w});
    std::int64_t per = s0.numel();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i].shape() == s0))
            throw DimensionError("stack_batch: shape mismatch " + samples[i].shape().str() + " vs " + s0.str());
        std::copy(samples[i].begin(), samples[i].end(), out.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

Tensor flip_vertical(const Tensor& src) {
    const Shape s = src.shape();
    Tensor out(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x)
                    out.at(n, c, y, x) = src.at(n, c, s.h - 1 - y, x);
    return out;
}

} // namespace dbd
