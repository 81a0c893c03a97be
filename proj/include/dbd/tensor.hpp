#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbd/common.hpp"

namespace dbd {

/// Dimensions of a 4-D tensor in [batch, channels, height, width] order.
/// Lower-rank data (scalars, per-sample values) uses size-1 axes.
struct Shape {
    std::int64_t n = 1;
    std::int64_t c = 1;
    std::int64_t h = 1;
    std::int64_t w = 1;

    std::int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape& o) const = default;
    std::string str() const;
};

/// Dense row-major double tensor. Value semantics; copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s) : shape_(s), data_(static_cast<std::size_t>(s.numel()), 0.0) {}
    Tensor(Shape s, double fill) : shape_(s), data_(static_cast<std::size_t>(s.numel()), fill) {}
    Tensor(Shape s, std::vector<double> values);

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor full(Shape s, double v) { return Tensor(s, v); }
    static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(index(n, c, h, w))];
    }
    double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(index(n, c, h, w))];
    }

    /// Scalar value of a 1-element tensor.
    double item() const;

    void fill(double v);
    Tensor reshaped(Shape s) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

private:
    Shape shape_{0, 0, 0, 0};
    std::vector<double> data_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

double tensor_sum(const Tensor& t);
double tensor_min(const Tensor& t);
double tensor_max(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// FNV-1a over the raw bytes; used for frozen-parameter checks.
std::uint64_t tensor_hash(const Tensor& t);

/// Bilinear resize with half-pixel sampling. Works per channel; handles both
/// up- and down-scaling.
Tensor resize_bilinear(const Tensor& src, std::int64_t out_h, std::int64_t out_w);

/// Nearest-neighbor resize; keeps hard {0,1} labels hard.
Tensor resize_nearest(const Tensor& src, std::int64_t out_h, std::int64_t out_w);

/// Flip rows (upside-down).
Tensor flip_vertical(const Tensor& src);

/// Concatenates [1,c,h,w] tensors along the batch axis.
Tensor stack_batch(const std::vector<Tensor>& samples);

} // namespace dbd
