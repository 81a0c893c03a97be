#pragma once

// Brute-force reference implementations used to pin expected values in tests.
// Everything here is written as plain pixel/element loops, independent of the
// library's computation paths.

#include <algorithm>
#include <cmath>
#include <vector>

#include "dbd/rng.hpp"
#include "dbd/tensor.hpp"

namespace oracle {

inline double bce(const dbd::Tensor& pred, const dbd::Tensor& label, double eps = 1e-7) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        double p = std::clamp(pred[i], eps, 1.0 - eps);
        double y = label[i];
        acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return acc / static_cast<double>(pred.numel());
}

/// 8-neighborhood boundary scan on a binarized mask.
inline dbd::Tensor hard_edges(const dbd::Tensor& mask, double threshold) {
    const dbd::Shape s = mask.shape();
    dbd::Tensor out(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x) {
                    bool self = mask.at(n, c, y, x) >= threshold;
                    bool boundary = false;
                    for (std::int64_t dy = -1; dy <= 1 && !boundary; ++dy)
                        for (std::int64_t dx = -1; dx <= 1 && !boundary; ++dx) {
                            std::int64_t yy = y + dy, xx = x + dx;
                            if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                            bool other = mask.at(n, c, yy, xx) >= threshold;
                            if (other != self) boundary = true;
                        }
                    out.at(n, c, y, x) = boundary ? 1.0 : 0.0;
                }
    return out;
}

/// Local max minus local min over clipped 3x3 windows.
inline dbd::Tensor soft_edges(const dbd::Tensor& prob) {
    const dbd::Shape s = prob.shape();
    dbd::Tensor out(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x) {
                    double lo = 1e300, hi = -1e300;
                    for (std::int64_t yy = std::max<std::int64_t>(0, y - 1); yy <= std::min(s.h - 1, y + 1); ++yy)
                        for (std::int64_t xx = std::max<std::int64_t>(0, x - 1); xx <= std::min(s.w - 1, x + 1);
                             ++xx) {
                            double v = prob.at(n, c, yy, xx);
                            lo = std::min(lo, v);
                            hi = std::max(hi, v);
                        }
                    out.at(n, c, y, x) = hi - lo;
                }
    return out;
}

inline double dice_loss(const dbd::Tensor& pe, const dbd::Tensor& le, double eps = 1.0) {
    double inter = 0.0, sp = 0.0, sl = 0.0;
    for (std::int64_t i = 0; i < pe.numel(); ++i) {
        inter += pe[i] * le[i];
        sp += pe[i];
        sl += le[i];
    }
    return 1.0 - (2.0 * inter + eps) / (sp + sl + eps);
}

inline double dbd_loss(const dbd::Tensor& pred, const dbd::Tensor& label, double lambda) {
    double total = bce(pred, label);
    if (lambda != 0.0) total += lambda * dice_loss(soft_edges(pred), hard_edges(label, 0.5));
    return total;
}

/// Squared distance between whole-tensor-normalized samples, batch mean.
inline double pairwise_similarity(const dbd::Tensor& u, const dbd::Tensor& v) {
    const dbd::Shape s = u.shape();
    const std::int64_t per = s.c * s.h * s.w;
    double acc = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
        double nu = 0.0, nv = 0.0;
        for (std::int64_t i = 0; i < per; ++i) {
            nu += u[n * per + i] * u[n * per + i];
            nv += v[n * per + i] * v[n * per + i];
        }
        nu = std::sqrt(nu);
        nv = std::sqrt(nv);
        double d = 0.0;
        for (std::int64_t i = 0; i < per; ++i) {
            double diff = u[n * per + i] / nu - v[n * per + i] / nv;
            d += diff * diff;
        }
        acc += d;
    }
    return acc / static_cast<double>(s.n);
}

inline double beta_schedule(int epoch, int last_epoch) {
    // Direct transcription of the piecewise schedule.
    if (epoch <= 15) return 3.0;
    return 3.0 * ((static_cast<double>(epoch) - 15.0) / static_cast<double>(last_epoch));
}

inline double mae(const dbd::Tensor& pred, const dbd::Tensor& label) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) acc += std::abs(pred[i] - label[i]);
    return acc / static_cast<double>(pred.numel());
}

struct Confusion {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const dbd::Tensor& pred, const dbd::Tensor& label, double threshold) {
    Confusion c;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        bool p = pred[i] >= threshold;
        bool y = label[i] >= 0.5;
        if (p && y)
            ++c.tp;
        else if (p && !y)
            ++c.fp;
        else if (!p && y)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

inline double fbeta(const dbd::Tensor& pred, const dbd::Tensor& label, double beta_sq, double threshold) {
    Confusion c = confusion(pred, label, threshold);
    if (c.tp + c.fp == 0 && c.tp + c.fn == 0) return 1.0; // both empty
    double precision = (c.tp + c.fp) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    double recall = (c.tp + c.fn) ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    if (precision + recall == 0.0 || beta_sq * precision + recall == 0.0) return 0.0;
    return (1.0 + beta_sq) * precision * recall / (beta_sq * precision + recall);
}

inline double iou(const dbd::Tensor& pred, const dbd::Tensor& label, double threshold) {
    Confusion c = confusion(pred, label, threshold);
    std::int64_t uni = c.tp + c.fp + c.fn;
    if (uni == 0) return 1.0; // both empty
    return static_cast<double>(c.tp) / static_cast<double>(uni);
}

inline dbd::Tensor random_tensor(dbd::Shape s, dbd::RandomStream& rng, double lo = 0.0, double hi = 1.0) {
    dbd::Tensor t(s);
    for (auto& v : t) v = rng.uniform(lo, hi);
    return t;
}

inline dbd::Tensor random_binary(dbd::Shape s, dbd::RandomStream& rng, double p_one = 0.5) {
    dbd::Tensor t(s);
    for (auto& v : t) v = rng.bernoulli(p_one) ? 1.0 : 0.0;
    return t;
}

} // namespace oracle
