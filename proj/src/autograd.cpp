#include "dbd/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dbd {

namespace {

thread_local int g_no_grad_depth = 0;

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

bool any_requires_grad(const std::vector<Var>& xs) {
    for (const auto& x : xs)
        if (x && x->requires_grad) return true;
    return false;
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_enabled() && any_requires_grad(inputs)) {
        n->requires_grad = true;
        n->inputs = std::move(inputs);
        n->backward_fn = std::move(bw);
    }
    return n;
}

} // namespace

void Node::accumulate_grad(const Tensor& g) {
    ensure_grad();
    check_same_shape(grad, g, "accumulate_grad");
    for (std::int64_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
}

Var make_leaf(Tensor value, const std::string& name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->name = name;
    return n;
}

Var make_const(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

void backward(const Var& root) {
    if (!root) throw ArgumentError("backward: null root");
    if (root->value.numel() != 1)
        throw ArgumentError("backward: root must be scalar, got " + root->value.shape().str());
    if (!root->requires_grad) return;

    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next].get();
            ++next;
            if (child && child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

namespace ag {

Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate_grad(n.grad);
        if (b->requires_grad) b->accumulate_grad(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate_grad(n.grad);
        if (b->requires_grad) {
            Tensor g = n.grad;
            for (auto& v : g) v = -v;
            b->accumulate_grad(g);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor g = n.grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= b->value[i];
            a->accumulate_grad(g);
        }
        if (b->requires_grad) {
            Tensor g = n.grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= a->value[i];
            b->accumulate_grad(g);
        }
    });
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "div");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor g = n.grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] /= b->value[i];
            a->accumulate_grad(g);
        }
        if (b->requires_grad) {
            Tensor g = n.grad;
            for (std::int64_t i = 0; i < g.numel(); ++i) {
                double bv = b->value[i];
                g[i] *= -a->value[i] / (bv * bv);
            }
            b->accumulate_grad(g);
        }
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& v : out) v += s;
    return make_op(std::move(out), {a}, [a](Node& n) { a->accumulate_grad(n.grad); });
}

Var mul_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (auto& v : out) v *= s;
    return make_op(std::move(out), {a}, [a, s](Node& n) {
        Tensor g = n.grad;
        for (auto& v : g) v *= s;
        a->accumulate_grad(g);
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var relu(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {a}, [a](Node& n) {
        Tensor g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i)
            if (a->value[i] <= 0.0) g[i] = 0.0;
        a->accumulate_grad(g);
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out) v = 1.0 / (1.0 + std::exp(-v));
    Tensor saved = out;
    return make_op(std::move(out), {a}, [a, saved](Node& n) {
        Tensor g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= saved[i] * (1.0 - saved[i]);
        a->accumulate_grad(g);
    });
}

Var log(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out) v = std::log(v);
    return make_op(std::move(out), {a}, [a](Node& n) {
        Tensor g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] /= a->value[i];
        a->accumulate_grad(g);
    });
}

Var sqrt(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out) v = std::sqrt(v);
    Tensor saved = out;
    return make_op(std::move(out), {a}, [a, saved](Node& n) {
        Tensor g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= 0.5 / saved[i];
        a->accumulate_grad(g);
    });
}

Var reciprocal(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out) v = 1.0 / v;
    return make_op(std::move(out), {a}, [a](Node& n) {
        Tensor g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            double av = a->value[i];
            g[i] *= -1.0 / (av * av);
        }
        a->accumulate_grad(g);
    });
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out) v = v * v;
    return make_op(std::move(out), {a}, [a](Node& n) {
        Tensor g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= 2.0 * a->value[i];
        a->accumulate_grad(g);
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a->value;
    for (auto& v : out) v = std::clamp(v, lo, hi);
    return make_op(std::move(out), {a}, [a, lo, hi](Node& n) {
        Tensor g = n.grad;
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            double av = a->value[i];
            if (av < lo || av > hi) g[i] = 0.0;
        }
        a->accumulate_grad(g);
    });
}

Var sum(const Var& a) {
    Tensor out = Tensor::scalar(tensor_sum(a->value));
    return make_op(std::move(out), {a}, [a](Node& n) {
        double g = n.grad[0];
        Tensor ga(a->value.shape(), g);
        a->accumulate_grad(ga);
    });
}

Var mean(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->value.numel());
    Tensor out = Tensor::scalar(tensor_sum(a->value) * inv);
    return make_op(std::move(out), {a}, [a, inv](Node& n) {
        double g = n.grad[0] * inv;
        Tensor ga(a->value.shape(), g);
        a->accumulate_grad(ga);
    });
}

Var sum_per_sample(const Var& a) {
    const Shape s = a->value.shape();
    Tensor out(Shape{s.n, 1, 1, 1});
    const std::int64_t per = s.c * s.h * s.w;
    for (std::int64_t n = 0; n < s.n; ++n) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < per; ++i) acc += a->value[n * per + i];
        out[n] = acc;
    }
    return make_op(std::move(out), {a}, [a, per](Node& n) {
        Tensor ga(a->value.shape());
        for (std::int64_t b = 0; b < n.value.shape().n; ++b)
            for (std::int64_t i = 0; i < per; ++i) ga[b * per + i] = n.grad[b];
        a->accumulate_grad(ga);
    });
}

Var bmul(const Var& a, const Var& m) {
    const Shape sa = a->value.shape();
    const Shape sm = m->value.shape();
    bool same = sa == sm;
    bool per_sample = sm.n == sa.n && sm.c == 1 && sm.h == 1 && sm.w == 1;
    bool spatial = sm.n == sa.n && sm.c == 1 && sm.h == sa.h && sm.w == sa.w;
    if (!same && !per_sample && !spatial)
        throw DimensionError("bmul: cannot broadcast " + sm.str() + " over " + sa.str());

    auto midx = [sa, sm, same, per_sample](std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        if (same) return ((n * sm.c + c) * sm.h + h) * sm.w + w;
        if (per_sample) return n;
        return (n * sm.h + h) * sm.w + w;
    };

    Tensor out(sa);
    for (std::int64_t n = 0; n < sa.n; ++n)
        for (std::int64_t c = 0; c < sa.c; ++c)
            for (std::int64_t h = 0; h < sa.h; ++h)
                for (std::int64_t w = 0; w < sa.w; ++w)
                    out.at(n, c, h, w) = a->value.at(n, c, h, w) * m->value[midx(n, c, h, w)];

    return make_op(std::move(out), {a, m}, [a, m, midx, sa](Node& n) {
        if (a->requires_grad) {
            Tensor ga(sa);
            for (std::int64_t b = 0; b < sa.n; ++b)
                for (std::int64_t c = 0; c < sa.c; ++c)
                    for (std::int64_t h = 0; h < sa.h; ++h)
                        for (std::int64_t w = 0; w < sa.w; ++w)
                            ga.at(b, c, h, w) = n.grad.at(b, c, h, w) * m->value[midx(b, c, h, w)];
            a->accumulate_grad(ga);
        }
        if (m->requires_grad) {
            Tensor gm(m->value.shape());
            for (std::int64_t b = 0; b < sa.n; ++b)
                for (std::int64_t c = 0; c < sa.c; ++c)
                    for (std::int64_t h = 0; h < sa.h; ++h)
                        for (std::int64_t w = 0; w < sa.w; ++w)
                            gm[midx(b, c, h, w)] += n.grad.at(b, c, h, w) * a->value.at(b, c, h, w);
            m->accumulate_grad(gm);
        }
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ArgumentError("concat_channels: empty input list");
    const Shape s0 = xs[0]->value.shape();
    std::int64_t total_c = 0;
    for (const auto& x : xs) {
        const Shape s = x->value.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw DimensionError("concat_channels: incompatible shapes " + s0.str() + " vs " + s.str());
        total_c += s.c;
    }
    Tensor out(Shape{s0.n, total_c, s0.h, s0.w});
    std::int64_t c_off = 0;
    for (const auto& x : xs) {
        const Shape s = x->value.shape();
        for (std::int64_t n = 0; n < s.n; ++n)
            for (std::int64_t c = 0; c < s.c; ++c)
                for (std::int64_t h = 0; h < s.h; ++h)
                    for (std::int64_t w = 0; w < s.w; ++w)
                        out.at(n, c_off + c, h, w) = x->value.at(n, c, h, w);
        c_off += s.c;
    }
    return make_op(std::move(out), xs, [xs](Node& n) {
        std::int64_t off = 0;
        for (const auto& x : xs) {
            const Shape s = x->value.shape();
            if (x->requires_grad) {
                Tensor gx(s);
                for (std::int64_t b = 0; b < s.n; ++b)
                    for (std::int64_t c = 0; c < s.c; ++c)
                        for (std::int64_t h = 0; h < s.h; ++h)
                            for (std::int64_t w = 0; w < s.w; ++w)
                                gx.at(b, c, h, w) = n.grad.at(b, off + c, h, w);
                x->accumulate_grad(gx);
            }
            off += s.c;
        }
    });
}

namespace {

struct ConvDims {
    std::int64_t n, in_c, in_h, in_w;
    std::int64_t out_c, kh, kw;
    std::int64_t out_h, out_w;
    int stride, pad, dilation;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad, int dilation) {
    ConvDims d;
    const Shape sx = x.shape(), sw = w.shape();
    d.n = sx.n;
    d.in_c = sx.c;
    d.in_h = sx.h;
    d.in_w = sx.w;
    d.out_c = sw.n;
    d.kh = sw.h;
    d.kw = sw.w;
    d.stride = stride;
    d.pad = pad;
    d.dilation = dilation;
    if (sw.c != sx.c)
        throw DimensionError("conv2d: input channels " + std::to_string(sx.c) + " != weight channels " +
                             std::to_string(sw.c));
    d.out_h = (d.in_h + 2 * pad - dilation * (d.kh - 1) - 1) / stride + 1;
    d.out_w = (d.in_w + 2 * pad - dilation * (d.kw - 1) - 1) / stride + 1;
    if (d.out_h <= 0 || d.out_w <= 0)
        throw DimensionError("conv2d: empty output for input " + sx.str());
    return d;
}

void im2col(const double* x, const ConvDims& d, std::int64_t sample, double* col) {
    const std::int64_t ohw = d.out_h * d.out_w;
    const double* xs = x + sample * d.in_c * d.in_h * d.in_w;
    std::int64_t r = 0;
    for (std::int64_t c = 0; c < d.in_c; ++c)
        for (std::int64_t kh = 0; kh < d.kh; ++kh)
            for (std::int64_t kw = 0; kw < d.kw; ++kw, ++r) {
                double* row = col + r * ohw;
                for (std::int64_t oy = 0; oy < d.out_h; ++oy) {
                    std::int64_t y = oy * d.stride - d.pad + kh * d.dilation;
                    bool y_in = y >= 0 && y < d.in_h;
                    for (std::int64_t ox = 0; ox < d.out_w; ++ox) {
                        std::int64_t xcoord = ox * d.stride - d.pad + kw * d.dilation;
                        row[oy * d.out_w + ox] =
                            (y_in && xcoord >= 0 && xcoord < d.in_w) ? xs[(c * d.in_h + y) * d.in_w + xcoord] : 0.0;
                    }
                }
            }
}

void col2im_accumulate(const double* col, const ConvDims& d, std::int64_t sample, double* gx) {
    const std::int64_t ohw = d.out_h * d.out_w;
    double* gs = gx + sample * d.in_c * d.in_h * d.in_w;
    std::int64_t r = 0;
    for (std::int64_t c = 0; c < d.in_c; ++c)
        for (std::int64_t kh = 0; kh < d.kh; ++kh)
            for (std::int64_t kw = 0; kw < d.kw; ++kw, ++r) {
                const double* row = col + r * ohw;
                for (std::int64_t oy = 0; oy < d.out_h; ++oy) {
                    std::int64_t y = oy * d.stride - d.pad + kh * d.dilation;
                    if (y < 0 || y >= d.in_h) continue;
                    for (std::int64_t ox = 0; ox < d.out_w; ++ox) {
                        std::int64_t xcoord = ox * d.stride - d.pad + kw * d.dilation;
                        if (xcoord < 0 || xcoord >= d.in_w) continue;
                        gs[(c * d.in_h + y) * d.in_w + xcoord] += row[oy * d.out_w + ox];
                    }
                }
            }
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int dilation) {
    const ConvDims d = conv_dims(x->value, w->value, stride, pad, dilation);
    if (b && b->value.numel() != d.out_c)
        throw DimensionError("conv2d: bias size " + std::to_string(b->value.numel()) + " != out channels " +
                             std::to_string(d.out_c));

    const std::int64_t ckk = d.in_c * d.kh * d.kw;
    const std::int64_t ohw = d.out_h * d.out_w;
    Tensor out(Shape{d.n, d.out_c, d.out_h, d.out_w});
    std::vector<double> col(static_cast<std::size_t>(ckk * ohw));
    ConstMapRM wmat(w->value.data(), d.out_c, ckk);
    for (std::int64_t s = 0; s < d.n; ++s) {
        im2col(x->value.data(), d, s, col.data());
        ConstMapRM cmat(col.data(), ckk, ohw);
        MapRM omat(out.data() + s * d.out_c * ohw, d.out_c, ohw);
        omat.noalias() = wmat * cmat;
        if (b)
            for (std::int64_t oc = 0; oc < d.out_c; ++oc) omat.row(oc).array() += b->value[oc];
    }

    std::vector<Var> inputs{x, w};
    if (b) inputs.push_back(b);
    return make_op(std::move(out), std::move(inputs), [x, w, b, d, ckk, ohw](Node& n) {
        ConstMapRM wmat(w->value.data(), d.out_c, ckk);
        std::vector<double> col(static_cast<std::size_t>(ckk * ohw));
        Tensor gw, gx;
        if (w->requires_grad) gw = Tensor::zeros(w->value.shape());
        if (x->requires_grad) gx = Tensor::zeros(x->value.shape());
        Tensor gb;
        if (b && b->requires_grad) gb = Tensor::zeros(b->value.shape());
        std::vector<double> gcol(static_cast<std::size_t>(ckk * ohw));
        for (std::int64_t s = 0; s < d.n; ++s) {
            ConstMapRM gout(n.grad.data() + s * d.out_c * ohw, d.out_c, ohw);
            if (w->requires_grad) {
                im2col(x->value.data(), d, s, col.data());
                ConstMapRM cmat(col.data(), ckk, ohw);
                MapRM gwmat(gw.data(), d.out_c, ckk);
                gwmat.noalias() += gout * cmat.transpose();
            }
            if (x->requires_grad) {
                MapRM gcmat(gcol.data(), ckk, ohw);
                gcmat.noalias() = wmat.transpose() * gout;
                col2im_accumulate(gcol.data(), d, s, gx.data());
            }
            if (b && b->requires_grad)
                for (std::int64_t oc = 0; oc < d.out_c; ++oc) gb[oc] += gout.row(oc).sum();
        }
        if (x->requires_grad) x->accumulate_grad(gx);
        if (w->requires_grad) w->accumulate_grad(gw);
        if (b && b->requires_grad) b->accumulate_grad(gb);
    });
}

Var maxpool2x2(const Var& x) {
    const Shape s = x->value.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw DimensionError("maxpool2x2: odd spatial size " + s.str());
    const std::int64_t oh = s.h / 2, ow = s.w / 2;
    Tensor out(Shape{s.n, s.c, oh, ow});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
    std::int64_t o = 0;
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox, ++o) {
                    double best = -1e300;
                    std::int64_t best_idx = 0;
                    for (std::int64_t dy = 0; dy < 2; ++dy)
                        for (std::int64_t dx = 0; dx < 2; ++dx) {
                            std::int64_t idx = x->value.index(n, c, 2 * oy + dy, 2 * ox + dx);
                            double v = x->value[idx];
                            if (v > best) {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    out[o] = best;
                    argmax[static_cast<std::size_t>(o)] = best_idx;
                }
    return make_op(std::move(out), {x}, [x, argmax](Node& n) {
        Tensor gx = Tensor::zeros(x->value.shape());
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) gx[argmax[static_cast<std::size_t>(i)]] += n.grad[i];
        x->accumulate_grad(gx);
    });
}

Var local_max3(const Var& x) {
    const Shape s = x->value.shape();
    Tensor out(s);
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
    std::int64_t o = 0;
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t w = 0; w < s.w; ++w, ++o) {
                    double best = -1e300;
                    std::int64_t best_idx = 0;
                    for (std::int64_t yy = std::max<std::int64_t>(0, y - 1); yy <= std::min(s.h - 1, y + 1); ++yy)
                        for (std::int64_t xx = std::max<std::int64_t>(0, w - 1); xx <= std::min(s.w - 1, w + 1); ++xx) {
                            std::int64_t idx = x->value.index(n, c, yy, xx);
                            double v = x->value[idx];
                            if (v > best) {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    out[o] = best;
                    argmax[static_cast<std::size_t>(o)] = best_idx;
                }
    return make_op(std::move(out), {x}, [x, argmax](Node& n) {
        Tensor gx = Tensor::zeros(x->value.shape());
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) gx[argmax[static_cast<std::size_t>(i)]] += n.grad[i];
        x->accumulate_grad(gx);
    });
}

Var upsample_bilinear(const Var& x, std::int64_t out_h, std::int64_t out_w) {
    const Shape s = x->value.shape();
    if (s.h == out_h && s.w == out_w) {
        // Identity resize still creates a distinct node so callers can treat
        // the result uniformly.
        Tensor out = x->value;
        return make_op(std::move(out), {x}, [x](Node& n) { x->accumulate_grad(n.grad); });
    }
    Tensor out = resize_bilinear(x->value, out_h, out_w);
    return make_op(std::move(out), {x}, [x, s, out_h, out_w](Node& n) {
        Tensor gx = Tensor::zeros(s);
        const double sy = static_cast<double>(s.h) / static_cast<double>(out_h);
        const double sx = static_cast<double>(s.w) / static_cast<double>(out_w);
        for (std::int64_t b = 0; b < s.n; ++b)
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
                        double g = n.grad.at(b, c, oy, ox);
                        gx.at(b, c, y0c, x0c) += g * (1.0 - wy) * (1.0 - wx);
                        gx.at(b, c, y0c, x1c) += g * (1.0 - wy) * wx;
                        gx.at(b, c, y1c, x0c) += g * wy * (1.0 - wx);
                        gx.at(b, c, y1c, x1c) += g * wy * wx;
                    }
                }
        x->accumulate_grad(gx);
    });
}

} // namespace ag

} // namespace dbd
