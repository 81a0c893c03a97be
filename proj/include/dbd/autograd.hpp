#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dbd/tensor.hpp"

namespace dbd {

class Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Holds the forward result and, for
/// grad-requiring nodes, the backward closure plus links to its inputs.
class Node {
public:
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::string name;
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (!grad.numel() || !(grad.shape() == value.shape()))
            grad = Tensor::zeros(value.shape());
    }
    void accumulate_grad(const Tensor& g);
};

/// Trainable leaf.
Var make_leaf(Tensor value, const std::string& name = "");
/// Non-trainable input (labels, frozen teacher features).
Var make_const(Tensor value);

/// While alive, newly created ops do not record backward state. Used for
/// frozen-teacher forward passes.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

/// Reverse-mode sweep from a scalar root. Accumulates into .grad of every
/// reachable grad-requiring node.
void backward(const Var& root);

namespace ag {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var reciprocal(const Var& a);
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);

/// Sum of all elements -> scalar.
Var sum(const Var& a);
/// Mean of all elements -> scalar.
Var mean(const Var& a);
/// Per-sample sum over (c,h,w) -> [N,1,1,1].
Var sum_per_sample(const Var& a);

/// Broadcast multiply. `m` may have shape equal to `a`, [N,1,1,1], or
/// [N,1,H,W] (broadcast over channels).
Var bmul(const Var& a, const Var& m);

Var concat_channels(const std::vector<Var>& xs);

/// 2-D convolution, zero padding, weight layout [out_c, in_c, kh, kw].
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int dilation = 1);

/// 2x2 max pooling with stride 2. Height/width must be even.
Var maxpool2x2(const Var& x);

/// 3x3 sliding-window maximum, stride 1, window clipped at borders
/// (grayscale dilation). Erosion is neg(local_max3(neg(x))).
Var local_max3(const Var& x);

/// Bilinear resize with half-pixel sampling, differentiable.
Var upsample_bilinear(const Var& x, std::int64_t out_h, std::int64_t out_w);

} // namespace ag

} // namespace dbd
