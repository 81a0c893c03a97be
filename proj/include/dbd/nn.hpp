#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbd/autograd.hpp"
#include "dbd/rng.hpp"

namespace dbd {

/// Ordered registry of named trainable leaves. Order is creation order, which
/// is deterministic for a fixed build path, so optimizer state and checkpoints
/// line up run to run.
class ParamStore {
public:
    Var add(const std::string& name, Tensor init);
    Var find(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<Var>& all() const { return params_; }
    std::vector<std::string> names() const;
    std::int64_t total_elements() const;

    void zero_grad();

private:
    std::vector<Var> params_;
};

/// He-normal initialization for a conv weight [out_c, in_c, kh, kw].
Tensor he_normal_init(Shape shape, RandomStream& rng);

/// Convolution layer with owned weight/bias parameters. Padding defaults to
/// "same" for odd kernels (pad = dilation*(k-1)/2).
struct Conv2d {
    Var weight;
    Var bias;
    int stride = 1;
    int pad = 0;
    int dilation = 1;

    static Conv2d create(ParamStore& store, const std::string& name, std::int64_t in_c, std::int64_t out_c,
                         int kernel, RandomStream& rng, int dilation = 1, bool with_bias = true);

    Var operator()(const Var& x) const;
    std::int64_t out_channels() const { return weight->value.shape().n; }
};

/// Poly learning-rate policy: lr * (1 - iter/max_iter)^power.
double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power);

/// Adam with optional decoupled-from-nothing classic L2 weight decay (decay
/// added to the gradient before the moment updates).
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Var> params, double lr, double weight_decay = 0.0, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void step(double lr_now);
    void step() { step(lr_); }
    void zero_grad();

    double base_lr() const { return lr_; }
    std::int64_t step_count() const { return step_count_; }
    const std::vector<Var>& params() const { return params_; }

    // Moment access for checkpoint round-trips.
    const Tensor& moment1(std::size_t i) const { return m_[i]; }
    const Tensor& moment2(std::size_t i) const { return v_[i]; }
    void restore_state(std::size_t i, Tensor m, Tensor v);
    void set_step_count(std::int64_t t) { step_count_ = t; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    double lr_, weight_decay_, beta1_, beta2_, eps_;
    std::int64_t step_count_ = 0;
};

} // namespace dbd
