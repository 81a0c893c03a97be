#include "dbd/nn.hpp"

#include <cmath>

namespace dbd {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (contains(name)) throw ArgumentError("duplicate parameter name: " + name);
    Var v = make_leaf(std::move(init), name);
    params_.push_back(v);
    return v;
}

Var ParamStore::find(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return p;
    throw ArgumentError("parameter not found: " + name);
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return true;
    return false;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->name);
    return out;
}

std::int64_t ParamStore::total_elements() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (const auto& p : params_) {
        p->ensure_grad();
        p->grad.fill(0.0);
    }
}

Tensor he_normal_init(Shape shape, RandomStream& rng) {
    Tensor t(shape);
    double fan_in = static_cast<double>(shape.c * shape.h * shape.w);
    double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : t) v = rng.normal(0.0, stddev);
    return t;
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, std::int64_t in_c, std::int64_t out_c,
                      int kernel, RandomStream& rng, int dilation, bool with_bias) {
    Conv2d layer;
    layer.dilation = dilation;
    layer.pad = dilation * (kernel - 1) / 2;
    layer.weight = store.add(name + ".weight", he_normal_init(Shape{out_c, in_c, kernel, kernel}, rng));
    if (with_bias) layer.bias = store.add(name + ".bias", Tensor::zeros(Shape{1, 1, 1, out_c}));
    return layer;
}

Var Conv2d::operator()(const Var& x) const {
    return ag::conv2d(x, weight, bias, stride, pad, dilation);
}

double poly_lr(double base_lr, std::int64_t iter, std::int64_t max_iter, double power) {
    if (max_iter <= 0) return base_lr;
    double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
    if (frac < 0.0) frac = 0.0;
    return base_lr * std::pow(frac, power);
}

AdamOptimizer::AdamOptimizer(std::vector<Var> params, double lr, double weight_decay, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(Tensor::zeros(p->value.shape()));
        v_.emplace_back(Tensor::zeros(p->value.shape()));
    }
}

void AdamOptimizer::step(double lr_now) {
    ++step_count_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Node& p = *params_[i];
        p.ensure_grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t j = 0; j < p.value.numel(); ++j) {
            double g = p.grad[j] + weight_decay_ * p.value[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            double m_hat = m[j] / bc1;
            double v_hat = v[j] / bc2;
            p.value[j] -= lr_now * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (const auto& p : params_) {
        p->ensure_grad();
        p->grad.fill(0.0);
    }
}

void AdamOptimizer::restore_state(std::size_t i, Tensor m, Tensor v) {
    check_same_shape(m, params_[i]->value, "adam moment1");
    check_same_shape(v, params_[i]->value, "adam moment2");
    m_[i] = std::move(m);
    v_[i] = std::move(v);
}

} // namespace dbd
