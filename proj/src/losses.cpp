#include "dbd/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dbd {

void LossWeights::validate(std::size_t num_side_outputs) const {
    if (lambda_edge < 0 || beta_now < 0 || rdffnet_lambda < 0)
        throw ConfigError("loss weights must be >= 0");
    for (double a : alpha_side)
        if (a < 0) throw ConfigError("alpha_side entries must be >= 0");
    for (double b : rdffnet_beta_side)
        if (b < 0) throw ConfigError("rdffnet_beta_side entries must be >= 0");
    if (alpha_side.size() != num_side_outputs)
        throw ConfigError("alpha_side has " + std::to_string(alpha_side.size()) + " entries for " +
                          std::to_string(num_side_outputs) + " side outputs");
}

Var bce_loss(const Var& pred, const Var& label) {
    check_same_shape(pred->value, label->value, "bce_loss");
    Var p = ag::clamp(pred, kBceClampEps, 1.0 - kBceClampEps);
    Var one_minus_p = ag::add_scalar(ag::neg(p), 1.0);
    Var one_minus_y = ag::add_scalar(ag::neg(label), 1.0);
    Var ll = ag::add(ag::mul(label, ag::log(p)), ag::mul(one_minus_y, ag::log(one_minus_p)));
    return ag::neg(ag::mean(ll));
}

Tensor extract_edges(const Tensor& mask, double threshold) {
    const Shape s = mask.shape();
    Tensor bin(s);
    for (std::int64_t i = 0; i < mask.numel(); ++i) bin[i] = mask[i] >= threshold ? 1.0 : 0.0;
    Tensor edge(s);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < s.h; ++y)
                for (std::int64_t x = 0; x < s.w; ++x) {
                    double lo = 1.0, hi = 0.0;
                    for (std::int64_t yy = std::max<std::int64_t>(0, y - 1); yy <= std::min(s.h - 1, y + 1); ++yy)
                        for (std::int64_t xx = std::max<std::int64_t>(0, x - 1); xx <= std::min(s.w - 1, x + 1);
                             ++xx) {
                            double v = bin.at(n, c, yy, xx);
                            lo = std::min(lo, v);
                            hi = std::max(hi, v);
                        }
                    edge.at(n, c, y, x) = hi - lo;
                }
    return edge;
}

Var soft_edges(const Var& prob) {
    Var dilation = ag::local_max3(prob);
    Var erosion = ag::neg(ag::local_max3(ag::neg(prob)));
    return ag::sub(dilation, erosion);
}

Var dice_edge_loss(const Var& pred_edge, const Var& label_edge) {
    check_same_shape(pred_edge->value, label_edge->value, "dice_edge_loss");
    Var inter = ag::sum(ag::mul(pred_edge, label_edge));
    Var num = ag::add_scalar(ag::mul_scalar(inter, 2.0), kDiceSmoothEps);
    Var den = ag::add_scalar(ag::add(ag::sum(pred_edge), ag::sum(label_edge)), kDiceSmoothEps);
    return ag::add_scalar(ag::neg(ag::div(num, den)), 1.0);
}

Var dbd_loss(const Var& pred, const Var& label, const LossWeights& weights) {
    Var bce = bce_loss(pred, label);
    if (weights.lambda_edge == 0.0) return bce;
    Var pred_edge = soft_edges(pred);
    Var label_edge = make_const(extract_edges(label->value, 0.5));
    Var edge = dice_edge_loss(pred_edge, label_edge);
    return ag::add(bce, ag::mul_scalar(edge, weights.lambda_edge));
}

namespace {

Var normalize_per_sample(const Var& x, bool eps_stabilized) {
    Var ss = ag::sum_per_sample(ag::square(x));
    if (!eps_stabilized) {
        for (std::int64_t i = 0; i < ss->value.numel(); ++i)
            if (ss->value[i] <= 0.0)
                throw NumericError("pairwise_similarity_loss: zero-norm input at sample " + std::to_string(i));
        return ag::bmul(x, ag::reciprocal(ag::sqrt(ss)));
    }
    return ag::bmul(x, ag::reciprocal(ag::sqrt(ag::add_scalar(ss, 1e-24))));
}

} // namespace

Var pairwise_similarity_loss(const Var& u, const Var& v, bool eps_stabilized) {
    check_same_shape(u->value, v->value, "pairwise_similarity_loss");
    Var u_hat = normalize_per_sample(u, eps_stabilized);
    Var v_hat = normalize_per_sample(v, eps_stabilized);
    Var per_sample = ag::sum_per_sample(ag::square(ag::sub(u_hat, v_hat)));
    double inv_batch = 1.0 / static_cast<double>(u->value.shape().n);
    return ag::mul_scalar(ag::sum(per_sample), inv_batch);
}

Var stage1_total(const Var& final_pred, const std::vector<Var>& side_preds, const Var& label,
                 const LossWeights& weights) {
    weights.validate(side_preds.size());
    Var total = dbd_loss(final_pred, label, weights);
    for (std::size_t k = 0; k < side_preds.size(); ++k)
        total = ag::add(total, ag::mul_scalar(dbd_loss(side_preds[k], label, weights), weights.alpha_side[k]));
    return total;
}

Var stage2_total(const Var& final_pred, const std::vector<Var>& side_preds, const Var& label,
                 const Var& distill_loss, const LossWeights& weights) {
    Var total = stage1_total(final_pred, side_preds, label, weights);
    return ag::add(total, ag::mul_scalar(distill_loss, weights.beta_now));
}

Var rdffnet_total(const Var& final_pred, const std::vector<Var>& side_preds, const Var& final_depth,
                  const std::vector<Var>& side_depths, const Var& blur_label, const Var& depth_pseudo_label,
                  const LossWeights& weights, DepthL2Mode mode) {
    if (!final_depth || side_depths.size() != side_preds.size())
        throw ConfigError("rdffnet_total: model does not expose depth heads");
    if (weights.rdffnet_beta_side.size() != side_depths.size())
        throw ConfigError("rdffnet_beta_side has " + std::to_string(weights.rdffnet_beta_side.size()) +
                          " entries for " + std::to_string(side_depths.size()) + " depth side outputs");

    auto depth_l2 = [&](const Var& pred) {
        if (mode == DepthL2Mode::MeanSquared) return ag::mean(ag::square(ag::sub(pred, depth_pseudo_label)));
        return pairwise_similarity_loss(pred, depth_pseudo_label, true);
    };

    Var total = stage1_total(final_pred, side_preds, blur_label, weights);
    if (weights.rdffnet_lambda == 0.0) return total;
    Var depth_term = depth_l2(final_depth);
    for (std::size_t k = 0; k < side_depths.size(); ++k)
        depth_term = ag::add(depth_term, ag::mul_scalar(depth_l2(side_depths[k]), weights.rdffnet_beta_side[k]));
    return ag::add(total, ag::mul_scalar(depth_term, weights.rdffnet_lambda));
}

double beta_schedule(int epoch, int last_epoch) {
    if (last_epoch < 1 || epoch < 1 || epoch > last_epoch)
        throw ArgumentError("beta_schedule: epoch " + std::to_string(epoch) + " outside [1," +
                            std::to_string(last_epoch) + "]");
    if (epoch <= 15) return 3.0;
    return 3.0 * (static_cast<double>(epoch - 15) / static_cast<double>(last_epoch));
}

} // namespace dbd
