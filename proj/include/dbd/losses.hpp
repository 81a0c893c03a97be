#pragma once

#include <vector>

#include "dbd/autograd.hpp"

namespace dbd {

/// Trade-off weights for the composite objectives.
struct LossWeights {
    double lambda_edge = 0.5;                          // edge-loss weight inside the per-map objective
    std::vector<double> alpha_side = {1, 1, 1, 1};     // per-side-output weights
    double beta_now = 0.0;                             // distillation weight for the current epoch
    double rdffnet_lambda = 1.0;                       // depth-regression weight (response-distilled baseline)
    std::vector<double> rdffnet_beta_side = {1, 1, 1, 1};

    void validate(std::size_t num_side_outputs) const;
};

/// Probability clamp applied before logs.
inline constexpr double kBceClampEps = 1e-7;
/// Additive smoothing in the dice ratio; makes both-empty score 1 (loss 0).
inline constexpr double kDiceSmoothEps = 1.0;

/// Pixel-averaged negated binary cross entropy. pred is clamped to
/// [kBceClampEps, 1-kBceClampEps] before the logs.
Var bce_loss(const Var& pred, const Var& label);

/// Hard boundary mask: binarize at `threshold` (>=), then mark pixels whose
/// clipped 3x3 neighborhood contains both classes (morphological gradient).
Tensor extract_edges(const Tensor& mask, double threshold);

/// Differentiable boundary map of a probability map: local 3x3 max minus
/// local 3x3 min (grayscale dilation minus erosion, windows clipped at
/// the border). Equals extract_edges on binary inputs.
Var soft_edges(const Var& prob);

/// 1 - Dice(pred_edge, label_edge) with additive smoothing.
Var dice_edge_loss(const Var& pred_edge, const Var& label_edge);

/// Per-map objective: bce + lambda * dice-edge between the prediction's soft
/// boundary and the label's hard boundary. lambda == 0 short-circuits to bce.
Var dbd_loss(const Var& pred, const Var& label, const LossWeights& weights);

/// Squared distance between per-sample L2-normalized tensors, mean over the
/// batch. Bounded in [0,4]; invariant to positive scaling of either side.
/// Zero-norm inputs raise NumericError unless eps_stabilized.
Var pairwise_similarity_loss(const Var& u, const Var& v, bool eps_stabilized = false);

/// Supervision total over final + weighted side outputs.
Var stage1_total(const Var& final_pred, const std::vector<Var>& side_preds, const Var& label,
                 const LossWeights& weights);

/// stage1 total plus beta-weighted distillation term.
Var stage2_total(const Var& final_pred, const std::vector<Var>& side_preds, const Var& label,
                 const Var& distill_loss, const LossWeights& weights);

enum class DepthL2Mode { NormalizedSimilarity, MeanSquared };

/// Objective of the response-distilled baseline: blur supervision plus
/// lambda-weighted depth-regression terms on the final and side depth heads.
Var rdffnet_total(const Var& final_pred, const std::vector<Var>& side_preds, const Var& final_depth,
                  const std::vector<Var>& side_depths, const Var& blur_label, const Var& depth_pseudo_label,
                  const LossWeights& weights, DepthL2Mode mode = DepthL2Mode::NormalizedSimilarity);

/// Distillation-weight schedule over epochs (1-based).
double beta_schedule(int epoch, int last_epoch);

} // namespace dbd
