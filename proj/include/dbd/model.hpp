#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dbd/losses.hpp"
#include "dbd/nn.hpp"

namespace dbd {

struct ModelConfig {
    std::string backbone_id = "tiny"; // tiny | medium | large (external adapter)
    int num_decoder_levels = 4;
    int base_channels = 16;
    std::int64_t input_h = 320;
    std::int64_t input_w = 320;
    std::string variant = "dffnet"; // dffnet | pdnet
    bool depth_heads = false;       // extra depth classifiers for the response-distilled baseline

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Per-stage encoder activations, shallow to deep, plus the deepest feature
/// used as the distillation tap point.
struct EncoderOutput {
    std::vector<Var> stage_features;
    Var final_feature;
};

struct ModelOutput {
    Var final_prediction;             // [B,1,H,W] probabilities
    std::vector<Var> side_predictions; // one per decoder level, at label resolution
    EncoderOutput encoder;
    Var final_depth;                  // set only when depth heads are enabled
    std::vector<Var> side_depths;
};

/// Feature extractor interface. Stages are shallow to deep; each stage halves
/// the spatial resolution.
class Backbone {
public:
    virtual ~Backbone() = default;
    virtual std::vector<Var> forward(const Var& x) const = 0;
    virtual const std::vector<std::int64_t>& stage_channels() const = 0;
};

using BackboneFactory =
    std::function<std::unique_ptr<Backbone>(ParamStore&, const ModelConfig&, RandomStream&)>;

/// Adapter slot: external feature extractors can be registered under a token
/// ("large" is reserved for this) and selected through ModelConfig.
void register_backbone(const std::string& token, BackboneFactory factory);
bool backbone_registered(const std::string& token);

/// Multiplies features by a [B,1,h,w] probability map, broadcast across
/// channels. The map must already be at the features' spatial size.
Var spatial_attention(const Var& prediction, const Var& features);

class Model {
public:
    static Model build(const ModelConfig& config, std::uint64_t seed);

    ModelOutput forward(const Tensor& images) const;
    EncoderOutput encoder_features(const Tensor& images) const;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    std::int64_t param_count() const { return store_.total_elements(); }
    std::int64_t final_feature_channels() const;
    const std::vector<std::int64_t>& encoder_channels() const;

    /// Copies parameter values from another model with an identical config.
    void copy_parameters_from(const Model& other);

    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

private:
    Model() = default;

    ModelOutput forward_vars(const Var& images) const;

    ModelConfig cfg_;
    ParamStore store_;
    std::unique_ptr<Backbone> backbone_;

    struct RfbBlock {
        Conv2d branch_d1, branch_d3, branch_d5, shortcut, fuse;
    };
    struct DffmBlock {
        Conv2d reduce, fuse;
    };
    std::vector<RfbBlock> rfb_;
    std::vector<DffmBlock> dffm_;
    std::vector<Conv2d> side_;
    std::vector<Conv2d> agg_;
    Conv2d final_head_;
    std::vector<Conv2d> depth_side_;
    Conv2d depth_head_;
};

/// Convenience overloads over a full forward result.
inline Var stage1_total(const ModelOutput& out, const Var& label, const LossWeights& w) {
    return stage1_total(out.final_prediction, out.side_predictions, label, w);
}
inline Var stage2_total(const ModelOutput& out, const Var& label, const Var& distill_loss,
                        const LossWeights& w) {
    return stage2_total(out.final_prediction, out.side_predictions, label, distill_loss, w);
}
inline Var rdffnet_total(const ModelOutput& out, const Var& blur_label, const Var& depth_pseudo,
                         const LossWeights& w, DepthL2Mode mode = DepthL2Mode::NormalizedSimilarity) {
    return rdffnet_total(out.final_prediction, out.side_predictions, out.final_depth, out.side_depths,
                         blur_label, depth_pseudo, w, mode);
}

} // namespace dbd
