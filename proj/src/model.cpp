#include "dbd/model.hpp"

#include <map>

namespace dbd {

void ModelConfig::validate() const {
    if (num_decoder_levels < 1) throw ConfigError("num_decoder_levels must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    std::int64_t div = std::int64_t{1} << num_decoder_levels;
    if (input_h <= 0 || input_w <= 0 || input_h % div != 0 || input_w % div != 0)
        throw ConfigError("input size " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                          " must be divisible by 2^" + std::to_string(num_decoder_levels));
    if (variant != "dffnet" && variant != "pdnet")
        throw ConfigError("unknown variant: " + variant);
}

namespace {

std::map<std::string, BackboneFactory>& backbone_registry() {
    static std::map<std::string, BackboneFactory> registry;
    return registry;
}

std::vector<std::int64_t> stage_widths(const ModelConfig& cfg, int scale) {
    std::vector<std::int64_t> widths;
    for (int k = 0; k < cfg.num_decoder_levels; ++k)
        widths.push_back(static_cast<std::int64_t>(cfg.base_channels) * scale * (std::int64_t{1} << std::min(k, 3)));
    return widths;
}

/// Four plain conv+pool stages. Small enough for CPU test runs.
class TinyBackbone : public Backbone {
public:
    TinyBackbone(ParamStore& store, const ModelConfig& cfg, RandomStream& rng) : widths_(stage_widths(cfg, 1)) {
        std::int64_t in_c = 3;
        for (int k = 0; k < cfg.num_decoder_levels; ++k) {
            convs_.push_back(Conv2d::create(store, "encoder.stage" + std::to_string(k) + ".conv", in_c,
                                            widths_[static_cast<std::size_t>(k)], 3, rng));
            in_c = widths_[static_cast<std::size_t>(k)];
        }
    }

    std::vector<Var> forward(const Var& x) const override {
        std::vector<Var> stages;
        Var cur = x;
        for (const auto& conv : convs_) {
            cur = ag::maxpool2x2(ag::relu(conv(cur)));
            stages.push_back(cur);
        }
        return stages;
    }

    const std::vector<std::int64_t>& stage_channels() const override { return widths_; }

private:
    std::vector<Conv2d> convs_;
    std::vector<std::int64_t> widths_;
};

/// Residual stages, two blocks each.
class MediumBackbone : public Backbone {
public:
    MediumBackbone(ParamStore& store, const ModelConfig& cfg, RandomStream& rng) : widths_(stage_widths(cfg, 2)) {
        stem_ = Conv2d::create(store, "encoder.stem", 3, widths_[0] / 2, 3, rng);
        std::int64_t in_c = widths_[0] / 2;
        for (int k = 0; k < cfg.num_decoder_levels; ++k) {
            std::int64_t out_c = widths_[static_cast<std::size_t>(k)];
            std::string base = "encoder.stage" + std::to_string(k);
            Stage st;
            st.conv1a = Conv2d::create(store, base + ".block0.conv0", in_c, out_c, 3, rng);
            st.conv1b = Conv2d::create(store, base + ".block0.conv1", out_c, out_c, 3, rng);
            st.proj = Conv2d::create(store, base + ".block0.proj", in_c, out_c, 1, rng, 1, false);
            st.conv2a = Conv2d::create(store, base + ".block1.conv0", out_c, out_c, 3, rng);
            st.conv2b = Conv2d::create(store, base + ".block1.conv1", out_c, out_c, 3, rng);
            stages_.push_back(std::move(st));
            in_c = out_c;
        }
    }

    std::vector<Var> forward(const Var& x) const override {
        std::vector<Var> out;
        Var cur = ag::relu(stem_(x));
        for (const auto& st : stages_) {
            Var b0 = ag::relu(ag::add(st.conv1b(ag::relu(st.conv1a(cur))), st.proj(cur)));
            Var b1 = ag::relu(ag::add(st.conv2b(ag::relu(st.conv2a(b0))), b0));
            cur = ag::maxpool2x2(b1);
            out.push_back(cur);
        }
        return out;
    }

    const std::vector<std::int64_t>& stage_channels() const override { return widths_; }

private:
    struct Stage {
        Conv2d conv1a, conv1b, proj, conv2a, conv2b;
    };
    Conv2d stem_;
    std::vector<Stage> stages_;
    std::vector<std::int64_t> widths_;
};

struct BuiltinRegistration {
    BuiltinRegistration() {
        register_backbone("tiny", [](ParamStore& s, const ModelConfig& c, RandomStream& r) {
            return std::make_unique<TinyBackbone>(s, c, r);
        });
        register_backbone("medium", [](ParamStore& s, const ModelConfig& c, RandomStream& r) {
            return std::make_unique<MediumBackbone>(s, c, r);
        });
    }
};
const BuiltinRegistration g_builtin_registration;

} // namespace

void register_backbone(const std::string& token, BackboneFactory factory) {
    backbone_registry()[token] = std::move(factory);
}

bool backbone_registered(const std::string& token) {
    return backbone_registry().count(token) > 0;
}

Var spatial_attention(const Var& prediction, const Var& features) {
    const Shape sp = prediction->value.shape();
    const Shape sf = features->value.shape();
    if (sp.c != 1 || sp.n != sf.n || sp.h != sf.h || sp.w != sf.w)
        throw DimensionError("spatial_attention: map " + sp.str() + " does not match features " + sf.str());
    return ag::bmul(features, prediction);
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    auto it = backbone_registry().find(config.backbone_id);
    if (it == backbone_registry().end())
        throw ConfigError("unknown backbone token: " + config.backbone_id +
                          (config.backbone_id == "large" ? " (register an external backbone first)" : ""));

    Model m;
    m.cfg_ = config;
    RandomStream rng = RandomStream(seed).fork(0x6d6f64656cull); // parameter-init stream
    m.backbone_ = it->second(m.store_, config, rng);

    const auto& enc_c = m.backbone_->stage_channels();
    const std::int64_t dec_c = config.base_channels;
    const int levels = config.num_decoder_levels;
    const bool full = config.variant == "dffnet";

    for (int k = 0; k < levels; ++k) {
        std::string base = "rfb" + std::to_string(k);
        RfbBlock rfb;
        rfb.branch_d1 = Conv2d::create(m.store_, base + ".branch_d1", enc_c[static_cast<std::size_t>(k)], dec_c, 3, rng, 1);
        rfb.branch_d3 = Conv2d::create(m.store_, base + ".branch_d3", enc_c[static_cast<std::size_t>(k)], dec_c, 3, rng, 3);
        rfb.branch_d5 = Conv2d::create(m.store_, base + ".branch_d5", enc_c[static_cast<std::size_t>(k)], dec_c, 3, rng, 5);
        rfb.shortcut = Conv2d::create(m.store_, base + ".shortcut", enc_c[static_cast<std::size_t>(k)], dec_c, 1, rng);
        rfb.fuse = Conv2d::create(m.store_, base + ".fuse", 4 * dec_c, dec_c, 1, rng);
        m.rfb_.push_back(std::move(rfb));
    }

    if (full) {
        for (int k = 0; k < levels; ++k) {
            std::string base = "dffm" + std::to_string(k);
            DffmBlock blk;
            std::int64_t in_c = dec_c * (levels - k);
            blk.reduce = Conv2d::create(m.store_, base + ".reduce", in_c, dec_c, 1, rng);
            blk.fuse = Conv2d::create(m.store_, base + ".fuse", dec_c, dec_c, 3, rng);
            m.dffm_.push_back(std::move(blk));
        }
    }

    for (int k = 0; k < levels; ++k)
        m.side_.push_back(Conv2d::create(m.store_, "side" + std::to_string(k), dec_c, 1, 1, rng));

    for (int k = 0; k + 1 < levels; ++k)
        m.agg_.push_back(Conv2d::create(m.store_, "agg" + std::to_string(k), 2 * dec_c, dec_c, 3, rng));

    m.final_head_ = Conv2d::create(m.store_, "final_head", dec_c, 1, 1, rng);

    if (config.depth_heads) {
        for (int k = 0; k < levels; ++k)
            m.depth_side_.push_back(Conv2d::create(m.store_, "depth_side" + std::to_string(k), dec_c, 1, 1, rng));
        m.depth_head_ = Conv2d::create(m.store_, "depth_head", dec_c, 1, 1, rng);
    }

    return m;
}

std::int64_t Model::final_feature_channels() const {
    return backbone_->stage_channels().back();
}

const std::vector<std::int64_t>& Model::encoder_channels() const {
    return backbone_->stage_channels();
}

void Model::copy_parameters_from(const Model& other) {
    if (!(cfg_ == other.cfg_)) throw ConfigError("copy_parameters_from: model configs differ");
    const auto& src = other.store_.all();
    const auto& dst = store_.all();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

ModelOutput Model::forward_vars(const Var& images) const {
    const Shape s = images->value.shape();
    if (s.c != 3 || s.h != cfg_.input_h || s.w != cfg_.input_w)
        throw DimensionError("forward: input " + s.str() + " does not match configured size [*,3," +
                             std::to_string(cfg_.input_h) + "," + std::to_string(cfg_.input_w) + "]");

    const int levels = cfg_.num_decoder_levels;
    const bool full = cfg_.variant == "dffnet";

    ModelOutput out;
    out.encoder.stage_features = backbone_->forward(images);
    out.encoder.final_feature = out.encoder.stage_features.back();

    std::vector<Var> refined;
    for (int k = 0; k < levels; ++k) {
        const auto& stage = out.encoder.stage_features[static_cast<std::size_t>(k)];
        const auto& rfb = rfb_[static_cast<std::size_t>(k)];
        Var cat = ag::concat_channels({ag::relu(rfb.branch_d1(stage)), ag::relu(rfb.branch_d3(stage)),
                                       ag::relu(rfb.branch_d5(stage)), ag::relu(rfb.shortcut(stage))});
        refined.push_back(ag::relu(rfb.fuse(cat)));
    }

    std::vector<Var> fused;
    if (full) {
        for (int k = 0; k < levels; ++k) {
            const Shape sk = refined[static_cast<std::size_t>(k)]->value.shape();
            std::vector<Var> parts{refined[static_cast<std::size_t>(k)]};
            for (int j = k + 1; j < levels; ++j)
                parts.push_back(ag::upsample_bilinear(refined[static_cast<std::size_t>(j)], sk.h, sk.w));
            const auto& blk = dffm_[static_cast<std::size_t>(k)];
            fused.push_back(ag::relu(blk.fuse(ag::relu(blk.reduce(ag::concat_channels(parts))))));
        }
    } else {
        fused = refined;
    }

    std::vector<Var> side_logits;
    for (int k = 0; k < levels; ++k)
        side_logits.push_back(side_[static_cast<std::size_t>(k)](fused[static_cast<std::size_t>(k)]));

    for (int k = 0; k < levels; ++k)
        out.side_predictions.push_back(
            ag::sigmoid(ag::upsample_bilinear(side_logits[static_cast<std::size_t>(k)], s.h, s.w)));

    std::vector<Var> weighted;
    for (int k = 0; k < levels; ++k) {
        if (full)
            weighted.push_back(spatial_attention(ag::sigmoid(side_logits[static_cast<std::size_t>(k)]),
                                                 fused[static_cast<std::size_t>(k)]));
        else
            weighted.push_back(fused[static_cast<std::size_t>(k)]);
    }

    Var agg = weighted.back();
    for (int k = levels - 2; k >= 0; --k) {
        const Shape sk = weighted[static_cast<std::size_t>(k)]->value.shape();
        Var up = ag::upsample_bilinear(agg, sk.h, sk.w);
        agg = ag::relu(agg_[static_cast<std::size_t>(k)](
            ag::concat_channels({weighted[static_cast<std::size_t>(k)], up})));
    }

    out.final_prediction = ag::sigmoid(ag::upsample_bilinear(final_head_(agg), s.h, s.w));

    if (cfg_.depth_heads) {
        for (int k = 0; k < levels; ++k)
            out.side_depths.push_back(ag::sigmoid(ag::upsample_bilinear(
                depth_side_[static_cast<std::size_t>(k)](fused[static_cast<std::size_t>(k)]), s.h, s.w)));
        out.final_depth = ag::sigmoid(ag::upsample_bilinear(depth_head_(agg), s.h, s.w));
    }

    return out;
}

ModelOutput Model::forward(const Tensor& images) const {
    return forward_vars(make_const(images));
}

EncoderOutput Model::encoder_features(const Tensor& images) const {
    const Shape s = images.shape();
    if (s.c != 3 || s.h != cfg_.input_h || s.w != cfg_.input_w)
        throw DimensionError("encoder_features: input " + s.str() + " does not match configured size");
    EncoderOutput out;
    out.stage_features = backbone_->forward(make_const(images));
    out.final_feature = out.stage_features.back();
    return out;
}

} // namespace dbd
