#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "dbd/checkpoint.hpp"
#include "dbd/model.hpp"

#include "oracles.hpp"

using namespace dbd;

namespace {

ModelConfig tiny_config(std::int64_t hw = 64, const std::string& variant = "dffnet") {
    ModelConfig cfg;
    cfg.backbone_id = "tiny";
    cfg.num_decoder_levels = 4;
    cfg.base_channels = 8;
    cfg.input_h = hw;
    cfg.input_w = hw;
    cfg.variant = variant;
    return cfg;
}

Tensor random_images(std::int64_t b, std::int64_t hw, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    RandomStream rng(seed);
    return oracle::random_tensor(Shape{b, 3, hw, hw}, rng, lo, hi);
}

} // namespace

TEST_CASE("config validation rejects bad settings") {
    ModelConfig cfg = tiny_config();
    cfg.input_h = 60; // 60 not divisible by 16
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.variant = "resnet";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.num_decoder_levels = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.backbone_id = "unknown_token";
    CHECK_THROWS_AS(Model::build(cfg, 1), ConfigError);
}

TEST_CASE("the large token is an adapter slot") {
    ModelConfig cfg = tiny_config();
    cfg.backbone_id = "large";
    CHECK_FALSE(backbone_registered("large"));
    CHECK_THROWS_AS(Model::build(cfg, 1), ConfigError);
}

TEST_CASE("full variant emits one final and four side maps at input resolution") {
    Model model = Model::build(tiny_config(64), 7);
    Tensor images = random_images(2, 64, 1);
    ModelOutput out = model.forward(images);
    CHECK(out.final_prediction->value.shape() == Shape{2, 1, 64, 64});
    REQUIRE(out.side_predictions.size() == 4);
    for (const auto& side : out.side_predictions) CHECK(side->value.shape() == Shape{2, 1, 64, 64});
    CHECK(out.encoder.stage_features.size() == 4);
    CHECK_FALSE(out.final_depth);
}

TEST_CASE("simplified variant drops fusion and attention parameters") {
    Model full = Model::build(tiny_config(64, "dffnet"), 7);
    Model simple = Model::build(tiny_config(64, "pdnet"), 7);

    auto full_names = full.params().names();
    auto simple_names = simple.params().names();
    std::set<std::string> full_set(full_names.begin(), full_names.end());

    for (const auto& name : simple_names) {
        CHECK(full_set.count(name) == 1);
        CHECK(name.find("dffm") == std::string::npos);
        CHECK(name.find("attention") == std::string::npos);
    }
    CHECK(simple_names.size() < full_names.size());
    CHECK(simple.param_count() < full.param_count());

    for (const auto& name : full_names)
        if (name.rfind("dffm", 0) == 0) CHECK_FALSE(simple.params().contains(name));
}

TEST_CASE("identical config and seed give bit-identical parameters") {
    Model a = Model::build(tiny_config(), 42);
    Model b = Model::build(tiny_config(), 42);
    REQUIRE(a.param_count() == b.param_count());
    const auto& pa = a.params().all();
    const auto& pb = b.params().all();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name == pb[i]->name);
        CHECK(max_abs_diff(pa[i]->value, pb[i]->value) == 0.0);
    }
    Model c = Model::build(tiny_config(), 43);
    CHECK(model_param_hash(a) != model_param_hash(c));
}

TEST_CASE("forward rejects mismatched input sizes") {
    Model model = Model::build(tiny_config(64), 7);
    CHECK_THROWS_AS(model.forward(Tensor(Shape{1, 3, 32, 32})), DimensionError);
    CHECK_THROWS_AS(model.forward(Tensor(Shape{1, 1, 64, 64})), DimensionError);
}

TEST_CASE("all outputs stay in [0,1] and finite for arbitrary finite inputs") {
    Model model = Model::build(tiny_config(32), 9);
    for (double amp : {0.0, 1.0, 10.0}) {
        Tensor images = random_images(1, 32, 3, -amp, amp);
        ModelOutput out = model.forward(images);
        auto in_range = [](const Tensor& t) {
            return t.all_finite() && tensor_min(t) >= 0.0 && tensor_max(t) <= 1.0;
        };
        CHECK(in_range(out.final_prediction->value));
        for (const auto& side : out.side_predictions) CHECK(in_range(side->value));
    }
}

TEST_CASE("inference is deterministic") {
    Model model = Model::build(tiny_config(32), 11);
    Tensor images = random_images(2, 32, 5);
    ModelOutput a = model.forward(images);
    ModelOutput b = model.forward(images);
    CHECK(max_abs_diff(a.final_prediction->value, b.final_prediction->value) == 0.0);
}

TEST_CASE("encoder features alias the forward pass and end at the deepest width") {
    ModelConfig cfg = tiny_config(64);
    Model model = Model::build(cfg, 13);
    Tensor images = random_images(1, 64, 6);
    ModelOutput out = model.forward(images);
    EncoderOutput enc = model.encoder_features(images);

    CHECK(max_abs_diff(enc.final_feature->value, out.encoder.final_feature->value) == 0.0);
    // four halvings of 64 -> 4
    CHECK(enc.final_feature->value.shape().h == 4);
    CHECK(enc.final_feature->value.shape().w == 4);
    CHECK(enc.final_feature->value.shape().c == model.final_feature_channels());
    CHECK(model.final_feature_channels() == 8 * 8); // base * 2^3 at the deepest stage
    for (std::size_t k = 0; k + 1 < enc.stage_features.size(); ++k)
        CHECK(enc.stage_features[k]->value.shape().h == 2 * enc.stage_features[k + 1]->value.shape().h);
}

TEST_CASE("spatial attention weights features by the probability map") {
    RandomStream rng(17);
    Tensor features = oracle::random_tensor(Shape{1, 4, 8, 8}, rng, -1.0, 1.0);
    Tensor prob = oracle::random_tensor(Shape{1, 1, 8, 8}, rng);

    SUBCASE("unit map is the identity") {
        Var out = spatial_attention(make_const(Tensor(Shape{1, 1, 8, 8}, 1.0)), make_const(features));
        CHECK(max_abs_diff(out->value, features) == 0.0);
    }
    SUBCASE("zero map nulls the features") {
        Var out = spatial_attention(make_const(Tensor(Shape{1, 1, 8, 8}, 0.0)), make_const(features));
        CHECK(tensor_max(out->value) == 0.0);
        CHECK(tensor_min(out->value) == 0.0);
    }
    SUBCASE("random map matches the per-pixel multiply loop") {
        Var out = spatial_attention(make_const(prob), make_const(features));
        Tensor expect(features.shape());
        for (std::int64_t c = 0; c < 4; ++c)
            for (std::int64_t y = 0; y < 8; ++y)
                for (std::int64_t x = 0; x < 8; ++x)
                    expect.at(0, c, y, x) = features.at(0, c, y, x) * prob.at(0, 0, y, x);
        CHECK(max_abs_diff(out->value, expect) == 0.0);
    }
    SUBCASE("spatial mismatch is a dimension error") {
        Tensor small(Shape{1, 1, 4, 4});
        CHECK_THROWS_AS(spatial_attention(make_const(small), make_const(features)), DimensionError);
    }
}

TEST_CASE("gradients reach every trainable parameter") {
    for (const char* variant : {"dffnet", "pdnet"}) {
        Model model = Model::build(tiny_config(32, variant), 19);
        RandomStream rng(23);
        Tensor images = oracle::random_tensor(Shape{2, 3, 32, 32}, rng);
        Tensor labels = oracle::random_binary(Shape{2, 1, 32, 32}, rng);

        model.params().zero_grad();
        ModelOutput out = model.forward(images);
        LossWeights w;
        Var loss = stage1_total(out, make_const(labels), w);
        backward(loss);

        for (const auto& p : model.params().all()) {
            double grad_mag = 0.0;
            for (double g : p->grad) grad_mag += std::abs(g);
            INFO("parameter ", p->name);
            CHECK(grad_mag > 0.0);
        }
    }
}

TEST_CASE("permuting the batch permutes the outputs identically") {
    Model model = Model::build(tiny_config(32), 29);
    Tensor images = random_images(3, 32, 8);
    ModelOutput out = model.forward(images);

    Tensor permuted(images.shape());
    std::vector<std::int64_t> perm{2, 0, 1};
    std::int64_t per = 3 * 32 * 32;
    for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t i = 0; i < per; ++i) permuted[b * per + i] = images[perm[static_cast<std::size_t>(b)] * per + i];
    ModelOutput out_p = model.forward(permuted);

    std::int64_t per_out = 32 * 32;
    for (std::int64_t b = 0; b < 3; ++b)
        for (std::int64_t i = 0; i < per_out; ++i)
            CHECK(out_p.final_prediction->value[b * per_out + i] ==
                  out.final_prediction->value[perm[static_cast<std::size_t>(b)] * per_out + i]);
}

TEST_CASE("depth heads appear only when enabled") {
    ModelConfig cfg = tiny_config(32);
    cfg.depth_heads = true;
    Model model = Model::build(cfg, 31);
    Tensor images = random_images(1, 32, 9);
    ModelOutput out = model.forward(images);
    REQUIRE(out.final_depth);
    CHECK(out.final_depth->value.shape() == Shape{1, 1, 32, 32});
    CHECK(out.side_depths.size() == 4);
    CHECK(model.params().contains("depth_head.weight"));
}

TEST_CASE("checkpoints round-trip parameters and reject mismatched configs") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "dbd_test_ckpt";
    fs::create_directories(dir);
    fs::path path = dir / "model.ckpt";

    ModelConfig cfg = tiny_config(32);
    Model model = Model::build(cfg, 37);
    Tensor images = random_images(1, 32, 10);
    Tensor before = model.forward(images).final_prediction->value;

    save_checkpoint(path, model);
    LoadedCheckpoint loaded = load_checkpoint(path, cfg);
    CHECK(model_param_hash(loaded.model) == model_param_hash(model));
    Tensor after = loaded.model.forward(images).final_prediction->value;
    CHECK(max_abs_diff(before, after) == 0.0);

    ModelConfig other = cfg;
    other.base_channels = 16;
    CHECK_THROWS_AS(load_checkpoint(path, other), ConfigError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), LoadError);
    fs::remove_all(dir);
}

TEST_CASE("an externally registered backbone becomes buildable") {
    // Minimal adapter: reuse the tiny factory under a custom token.
    ModelConfig cfg = tiny_config(32);
    cfg.backbone_id = "tiny"; // template for the adapter
    register_backbone("custom_test_backbone",
                      [](ParamStore& store, const ModelConfig& mc, RandomStream& rng) -> std::unique_ptr<Backbone> {
                          class Adapter : public Backbone {
                          public:
                              Adapter(ParamStore& s, const ModelConfig& c, RandomStream& r) : widths_() {
                                  std::int64_t in_c = 3;
                                  for (int k = 0; k < c.num_decoder_levels; ++k) {
                                      std::int64_t out_c = c.base_channels * (std::int64_t{1} << std::min(k, 3));
                                      convs_.push_back(Conv2d::create(s, "encoder.adapter" + std::to_string(k),
                                                                      in_c, out_c, 3, r));
                                      widths_.push_back(out_c);
                                      in_c = out_c;
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
                          return std::make_unique<Adapter>(store, mc, rng);
                      });
    cfg.backbone_id = "custom_test_backbone";
    Model model = Model::build(cfg, 41);
    Tensor images = random_images(1, 32, 11);
    CHECK(model.forward(images).final_prediction->value.shape() == Shape{1, 1, 32, 32});
}

TEST_CASE("medium backbone builds and runs") {
    ModelConfig cfg = tiny_config(32);
    cfg.backbone_id = "medium";
    Model model = Model::build(cfg, 43);
    Model tiny = Model::build(tiny_config(32), 43);
    CHECK(model.param_count() > tiny.param_count());
    Tensor images = random_images(1, 32, 12);
    ModelOutput out = model.forward(images);
    CHECK(out.final_prediction->value.shape() == Shape{1, 1, 32, 32});
    CHECK(out.final_prediction->value.all_finite());
}
