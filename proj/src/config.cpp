#include "dbd/config.hpp"

#include <fstream>
#include <sstream>

#include "dbd/checkpoint.hpp"

namespace dbd {

namespace {

TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig t;
    t.batch_size = j.value("batch_size", t.batch_size);
    t.max_epochs = j.value("max_epochs", t.max_epochs);
    t.lr_model = j.value("lr_model", t.lr_model);
    t.lr_poly_power = j.value("lr_poly_power", t.lr_poly_power);
    t.lr_projector = j.value("lr_projector", t.lr_projector);
    t.wd_projector = j.value("wd_projector", t.wd_projector);
    t.stage1_loss = j.value("stage1_loss", t.stage1_loss);
    t.stage2_loss = j.value("stage2_loss", t.stage2_loss);
    t.lambda_edge = j.value("lambda_edge", t.lambda_edge);
    t.rdffnet_lambda = j.value("rdffnet_lambda", t.rdffnet_lambda);
    t.augment_enabled = j.value("augment", t.augment_enabled);
    t.flip_prob = j.value("flip_prob", t.flip_prob);
    t.jitter = j.value("jitter", t.jitter);
    return t;
}

nlohmann::json train_to_json(const TrainConfig& t) {
    return {{"batch_size", t.batch_size},
            {"max_epochs", t.max_epochs},
            {"lr_model", t.lr_model},
            {"lr_poly_power", t.lr_poly_power},
            {"lr_projector", t.lr_projector},
            {"wd_projector", t.wd_projector},
            {"stage1_loss", t.stage1_loss},
            {"stage2_loss", t.stage2_loss},
            {"lambda_edge", t.lambda_edge},
            {"rdffnet_lambda", t.rdffnet_lambda},
            {"augment", t.augment_enabled},
            {"flip_prob", t.flip_prob},
            {"jitter", t.jitter}};
}

DistillConfig distill_from_json(const nlohmann::json& j) {
    DistillConfig d;
    d.depth_teacher_source = j.value("depth_teacher_source", d.depth_teacher_source);
    d.defocus_teacher_checkpoint = j.value("defocus_teacher_checkpoint", d.defocus_teacher_checkpoint);
    d.depth_teacher_checkpoint = j.value("depth_teacher_checkpoint", d.depth_teacher_checkpoint);
    d.depth_teacher_channels = j.value("depth_teacher_channels", d.depth_teacher_channels);
    d.multi_level_taps = j.value("multi_level_taps", d.multi_level_taps);
    if (j.contains("beta_override") && !j["beta_override"].is_null())
        d.beta_override = j["beta_override"].get<double>();
    d.eps_stabilized_norm = j.value("eps_stabilized_norm", d.eps_stabilized_norm);
    d.rdffnet_l2 = j.value("rdffnet_l2", d.rdffnet_l2);
    d.warm_start_from_teacher = j.value("warm_start_from_teacher", d.warm_start_from_teacher);
    return d;
}

nlohmann::json distill_to_json(const DistillConfig& d) {
    nlohmann::json j{{"depth_teacher_source", d.depth_teacher_source},
                     {"defocus_teacher_checkpoint", d.defocus_teacher_checkpoint},
                     {"depth_teacher_checkpoint", d.depth_teacher_checkpoint},
                     {"depth_teacher_channels", d.depth_teacher_channels},
                     {"multi_level_taps", d.multi_level_taps},
                     {"eps_stabilized_norm", d.eps_stabilized_norm},
                     {"rdffnet_l2", d.rdffnet_l2},
                     {"warm_start_from_teacher", d.warm_start_from_teacher}};
    if (d.beta_override) j["beta_override"] = *d.beta_override;
    return j;
}

MetricConfig eval_from_json(const nlohmann::json& j) {
    MetricConfig m;
    m.beta_squared = j.value("beta_squared", m.beta_squared);
    m.binarize_threshold = j.value("binarize_threshold", m.binarize_threshold);
    m.positive_class = j.value("positive_class", m.positive_class);
    if (j.contains("thresholds_for_pr")) m.pr_thresholds = j["thresholds_for_pr"].get<std::vector<double>>();
    return m;
}

nlohmann::json eval_to_json(const MetricConfig& m) {
    nlohmann::json j{{"beta_squared", m.beta_squared},
                     {"binarize_threshold", m.binarize_threshold},
                     {"positive_class", m.positive_class}};
    if (!m.pr_thresholds.empty()) j["thresholds_for_pr"] = m.pr_thresholds;
    return j;
}

} // namespace

LensParams lens_from_json(const nlohmann::json& j) {
    LensParams lens;
    lens.focal_length_mm = j.value("focal_length_mm", lens.focal_length_mm);
    lens.f_number = j.value("f_number", lens.f_number);
    lens.focus_distance = j.value("focus_distance", lens.focus_distance);
    lens.sensor_scale = j.value("sensor_scale", lens.sensor_scale);
    lens.coc_in_focus_threshold = j.value("coc_in_focus_threshold", lens.coc_in_focus_threshold);
    return lens;
}

nlohmann::json lens_to_json(const LensParams& lens) {
    return {{"focal_length_mm", lens.focal_length_mm},
            {"f_number", lens.f_number},
            {"focus_distance", lens.focus_distance},
            {"sensor_scale", lens.sensor_scale},
            {"coc_in_focus_threshold", lens.coc_in_focus_threshold}};
}

std::vector<LensParams> parse_regimes(const std::string& spec) {
    std::vector<LensParams> regimes;
    std::istringstream is(spec);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (tok.empty()) continue;
        if (tok[0] != 'f') throw ConfigError("bad regime token '" + tok + "' (expected e.g. f1.8)");
        LensParams lens;
        try {
            lens.f_number = std::stod(tok.substr(1));
        } catch (const std::exception&) {
            throw ConfigError("bad regime token '" + tok + "'");
        }
        lens.validate();
        regimes.push_back(lens);
    }
    if (regimes.empty()) throw ConfigError("no lens regimes in '" + spec + "'");
    return regimes;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("model")) cfg.model = model_config_from_json(j["model"]);
    if (j.contains("train")) cfg.train = train_from_json(j["train"]);
    if (j.contains("distill")) cfg.distill = distill_from_json(j["distill"]);
    if (j.contains("data")) {
        cfg.data.dataset_root = j["data"].value("dataset_root", "");
        cfg.data.manifest = j["data"].value("manifest", "");
        cfg.data.polarity_invert = j["data"].value("polarity_invert", false);
    }
    if (j.contains("eval")) cfg.eval = eval_from_json(j["eval"]);
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        cfg.synth.n = s.value("n", cfg.synth.n);
        cfg.synth.height = s.value("height", cfg.synth.height);
        cfg.synth.width = s.value("width", cfg.synth.width);
        cfg.synth.homogeneous_at_focus = s.value("homogeneous_at_focus", cfg.synth.homogeneous_at_focus);
        if (s.contains("regimes"))
            for (const auto& r : s["regimes"]) cfg.synth.regimes.push_back(lens_from_json(r));
    }
    if (cfg.synth.regimes.empty()) {
        LensParams shallow;
        shallow.f_number = 1.8;
        LensParams wide;
        wide.f_number = 16.0;
        cfg.synth.regimes = {shallow, wide};
    }
    cfg.train.seed = cfg.seed;
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json regimes = nlohmann::json::array();
    for (const auto& lens : synth.regimes) regimes.push_back(lens_to_json(lens));
    return {{"seed", seed},
            {"output_dir", output_dir},
            {"model", model_config_to_json(model)},
            {"train", train_to_json(train)},
            {"distill", distill_to_json(distill)},
            {"data",
             {{"dataset_root", data.dataset_root},
              {"manifest", data.manifest},
              {"polarity_invert", data.polarity_invert}}},
            {"eval", eval_to_json(eval)},
            {"synth",
             {{"n", synth.n},
              {"height", synth.height},
              {"width", synth.width},
              {"homogeneous_at_focus", synth.homogeneous_at_focus},
              {"regimes", regimes}}}};
}

void RunConfig::write_echo(const std::filesystem::path& dir) const {
    std::ofstream os(dir / "config.resolved.json");
    if (!os) throw IoError("cannot write config echo under " + dir.string());
    os << to_json().dump(2) << "\n";
}

} // namespace dbd
