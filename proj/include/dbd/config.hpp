#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbd/data.hpp"
#include "dbd/distill.hpp"
#include "dbd/eval.hpp"
#include "dbd/model.hpp"

namespace dbd {

struct DataConfig {
    std::string dataset_root;
    std::string manifest;
    bool polarity_invert = false;
};

struct SynthConfig {
    int n = 16;
    std::int64_t height = 64;
    std::int64_t width = 64;
    bool homogeneous_at_focus = true;
    std::vector<LensParams> regimes; // defaults to f/1.8 and f/16
};

/// Fully-resolved run description: one file drives every command.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    ModelConfig model;
    TrainConfig train;
    DistillConfig distill;
    DataConfig data;
    MetricConfig eval;
    SynthConfig synth;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Writes the resolved configuration next to a command's outputs.
    void write_echo(const std::filesystem::path& dir) const;
};

LensParams lens_from_json(const nlohmann::json& j);
nlohmann::json lens_to_json(const LensParams& lens);

/// Parses regime shorthand like "f1.8,f16" into lens parameter sets.
std::vector<LensParams> parse_regimes(const std::string& spec);

} // namespace dbd
