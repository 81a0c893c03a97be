#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dbd/model.hpp"

namespace dbd {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// On-disk container: a JSON metadata block plus named double tensors.
/// Also used for frozen depth-teacher exports.
struct Archive {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

/// Model checkpoint: config echo + named parameters (+ optimizer moments and
/// the epoch counter when resuming matters).
void save_checkpoint(const std::filesystem::path& path, const Model& model, nlohmann::json extra_meta = {},
                     const AdamOptimizer* optimizer = nullptr, int epoch = 0);

struct LoadedCheckpoint {
    Model model;
    nlohmann::json meta;
    int epoch = 0;
    Archive raw;
};

/// Rebuilds the model from the embedded config and restores parameters.
/// When `expected` is given, any config mismatch fails the load.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ModelConfig>& expected = std::nullopt);

/// Restores Adam moments saved alongside the parameters; throws LoadError if
/// the checkpoint carries no optimizer state.
void restore_optimizer(AdamOptimizer& optimizer, const LoadedCheckpoint& ckpt, const Model& model);

/// Combined parameter-bytes hash, for frozen-model assertions.
std::uint64_t model_param_hash(const Model& model);

} // namespace dbd
