#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dbd/checkpoint.hpp"
#include "dbd/data.hpp"
#include "dbd/model.hpp"

namespace dbd {

/// 1x1 feature-alignment convolution mapping student channels into a
/// teacher's channel space. Owns its parameters so they can sit on a
/// separate optimizer.
struct Projector {
    ParamStore params;
    Conv2d conv;

    static Projector create(const std::string& name, std::int64_t in_channels, std::int64_t out_channels,
                            std::uint64_t seed);
    Var operator()(const Var& x) const { return conv(x); }
    std::int64_t out_channels() const { return conv.out_channels(); }
};

/// Frozen provider of depth features (for feature distillation) and depth
/// pseudo-labels (for the response-distilled baseline).
class DepthTeacher {
public:
    virtual ~DepthTeacher() = default;
    /// Features computed from the record's ground-truth depth map, spatially
    /// downsampled 2^(level+1) like the matching encoder stage.
    virtual Tensor features(const SampleRecord& record, int level) const = 0;
    /// Normalized inverse depth at the record's resolution.
    virtual Tensor pseudo_label(const SampleRecord& record) const = 0;
    virtual std::int64_t feature_channels() const = 0;
    virtual std::uint64_t parameter_hash() const = 0;
};

struct DistillConfig {
    std::string depth_teacher_source = "synthetic_oracle"; // synthetic_oracle | external_checkpoint
    std::string defocus_teacher_checkpoint;
    std::string depth_teacher_checkpoint;
    int depth_teacher_channels = 8;
    bool multi_level_taps = false; // per-stage taps with per-stage projectors
    std::optional<double> beta_override;
    bool eps_stabilized_norm = false;
    std::string rdffnet_l2 = "normalized"; // normalized | mse
    bool warm_start_from_teacher = false;

    void validate() const;
    DepthL2Mode rdffnet_mode() const;
};

std::shared_ptr<DepthTeacher> make_depth_teacher(const std::string& source, const DistillConfig& config,
                                                 int num_levels,
                                                 const std::filesystem::path& checkpoint_path = {});

/// Serializes a frozen depth teacher so it can round-trip through the
/// external_checkpoint source.
void save_depth_teacher(const std::filesystem::path& path, const DepthTeacher& teacher);

/// Frozen models feeding stage-2 distillation.
struct TeacherBundle {
    Model defocus_teacher;
    std::shared_ptr<DepthTeacher> depth_teacher;
};

struct TrainConfig {
    int batch_size = 6;
    int max_epochs = 75;
    double lr_model = 1e-4;
    double lr_poly_power = 0.9;
    double lr_projector = 1e-1;
    double wd_projector = 5e-4;
    std::uint64_t seed = 0;
    std::string stage1_loss = "bce_and_edge"; // bce | bce_and_edge
    std::string stage2_loss = "bce_and_edge";
    double lambda_edge = 0.5;
    double rdffnet_lambda = 1.0;
    bool augment_enabled = true;
    double flip_prob = 0.5;
    double jitter = 0.2;

    void validate() const;
    double stage_lambda(const std::string& stage_loss) const;
};

/// Per-epoch training record; these rows form the history log.
struct EpochStats {
    int epoch = 0;
    double lr = 0;
    double beta = 0;
    double total = 0;
    double bce = 0;         // summed over final + side maps, mean over steps
    double edge_raw = 0;    // unweighted dice-edge sum over maps
    double lambda_edge = 0; // weight applied to the edge term
    double distill = 0;     // feature-distillation loss
    double beta_distill = 0;
    double depth_term = 0;  // response-baseline depth-regression total

    std::string to_json_line() const;
};

using HistorySink = std::function<void(const EpochStats&)>;

struct TrainOptions {
    std::filesystem::path checkpoint_out; // written after every epoch when set
    HistorySink sink;
    std::filesystem::path resume_checkpoint;
    int stop_after_epoch = 0; // early stop without shortening the lr horizon
    /// Called once per run with the parameter sets each optimizer owns
    /// (model set, projector set; the latter is empty outside stage 2).
    std::function<void(const std::vector<Var>&, const std::vector<Var>&)> on_optimizers;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int last_epoch = 0;
};

/// Supervised training of the detector (also produces the stage-2 teacher).
TrainResult train_stage1(Model& model, const std::vector<SampleRecord>& dataset, const TrainConfig& config,
                         const TrainOptions& options = {});

/// Joint distillation from the frozen defocus teacher and the frozen depth
/// teacher into the student; projectors ride a separate fixed-rate optimizer.
TrainResult train_stage2(Model& student, const TeacherBundle& teachers, const std::vector<SampleRecord>& dataset,
                         const TrainConfig& config, const DistillConfig& distill,
                         const TrainOptions& options = {});

/// Response-based baseline: single-stage training against depth pseudo-labels
/// on dedicated depth heads.
TrainResult train_rdffnet(Model& model, const DepthTeacher& depth_teacher,
                          const std::vector<SampleRecord>& dataset, const TrainConfig& config,
                          const DistillConfig& distill, const TrainOptions& options = {});

/// Deterministic augmentation stream for one (seed, epoch, slot) triple; the
/// train loops and tests share this keying.
std::uint64_t augment_seed(std::uint64_t seed, int epoch, std::int64_t slot);

/// Model-resolution view of a record used by the train loops: resize only
/// when augmentation is disabled, full augment otherwise.
SampleRecord training_view(const SampleRecord& record, const TrainConfig& config, const ModelConfig& model_cfg,
                           int epoch, std::int64_t slot);

} // namespace dbd
