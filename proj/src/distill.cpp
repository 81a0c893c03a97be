#include "dbd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dbd {

namespace {

constexpr std::uint64_t kShuffleTag = 0x73687566ull;
constexpr std::uint64_t kAugmentTag = 0x61756721ull;
constexpr std::uint64_t kProjectorTag = 0x70726f6aull;
constexpr std::uint64_t kDepthTeacherSeed = 0x6470746833ull;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

Projector Projector::create(const std::string& name, std::int64_t in_channels, std::int64_t out_channels,
                            std::uint64_t seed) {
    Projector p;
    RandomStream rng(seed);
    p.conv = Conv2d::create(p.params, name, in_channels, out_channels, 1, rng);
    return p;
}

void DistillConfig::validate() const {
    if (depth_teacher_source != "synthetic_oracle" && depth_teacher_source != "external_checkpoint")
        throw ConfigError("unknown depth teacher source: " + depth_teacher_source);
    if (depth_teacher_channels < 1) throw ConfigError("depth_teacher_channels must be >= 1");
    if (rdffnet_l2 != "normalized" && rdffnet_l2 != "mse")
        throw ConfigError("unknown rdffnet_l2 mode: " + rdffnet_l2);
    if (beta_override && *beta_override < 0) throw ConfigError("beta_override must be >= 0");
}

DepthL2Mode DistillConfig::rdffnet_mode() const {
    return rdffnet_l2 == "mse" ? DepthL2Mode::MeanSquared : DepthL2Mode::NormalizedSimilarity;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (lr_model < 0 || lr_projector < 0 || wd_projector < 0) throw ConfigError("learning rates must be >= 0");
    if (lr_poly_power < 0) throw ConfigError("lr_poly_power must be >= 0");
    if (lambda_edge < 0) throw ConfigError("lambda_edge must be >= 0");
    if (rdffnet_lambda < 0) throw ConfigError("rdffnet_lambda must be >= 0");
    auto check_loss = [](const std::string& s) {
        if (s != "bce" && s != "bce_and_edge") throw ConfigError("unknown stage loss: " + s);
    };
    check_loss(stage1_loss);
    check_loss(stage2_loss);
}

double TrainConfig::stage_lambda(const std::string& stage_loss) const {
    return stage_loss == "bce_and_edge" ? lambda_edge : 0.0;
}

std::string EpochStats::to_json_line() const {
    std::ostringstream os;
    os << "{\"epoch\":" << epoch << ",\"lr\":" << fmt_double(lr) << ",\"beta\":" << fmt_double(beta)
       << ",\"total\":" << fmt_double(total) << ",\"bce\":" << fmt_double(bce)
       << ",\"edge_raw\":" << fmt_double(edge_raw) << ",\"lambda_edge\":" << fmt_double(lambda_edge)
       << ",\"distill\":" << fmt_double(distill) << ",\"beta_distill\":" << fmt_double(beta_distill)
       << ",\"depth_term\":" << fmt_double(depth_term) << "}";
    return os.str();
}

std::uint64_t augment_seed(std::uint64_t seed, int epoch, std::int64_t slot) {
    return RandomStream(seed)
        .fork(kAugmentTag, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(slot))
        .next_u64();
}

SampleRecord training_view(const SampleRecord& record, const TrainConfig& config, const ModelConfig& model_cfg,
                           int epoch, std::int64_t slot) {
    AugmentConfig aug;
    aug.out_h = model_cfg.input_h;
    aug.out_w = model_cfg.input_w;
    if (config.augment_enabled) {
        aug.flip_prob = config.flip_prob;
        aug.jitter = config.jitter;
    } else {
        aug.flip_prob = 0.0;
        aug.jitter = 0.0;
    }
    return augment(record, aug, augment_seed(config.seed, epoch, slot));
}

// ---------------------------------------------------------------------------
// Depth teacher

namespace {

Tensor avgpool_pow2(const Tensor& src, int levels) {
    const std::int64_t factor = std::int64_t{1} << levels;
    const Shape s = src.shape();
    if (s.h % factor != 0 || s.w % factor != 0)
        throw ConfigError("depth teacher: input " + s.str() + " not divisible by " + std::to_string(factor));
    Tensor out(Shape{s.n, s.c, s.h / factor, s.w / factor});
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t oy = 0; oy < out.shape().h; ++oy)
                for (std::int64_t ox = 0; ox < out.shape().w; ++ox) {
                    double acc = 0.0;
                    for (std::int64_t dy = 0; dy < factor; ++dy)
                        for (std::int64_t dx = 0; dx < factor; ++dx)
                            acc += src.at(n, c, oy * factor + dy, ox * factor + dx);
                    out.at(n, c, oy, ox) = acc * inv;
                }
    return out;
}

Tensor normalized_inverse_depth(const Tensor& depth) {
    Tensor disp(depth.shape());
    for (std::int64_t i = 0; i < depth.numel(); ++i) disp[i] = 1.0 / std::max(depth[i], 1e-6);
    double lo = tensor_min(disp), hi = tensor_max(disp);
    if (hi - lo < 1e-12) {
        disp.fill(0.5);
        return disp;
    }
    for (auto& v : disp) v = (v - lo) / (hi - lo);
    return disp;
}

void tanh_inplace(Tensor& t) {
    for (auto& v : t) v = std::tanh(v);
}

/// Frozen two-layer conv encoder over pooled inverse depth.
class ConvDepthTeacher : public DepthTeacher {
public:
    ConvDepthTeacher(int channels, std::uint64_t seed) : channels_(channels) {
        RandomStream rng(seed);
        w1_ = he_normal_init(Shape{channels, 1, 3, 3}, rng);
        b1_ = Tensor::zeros(Shape{1, 1, 1, channels});
        w2_ = he_normal_init(Shape{channels, channels, 3, 3}, rng);
        b2_ = Tensor::zeros(Shape{1, 1, 1, channels});
    }

    ConvDepthTeacher(Tensor w1, Tensor b1, Tensor w2, Tensor b2)
        : channels_(static_cast<int>(w1.shape().n)), w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)),
          b2_(std::move(b2)) {}

    Tensor features(const SampleRecord& record, int level) const override {
        if (!record.depth)
            throw ConfigError("depth teacher: record '" + record.meta.source_id + "' carries no depth map");
        Tensor disp = normalized_inverse_depth(*record.depth);
        Tensor pooled = avgpool_pow2(disp, level + 1);
        NoGradGuard guard;
        Var h = ag::conv2d(make_const(pooled), make_const(w1_), make_const(b1_), 1, 1, 1);
        Tensor h1 = h->value;
        tanh_inplace(h1);
        Var h2 = ag::conv2d(make_const(h1), make_const(w2_), make_const(b2_), 1, 1, 1);
        Tensor out = h2->value;
        tanh_inplace(out);
        return out;
    }

    Tensor pseudo_label(const SampleRecord& record) const override {
        if (!record.depth)
            throw ConfigError("depth teacher: record '" + record.meta.source_id + "' carries no depth map");
        return normalized_inverse_depth(*record.depth);
    }

    std::int64_t feature_channels() const override { return channels_; }

    std::uint64_t parameter_hash() const override {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const Tensor* t : {&w1_, &b1_, &w2_, &b2_}) {
            h ^= tensor_hash(*t);
            h *= 0x100000001b3ull;
        }
        return h;
    }

    const Tensor& w1() const { return w1_; }
    const Tensor& b1() const { return b1_; }
    const Tensor& w2() const { return w2_; }
    const Tensor& b2() const { return b2_; }

private:
    int channels_;
    Tensor w1_, b1_, w2_, b2_;
};

} // namespace

std::shared_ptr<DepthTeacher> make_depth_teacher(const std::string& source, const DistillConfig& config,
                                                 int /*num_levels*/, const std::filesystem::path& checkpoint_path) {
    if (source == "synthetic_oracle")
        return std::make_shared<ConvDepthTeacher>(config.depth_teacher_channels, kDepthTeacherSeed);
    if (source == "external_checkpoint") {
        if (checkpoint_path.empty()) throw ConfigError("external depth teacher requires a checkpoint path");
        Archive archive = read_archive(checkpoint_path);
        if (archive.meta.value("kind", "") != "depth_teacher")
            throw LoadError("archive " + checkpoint_path.string() + " is not a depth teacher");
        const Tensor* w1 = archive.find("w1");
        const Tensor* b1 = archive.find("b1");
        const Tensor* w2 = archive.find("w2");
        const Tensor* b2 = archive.find("b2");
        if (!w1 || !b1 || !w2 || !b2)
            throw LoadError("depth teacher archive " + checkpoint_path.string() + " is incomplete");
        return std::make_shared<ConvDepthTeacher>(*w1, *b1, *w2, *b2);
    }
    throw ConfigError("unknown depth teacher source: " + source);
}

void save_depth_teacher(const std::filesystem::path& path, const DepthTeacher& teacher) {
    const auto* conv = dynamic_cast<const ConvDepthTeacher*>(&teacher);
    if (!conv) throw ArgumentError("save_depth_teacher: unsupported teacher type");
    Archive archive;
    archive.meta = {{"kind", "depth_teacher"}, {"channels", conv->feature_channels()}};
    archive.tensors = {{"w1", conv->w1()}, {"b1", conv->b1()}, {"w2", conv->w2()}, {"b2", conv->b2()}};
    write_archive(path, archive);
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

std::vector<std::vector<std::int64_t>> epoch_batches(std::int64_t n, int batch_size, std::uint64_t seed,
                                                     int epoch) {
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    RandomStream rng = RandomStream(seed).fork(kShuffleTag, static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    std::vector<std::vector<std::int64_t>> batches;
    for (std::int64_t start = 0; start < n; start += batch_size) {
        std::vector<std::int64_t> batch;
        for (std::int64_t i = start; i < std::min(n, start + batch_size); ++i)
            batch.push_back(order[static_cast<std::size_t>(i)]);
        batches.push_back(std::move(batch));
    }
    return batches;
}

struct BatchView {
    std::vector<SampleRecord> views;
    Tensor images;
    Tensor labels;
};

BatchView assemble_batch(const std::vector<SampleRecord>& dataset, const std::vector<std::int64_t>& indices,
                         const TrainConfig& cfg, const ModelConfig& model_cfg, int epoch,
                         std::int64_t slot_base) {
    BatchView batch;
    std::vector<Tensor> images, labels;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        SampleRecord view = training_view(dataset[static_cast<std::size_t>(indices[i])], cfg, model_cfg, epoch,
                                          slot_base + static_cast<std::int64_t>(i));
        images.push_back(view.image);
        labels.push_back(view.blur_label);
        batch.views.push_back(std::move(view));
    }
    batch.images = stack_batch(images);
    batch.labels = stack_batch(labels);
    if (!batch.images.all_finite() || !batch.labels.all_finite())
        throw NumericError("non-finite input data at epoch " + std::to_string(epoch) + ", sample slot " +
                           std::to_string(slot_base));
    return batch;
}

/// Loss components recomputed from forward values, for the history log.
struct Components {
    double bce = 0;
    double edge_raw = 0;
};

Components log_components(const ModelOutput& out, const Tensor& labels) {
    NoGradGuard guard;
    Components c;
    Var label = make_const(labels);
    auto add_map = [&](const Var& pred) {
        Var p = make_const(pred->value);
        c.bce += bce_loss(p, label)->value.item();
        c.edge_raw +=
            dice_edge_loss(soft_edges(p), make_const(extract_edges(labels, 0.5)))->value.item();
    };
    add_map(out.final_prediction);
    for (const auto& side : out.side_predictions) add_map(side);
    return c;
}

[[noreturn]] void nan_abort(int epoch, std::size_t batch_index, const Components& c, double distill_value) {
    std::ostringstream os;
    os << "non-finite loss at epoch " << epoch << ", batch " << batch_index << " (bce=" << c.bce
       << ", edge=" << c.edge_raw << ", distill=" << distill_value << ")";
    throw NumericError(os.str());
}

LossWeights make_weights(const TrainConfig& cfg, double lambda, int levels) {
    LossWeights w;
    w.lambda_edge = lambda;
    w.alpha_side.assign(static_cast<std::size_t>(levels), 1.0);
    w.rdffnet_beta_side.assign(static_cast<std::size_t>(levels), 1.0);
    w.rdffnet_lambda = cfg.rdffnet_lambda;
    return w;
}

int effective_last_epoch(const TrainConfig& config, const TrainOptions& options) {
    if (options.stop_after_epoch > 0) return std::min(options.stop_after_epoch, config.max_epochs);
    return config.max_epochs;
}

int resume_start_epoch(Model& model, AdamOptimizer& opt, const TrainOptions& options) {
    if (options.resume_checkpoint.empty()) return 1;
    LoadedCheckpoint ck = load_checkpoint(options.resume_checkpoint, model.config());
    model.copy_parameters_from(ck.model);
    restore_optimizer(opt, ck, model);
    return ck.epoch + 1;
}

void end_epoch(Model& model, AdamOptimizer& opt, const TrainOptions& options, const std::string& stage,
               const EpochStats& stats, TrainResult& result) {
    result.history.push_back(stats);
    result.last_epoch = stats.epoch;
    if (options.sink) options.sink(stats);
    if (!options.checkpoint_out.empty())
        save_checkpoint(options.checkpoint_out, model, {{"stage", stage}}, &opt, stats.epoch);
}

} // namespace

TrainResult train_stage1(Model& model, const std::vector<SampleRecord>& dataset, const TrainConfig& config,
                         const TrainOptions& options) {
    config.validate();
    if (dataset.empty()) throw ArgumentError("train_stage1: empty dataset");
    const int levels = model.config().num_decoder_levels;
    const double lambda = config.stage_lambda(config.stage1_loss);
    LossWeights weights = make_weights(config, lambda, levels);

    AdamOptimizer opt(model.params().all(), config.lr_model);
    if (options.on_optimizers) options.on_optimizers(opt.params(), {});
    int start_epoch = resume_start_epoch(model, opt, options);

    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    const std::int64_t iters_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::int64_t max_iter = static_cast<std::int64_t>(config.max_epochs) * iters_per_epoch;
    std::int64_t iter = static_cast<std::int64_t>(start_epoch - 1) * iters_per_epoch;

    TrainResult result;
    for (int epoch = start_epoch; epoch <= effective_last_epoch(config, options); ++epoch) {
        auto batches = epoch_batches(n, config.batch_size, config.seed, epoch);
        EpochStats stats;
        stats.epoch = epoch;
        stats.lambda_edge = lambda;
        std::int64_t slot = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            BatchView batch = assemble_batch(dataset, batches[b], config, model.config(), epoch, slot);
            slot += static_cast<std::int64_t>(batches[b].size());

            opt.zero_grad();
            ModelOutput out = model.forward(batch.images);
            Var loss = stage1_total(out, make_const(batch.labels), weights);
            Components comps = log_components(out, batch.labels);
            if (!std::isfinite(loss->value.item())) nan_abort(epoch, b, comps, 0.0);
            backward(loss);
            double lr_now = poly_lr(config.lr_model, iter, max_iter, config.lr_poly_power);
            opt.step(lr_now);
            ++iter;

            stats.total += loss->value.item();
            stats.bce += comps.bce;
            stats.edge_raw += comps.edge_raw;
            stats.lr = lr_now;
        }
        double inv = 1.0 / static_cast<double>(batches.size());
        stats.total *= inv;
        stats.bce *= inv;
        stats.edge_raw *= inv;
        end_epoch(model, opt, options, "stage1", stats, result);
    }
    return result;
}

TrainResult train_stage2(Model& student, const TeacherBundle& teachers, const std::vector<SampleRecord>& dataset,
                         const TrainConfig& config, const DistillConfig& distill, const TrainOptions& options) {
    config.validate();
    distill.validate();
    if (dataset.empty()) throw ArgumentError("train_stage2: empty dataset");

    const Model& teacher = teachers.defocus_teacher;
    if (!teachers.depth_teacher) throw ConfigError("train_stage2: missing depth teacher");
    if (teacher.config().input_h != student.config().input_h ||
        teacher.config().input_w != student.config().input_w)
        throw ConfigError("train_stage2: teacher/student input sizes differ");

    const int levels = student.config().num_decoder_levels;
    std::vector<int> taps;
    if (distill.multi_level_taps) {
        if (teacher.config().num_decoder_levels < levels)
            throw ConfigError("train_stage2: teacher has fewer encoder stages than the student taps");
        for (int k = 0; k < levels; ++k) taps.push_back(k);
    } else {
        if (teacher.config().num_decoder_levels != levels)
            throw ConfigError("train_stage2: teacher/student resolution mismatch at the tap point");
        taps.push_back(levels - 1);
    }

    if (distill.warm_start_from_teacher) student.copy_parameters_from(teacher);

    const auto& student_c = student.encoder_channels();
    const auto& teacher_c = teacher.encoder_channels();
    std::vector<Projector> proj_defocus, proj_depth;
    std::vector<Var> projector_params;
    for (int k : taps) {
        std::uint64_t ps = RandomStream(config.seed).fork(kProjectorTag, static_cast<std::uint64_t>(k)).next_u64();
        proj_defocus.push_back(Projector::create("proj1.tap" + std::to_string(k),
                                                 student_c[static_cast<std::size_t>(k)],
                                                 teacher_c[static_cast<std::size_t>(k)], ps));
        proj_depth.push_back(Projector::create("proj2.tap" + std::to_string(k),
                                               student_c[static_cast<std::size_t>(k)],
                                               teachers.depth_teacher->feature_channels(), mix64(ps)));
    }
    for (const auto& p : proj_defocus) projector_params.insert(projector_params.end(), p.params.all().begin(),
                                                               p.params.all().end());
    for (const auto& p : proj_depth) projector_params.insert(projector_params.end(), p.params.all().begin(),
                                                             p.params.all().end());

    const double lambda = config.stage_lambda(config.stage2_loss);
    LossWeights weights = make_weights(config, lambda, levels);

    AdamOptimizer opt_model(student.params().all(), config.lr_model);
    AdamOptimizer opt_proj(projector_params, config.lr_projector, config.wd_projector);
    if (options.on_optimizers) options.on_optimizers(opt_model.params(), opt_proj.params());
    int start_epoch = resume_start_epoch(student, opt_model, options);

    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    const std::int64_t iters_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::int64_t max_iter = static_cast<std::int64_t>(config.max_epochs) * iters_per_epoch;
    std::int64_t iter = static_cast<std::int64_t>(start_epoch - 1) * iters_per_epoch;

    TrainResult result;
    for (int epoch = start_epoch; epoch <= effective_last_epoch(config, options); ++epoch) {
        double beta = distill.beta_override ? *distill.beta_override : beta_schedule(epoch, config.max_epochs);
        weights.beta_now = beta;
        auto batches = epoch_batches(n, config.batch_size, config.seed, epoch);
        EpochStats stats;
        stats.epoch = epoch;
        stats.beta = beta;
        stats.lambda_edge = lambda;
        std::int64_t slot = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            BatchView batch = assemble_batch(dataset, batches[b], config, student.config(), epoch, slot);
            slot += static_cast<std::int64_t>(batches[b].size());

            opt_model.zero_grad();
            opt_proj.zero_grad();
            ModelOutput out = student.forward(batch.images);

            Var loss;
            double distill_value = 0.0;
            if (beta != 0.0) {
                std::vector<Tensor> teacher_feats;
                {
                    NoGradGuard guard;
                    EncoderOutput tenc = teacher.encoder_features(batch.images);
                    for (int k : taps) teacher_feats.push_back(tenc.stage_features[static_cast<std::size_t>(k)]->value);
                }
                Var lf;
                for (std::size_t t = 0; t < taps.size(); ++t) {
                    int k = taps[t];
                    const Var& stud_feat = out.encoder.stage_features[static_cast<std::size_t>(k)];
                    const Shape sf = stud_feat->value.shape();
                    const Shape tf = teacher_feats[t].shape();
                    if (tf.h != sf.h || tf.w != sf.w)
                        throw ConfigError("train_stage2: teacher/student resolution mismatch at the tap point");

                    std::vector<Tensor> depth_feats;
                    for (const auto& view : batch.views)
                        depth_feats.push_back(teachers.depth_teacher->features(view, k));
                    Tensor depth_feat = stack_batch(depth_feats);
                    if (depth_feat.shape().h != sf.h || depth_feat.shape().w != sf.w)
                        throw ConfigError("train_stage2: depth teacher resolution mismatch at the tap point");

                    Var term = ag::add(pairwise_similarity_loss(proj_defocus[t](stud_feat),
                                                                make_const(teacher_feats[t]),
                                                                distill.eps_stabilized_norm),
                                       pairwise_similarity_loss(proj_depth[t](stud_feat),
                                                                make_const(depth_feat),
                                                                distill.eps_stabilized_norm));
                    lf = lf ? ag::add(lf, term) : term;
                }
                distill_value = lf->value.item();
                loss = stage2_total(out, make_const(batch.labels), lf, weights);
            } else {
                loss = stage1_total(out, make_const(batch.labels), weights);
            }

            Components comps = log_components(out, batch.labels);
            if (!std::isfinite(loss->value.item())) nan_abort(epoch, b, comps, distill_value);
            backward(loss);
            double lr_now = poly_lr(config.lr_model, iter, max_iter, config.lr_poly_power);
            opt_model.step(lr_now);
            if (beta != 0.0) opt_proj.step(config.lr_projector);
            ++iter;

            stats.total += loss->value.item();
            stats.bce += comps.bce;
            stats.edge_raw += comps.edge_raw;
            stats.distill += distill_value;
            stats.beta_distill += beta * distill_value;
            stats.lr = lr_now;
        }
        double inv = 1.0 / static_cast<double>(batches.size());
        stats.total *= inv;
        stats.bce *= inv;
        stats.edge_raw *= inv;
        stats.distill *= inv;
        stats.beta_distill *= inv;
        end_epoch(student, opt_model, options, "stage2", stats, result);
    }
    return result;
}

TrainResult train_rdffnet(Model& model, const DepthTeacher& depth_teacher,
                          const std::vector<SampleRecord>& dataset, const TrainConfig& config,
                          const DistillConfig& distill, const TrainOptions& options) {
    config.validate();
    distill.validate();
    if (dataset.empty()) throw ArgumentError("train_rdffnet: empty dataset");
    if (!model.config().depth_heads)
        throw ConfigError("train_rdffnet: model config does not enable depth heads");

    const int levels = model.config().num_decoder_levels;
    const double lambda = config.stage_lambda(config.stage1_loss);
    LossWeights weights = make_weights(config, lambda, levels);

    AdamOptimizer opt(model.params().all(), config.lr_model);
    if (options.on_optimizers) options.on_optimizers(opt.params(), {});
    int start_epoch = resume_start_epoch(model, opt, options);

    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    const std::int64_t iters_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::int64_t max_iter = static_cast<std::int64_t>(config.max_epochs) * iters_per_epoch;
    std::int64_t iter = static_cast<std::int64_t>(start_epoch - 1) * iters_per_epoch;

    TrainResult result;
    for (int epoch = start_epoch; epoch <= effective_last_epoch(config, options); ++epoch) {
        auto batches = epoch_batches(n, config.batch_size, config.seed, epoch);
        EpochStats stats;
        stats.epoch = epoch;
        stats.lambda_edge = lambda;
        std::int64_t slot = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            BatchView batch = assemble_batch(dataset, batches[b], config, model.config(), epoch, slot);
            slot += static_cast<std::int64_t>(batches[b].size());

            std::vector<Tensor> pseudo;
            for (const auto& view : batch.views) pseudo.push_back(depth_teacher.pseudo_label(view));
            Tensor pseudo_labels = stack_batch(pseudo);

            opt.zero_grad();
            ModelOutput out = model.forward(batch.images);
            Var labels = make_const(batch.labels);
            Var loss = rdffnet_total(out, labels, make_const(pseudo_labels), weights, distill.rdffnet_mode());
            Components comps = log_components(out, batch.labels);
            double blur_only = 0.0;
            {
                NoGradGuard guard;
                blur_only =
                    stage1_total(out.final_prediction, out.side_predictions, labels, weights)->value.item();
            }
            if (!std::isfinite(loss->value.item())) nan_abort(epoch, b, comps, 0.0);
            backward(loss);
            double lr_now = poly_lr(config.lr_model, iter, max_iter, config.lr_poly_power);
            opt.step(lr_now);
            ++iter;

            stats.total += loss->value.item();
            stats.bce += comps.bce;
            stats.edge_raw += comps.edge_raw;
            stats.depth_term += loss->value.item() - blur_only;
            stats.lr = lr_now;
        }
        double inv = 1.0 / static_cast<double>(batches.size());
        stats.total *= inv;
        stats.bce *= inv;
        stats.edge_raw *= inv;
        stats.depth_term *= inv;
        end_epoch(model, opt, options, "rdffnet", stats, result);
    }
    return result;
}

} // namespace dbd
