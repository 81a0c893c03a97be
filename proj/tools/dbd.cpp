#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "dbd/checkpoint.hpp"
#include "dbd/config.hpp"
#include "dbd/distill.hpp"
#include "dbd/eval.hpp"
#include "dbd/image_io.hpp"

namespace fs = std::filesystem;
using namespace dbd;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig resolve_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig::from_json(nlohmann::json::object())
                                             : RunConfig::load(args.config_path);
    if (const char* env_root = std::getenv("DBD_OUTPUT_ROOT"); env_root && *env_root)
        cfg.output_dir = env_root;
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (args.seed_set) cfg.seed = args.seed;
    cfg.train.seed = cfg.seed;
    return cfg;
}

fs::path ensure_output_dir(const RunConfig& cfg) {
    fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
    return dir;
}

std::vector<SampleRecord> load_records(const RunConfig& cfg, const std::string& root_flag,
                                       const std::string& manifest_flag) {
    fs::path root = root_flag.empty() ? fs::path(cfg.data.dataset_root) : fs::path(root_flag);
    fs::path manifest = manifest_flag.empty() ? fs::path(cfg.data.manifest) : fs::path(manifest_flag);
    if (root.empty()) throw ConfigError("no dataset root configured (data.dataset_root or --data-root)");
    if (manifest.empty()) manifest = root / "manifest.txt";
    if (!fs::exists(root)) throw ConfigError("dataset root does not exist: " + root.string());
    if (!fs::exists(manifest)) throw ConfigError("manifest does not exist: " + manifest.string());
    return load_dataset(root, manifest, cfg.data.polarity_invert);
}

Predictor model_predictor(const Model& model) {
    return [&model](const SampleRecord& rec) {
        Tensor input = resize_bilinear(rec.image, model.config().input_h, model.config().input_w);
        NoGradGuard guard;
        ModelOutput out = model.forward(input);
        return out.final_prediction->value;
    };
}

int cmd_synth(const CommonArgs& common, const std::string& out_flag, int n_flag, const std::string& regimes_flag) {
    RunConfig cfg = resolve_config(common);
    if (n_flag > 0) cfg.synth.n = n_flag;
    if (!regimes_flag.empty()) cfg.synth.regimes = parse_regimes(regimes_flag);

    fs::path out = out_flag.empty() ? ensure_output_dir(cfg) / "dataset" : fs::path(out_flag);
    SynthOptions options;
    options.height = cfg.synth.height;
    options.width = cfg.synth.width;
    options.homogeneous_at_focus = cfg.synth.homogeneous_at_focus;
    synth_dataset(out, cfg.synth.n, cfg.synth.regimes, cfg.seed, options);
    cfg.write_echo(out);
    std::cout << (out / "manifest.txt").string() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& stage, const std::string& data_root,
              const std::string& manifest, int epochs, int batch_size, const std::string& defocus_teacher,
              const std::string& depth_teacher, const std::string& resume, const std::string& ckpt_flag,
              const std::string& history_flag, bool no_augment) {
    RunConfig cfg = resolve_config(common);
    if (epochs > 0) cfg.train.max_epochs = epochs;
    if (batch_size > 0) cfg.train.batch_size = batch_size;
    if (no_augment) cfg.train.augment_enabled = false;
    if (!defocus_teacher.empty()) cfg.distill.defocus_teacher_checkpoint = defocus_teacher;
    if (!depth_teacher.empty()) cfg.distill.depth_teacher_checkpoint = depth_teacher;
    cfg.model.validate();
    cfg.train.validate();
    cfg.distill.validate();

    if (stage == "stage2" && cfg.distill.defocus_teacher_checkpoint.empty())
        throw ConfigError("stage2 requires a defocus teacher checkpoint (--defocus-teacher)");
    if (stage == "rdffnet" && !cfg.model.depth_heads)
        throw ConfigError("rdffnet training requires model.depth_heads=true");

    auto records = load_records(cfg, data_root, manifest);
    fs::path outdir = ensure_output_dir(cfg);
    cfg.write_echo(outdir);

    TrainOptions options;
    options.checkpoint_out = ckpt_flag.empty() ? outdir / (stage + ".ckpt") : fs::path(ckpt_flag);
    options.resume_checkpoint = resume;
    fs::path history_path = history_flag.empty() ? outdir / (stage + "_history.jsonl") : fs::path(history_flag);
    std::ofstream history(history_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!history) throw IoError("cannot write history log: " + history_path.string());
    options.sink = [&history](const EpochStats& stats) { history << stats.to_json_line() << "\n"; };

    if (stage == "stage1") {
        Model model = Model::build(cfg.model, cfg.seed);
        train_stage1(model, records, cfg.train, options);
    } else if (stage == "stage2") {
        fs::path teacher_path(cfg.distill.defocus_teacher_checkpoint);
        if (!fs::exists(teacher_path))
            throw ConfigError("defocus teacher checkpoint does not exist: " + teacher_path.string());
        TeacherBundle teachers{load_checkpoint(teacher_path).model,
                               make_depth_teacher(cfg.distill.depth_teacher_source, cfg.distill,
                                                  cfg.model.num_decoder_levels,
                                                  cfg.distill.depth_teacher_checkpoint)};
        Model student = Model::build(cfg.model, cfg.seed);
        train_stage2(student, teachers, records, cfg.train, cfg.distill, options);
    } else if (stage == "rdffnet") {
        auto depth = make_depth_teacher(cfg.distill.depth_teacher_source, cfg.distill,
                                        cfg.model.num_decoder_levels, cfg.distill.depth_teacher_checkpoint);
        Model model = Model::build(cfg.model, cfg.seed);
        train_rdffnet(model, *depth, records, cfg.train, cfg.distill, options);
    } else {
        throw ConfigError("unknown training stage: " + stage);
    }
    std::cout << "checkpoint " << options.checkpoint_out.string() << "\nhistory " << history_path.string() << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint, const std::string& data_root,
             const std::string& manifest, const std::string& report_flag, const std::string& plot_flag) {
    RunConfig cfg = resolve_config(common);
    if (!fs::exists(checkpoint)) throw ConfigError("checkpoint does not exist: " + checkpoint);
    auto records = load_records(cfg, data_root, manifest);
    fs::path outdir = ensure_output_dir(cfg);

    std::optional<ModelConfig> expected;
    if (!common.config_path.empty()) expected = cfg.model;
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint, expected);

    MetricsReport report = evaluate_dataset(model_predictor(ckpt.model), records, cfg.eval);
    fs::path report_path = report_flag.empty() ? outdir / "report.txt" : fs::path(report_flag);
    fs::path plot_path = plot_flag.empty() ? outdir / "pr_curve.ppm" : fs::path(plot_flag);
    write_report(report_path, report);
    write_pr_plot(plot_path, report.pr);
    cfg.write_echo(outdir);
    std::cout << report.summary_line() << "\n";
    return 0;
}

int cmd_predict(const CommonArgs& common, const std::string& checkpoint, const std::string& images_dir,
                const std::string& out_dir) {
    RunConfig cfg = resolve_config(common);
    if (!fs::exists(checkpoint)) throw ConfigError("checkpoint does not exist: " + checkpoint);
    if (!fs::is_directory(images_dir)) throw ConfigError("image directory does not exist: " + images_dir);
    fs::path out(out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (!fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());

    LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
    const Model& model = ckpt.model;

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(images_dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    int written = 0, skipped = 0;
    for (const auto& file : files) {
        Tensor image;
        try {
            if (!is_supported_image(file)) throw LoadError("unsupported format");
            image = read_image(file);
        } catch (const LoadError& e) {
            std::cerr << "warning: skipping " << file.string() << ": " << e.what() << "\n";
            ++skipped;
            continue;
        }
        if (image.shape().c == 1) {
            Tensor rgb(Shape{1, 3, image.shape().h, image.shape().w});
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t i = 0; i < image.numel(); ++i) rgb[c * image.numel() + i] = image[i];
            image = std::move(rgb);
        }
        Tensor input = resize_bilinear(image, model.config().input_h, model.config().input_w);
        NoGradGuard guard;
        ModelOutput fwd = model.forward(input);
        Tensor pred = resize_bilinear(fwd.final_prediction->value, image.shape().h, image.shape().w);
        write_pgm(out / (file.stem().string() + ".pgm"), pred);
        ++written;
    }
    cfg.write_echo(out);
    std::cout << "predicted " << written << " skipped " << skipped << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"defocus blur detection toolkit"};
    app.require_subcommand(1);

    CommonArgs common;
    app.add_option("--config", common.config_path, "run configuration file (JSON)");
    app.add_option("--output-dir", common.output_dir, "override output directory");
    auto* seed_opt = app.add_option("--seed", common.seed, "override random seed");

    auto* synth = app.add_subcommand("synth", "generate a synthetic thin-lens dataset");
    std::string synth_out, synth_regimes;
    int synth_n = 0;
    synth->add_option("--out", synth_out, "dataset directory");
    synth->add_option("--n", synth_n, "number of samples");
    synth->add_option("--regimes", synth_regimes, "aperture list, e.g. f1.8,f16");

    auto* train = app.add_subcommand("train", "train a detector");
    std::string stage, data_root, manifest, defocus_teacher, depth_teacher, resume, ckpt_out, history_out;
    int epochs = 0, batch_size = 0;
    bool no_augment = false;
    train->add_option("--stage", stage, "stage1 | stage2 | rdffnet")->required();
    train->add_option("--data-root", data_root, "dataset root");
    train->add_option("--manifest", manifest, "manifest path");
    train->add_option("--epochs", epochs, "override max epochs");
    train->add_option("--batch-size", batch_size, "override batch size");
    train->add_option("--defocus-teacher", defocus_teacher, "stage-1 checkpoint used as the defocus teacher");
    train->add_option("--depth-teacher", depth_teacher, "external depth-teacher archive");
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--checkpoint-out", ckpt_out, "checkpoint output path");
    train->add_option("--history", history_out, "history log path");
    train->add_flag("--no-augment", no_augment, "disable data augmentation");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_root, eval_manifest, report_path, plot_path;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--data-root", eval_root, "dataset root");
    eval_cmd->add_option("--manifest", eval_manifest, "manifest path");
    eval_cmd->add_option("--report", report_path, "report output path");
    eval_cmd->add_option("--plot", plot_path, "PR plot output path");

    auto* predict = app.add_subcommand("predict", "write blur maps for a directory of images");
    std::string pred_ckpt, pred_images, pred_out;
    predict->add_option("--checkpoint", pred_ckpt, "model checkpoint")->required();
    predict->add_option("--images", pred_images, "input image directory")->required();
    predict->add_option("--out", pred_out, "output directory")->required();

    try {
        app.parse(argc, argv);
        common.seed_set = seed_opt->count() > 0;
        if (synth->parsed()) return cmd_synth(common, synth_out, synth_n, synth_regimes);
        if (train->parsed())
            return cmd_train(common, stage, data_root, manifest, epochs, batch_size, defocus_teacher,
                             depth_teacher, resume, ckpt_out, history_out, no_augment);
        if (eval_cmd->parsed())
            return cmd_eval(common, eval_ckpt, eval_root, eval_manifest, report_path, plot_path);
        if (predict->parsed()) return cmd_predict(common, pred_ckpt, pred_images, pred_out);
        return 1;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
