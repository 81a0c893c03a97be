#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dbd/rng.hpp"
#include "dbd/tensor.hpp"

namespace dbd {

struct SampleMeta {
    std::optional<double> aperture_f_number;
    std::optional<double> focus_distance;
    std::string source_id;
};

/// One dataset item. image is [1,3,H,W] in [0,1]; blur_label is [1,1,H,W]
/// with hard {0,1} values (1 = defocus); depth, when present, is metric.
struct SampleRecord {
    Tensor image;
    Tensor blur_label;
    std::optional<Tensor> depth;
    SampleMeta meta;
};

/// Thin-lens camera description used by the synthetic generator.
struct LensParams {
    double focal_length_mm = 50.0;
    double f_number = 1.8;
    double focus_distance = 2.0;       // scene units (meters)
    double sensor_scale = 8000.0;      // pixels per meter on the sensor
    double coc_in_focus_threshold = 1.0; // pixels

    void validate() const;
    double focal_length_units() const { return focal_length_mm / 1000.0; }
};

/// Blur-disc radius in pixels for a point at the given depth:
/// sensor_scale * A * f * |d - d_f| / (d * (d_f - f)), A = f / f_number.
double coc_radius_px(const LensParams& lens, double depth);

struct AugmentConfig {
    std::int64_t out_h = 320;
    std::int64_t out_w = 320;
    double flip_prob = 0.5;
    double jitter = 0.2; // brightness/contrast/saturation range is [1-j, 1+j]
};

/// Reads records in manifest order from root/{images,masks[,depth]}.
/// Masks are binarized at 0.5 of full range; invert_polarity flips the
/// positive class for corpora that store in-focus as white.
std::vector<SampleRecord> load_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest,
                                       bool invert_polarity = false);

/// Resize to the target size, then an optional vertical flip applied to
/// image, label, and depth together, then color jitter on the image only.
/// Deterministic for a fixed seed.
SampleRecord augment(const SampleRecord& record, const AugmentConfig& cfg, std::uint64_t seed);

struct SceneLayer {
    enum Kind { Backdrop, Rectangle, Ellipse };
    enum Texture { Flat, Checker, Noise, HGrad };
    Kind kind = Backdrop;
    double depth = 5.0;
    double x0 = 0, y0 = 0, x1 = 1, y1 = 1; // normalized bounds for shapes
    Texture texture = Flat;
    double color[3] = {0.5, 0.5, 0.5};
    double color2[3] = {0.2, 0.2, 0.2};
    int period = 4; // checker cell size in pixels
};

/// Fronto-parallel textured layers; layers[0] must be the backdrop and later
/// layers paint over earlier ones.
struct SceneSpec {
    std::int64_t height = 64;
    std::int64_t width = 64;
    std::vector<SceneLayer> layers;

    /// Random desk-scale scene. When homogeneous_at_focus is set the scene
    /// always contains a textureless plane at the focus distance plus a
    /// similar textureless plane away from it, the classic ambiguity for
    /// appearance-only detectors.
    static SceneSpec random(std::int64_t h, std::int64_t w, double focus_distance, RandomStream& rng,
                            bool homogeneous_at_focus);
};

/// Renders the sharp scene, applies per-pixel disc blur with the thin-lens
/// blur radius, and labels pixels whose radius exceeds the in-focus
/// threshold. Depth-dependent shading gives images a monocular depth cue.
SampleRecord synth_scene(const SceneSpec& spec, const LensParams& lens, std::uint64_t seed);

struct SynthOptions {
    std::int64_t height = 64;
    std::int64_t width = 64;
    bool homogeneous_at_focus = true;
};

/// Writes n rendered records (regimes round-robin) in the load_dataset
/// layout including depth maps, and a manifest recording lens metadata.
/// Returns the stems in manifest order.
std::vector<std::string> synth_dataset(const std::filesystem::path& root, int n,
                                       const std::vector<LensParams>& regimes, std::uint64_t seed,
                                       const SynthOptions& options = {});

} // namespace dbd
