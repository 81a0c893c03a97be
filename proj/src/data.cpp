#include "dbd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dbd/image_io.hpp"

namespace dbd {

namespace fs = std::filesystem;

void LensParams::validate() const {
    if (focal_length_mm <= 0 || f_number < 0.5 || focus_distance <= 0 || sensor_scale <= 0 ||
        coc_in_focus_threshold <= 0)
        throw ConfigError("invalid lens parameters");
    if (focus_distance <= focal_length_units())
        throw ConfigError("focus distance must exceed the focal length");
}

double coc_radius_px(const LensParams& lens, double depth) {
    const double f = lens.focal_length_units();
    const double aperture = f / lens.f_number;
    return lens.sensor_scale * aperture * f * std::abs(depth - lens.focus_distance) /
           (depth * (lens.focus_distance - f));
}

namespace {

struct ManifestEntry {
    std::string stem;
    SampleMeta meta;
};

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
    std::ifstream is(manifest);
    if (!is) throw LoadError("cannot open manifest: " + manifest.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        ManifestEntry e;
        if (!(ls >> e.stem)) continue; // blank line
        e.meta.source_id = e.stem;
        std::string token;
        while (ls >> token) {
            auto eq = token.find('=');
            if (eq == std::string::npos)
                throw LoadError("manifest " + manifest.string() + ": bad token '" + token + "'");
            std::string key = token.substr(0, eq);
            double value = std::stod(token.substr(eq + 1));
            if (key == "f_number")
                e.meta.aperture_f_number = value;
            else if (key == "focus_distance")
                e.meta.focus_distance = value;
            else
                throw LoadError("manifest " + manifest.string() + ": unknown key '" + key + "'");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace

std::vector<SampleRecord> load_dataset(const fs::path& root, const fs::path& manifest, bool invert_polarity) {
    auto entries = read_manifest(manifest);
    std::vector<SampleRecord> records;
    records.reserve(entries.size());
    for (const auto& e : entries) {
        fs::path image_path = root / "images" / (e.stem + ".ppm");
        fs::path mask_path = root / "masks" / (e.stem + ".pgm");
        fs::path depth_path = root / "depth" / (e.stem + ".pfm");
        if (!fs::exists(image_path)) throw LoadError("missing image for stem '" + e.stem + "'");
        if (!fs::exists(mask_path)) throw LoadError("missing mask for stem '" + e.stem + "'");

        SampleRecord rec;
        rec.image = read_image(image_path);
        if (rec.image.shape().c == 1) {
            Tensor rgb(Shape{1, 3, rec.image.shape().h, rec.image.shape().w});
            for (std::int64_t c = 0; c < 3; ++c)
                for (std::int64_t i = 0; i < rec.image.numel(); ++i) rgb[c * rec.image.numel() + i] = rec.image[i];
            rec.image = std::move(rgb);
        }
        Tensor mask = read_image(mask_path);
        if (mask.shape().c != 1) throw LoadError("mask for stem '" + e.stem + "' is not single-channel");
        if (mask.shape().h != rec.image.shape().h || mask.shape().w != rec.image.shape().w)
            throw LoadError("mask size differs from image for stem '" + e.stem + "'");
        rec.blur_label = Tensor(mask.shape());
        for (std::int64_t i = 0; i < mask.numel(); ++i) {
            double v = mask[i] >= 0.5 ? 1.0 : 0.0;
            rec.blur_label[i] = invert_polarity ? 1.0 - v : v;
        }
        if (fs::exists(depth_path)) rec.depth = read_pfm(depth_path);
        rec.meta = e.meta;
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

void jitter_image(Tensor& img, double brightness, double contrast, double saturation) {
    const Shape s = img.shape();
    for (auto& v : img) v *= brightness;

    double mean_gray = 0.0;
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
            mean_gray += (img.at(0, 0, y, x) + img.at(0, 1, y, x) + img.at(0, 2, y, x)) / 3.0;
    mean_gray /= static_cast<double>(s.h * s.w);
    for (auto& v : img) v = (v - mean_gray) * contrast + mean_gray;

    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            double g = (img.at(0, 0, y, x) + img.at(0, 1, y, x) + img.at(0, 2, y, x)) / 3.0;
            for (std::int64_t c = 0; c < 3; ++c) {
                double& v = img.at(0, c, y, x);
                v = (v - g) * saturation + g;
            }
        }
    for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
}

} // namespace

SampleRecord augment(const SampleRecord& record, const AugmentConfig& cfg, std::uint64_t seed) {
    RandomStream rng(seed);
    SampleRecord out;
    out.meta = record.meta;
    out.image = resize_bilinear(record.image, cfg.out_h, cfg.out_w);
    out.blur_label = resize_nearest(record.blur_label, cfg.out_h, cfg.out_w);
    if (record.depth) out.depth = resize_bilinear(*record.depth, cfg.out_h, cfg.out_w);

    // Fixed draw order keeps records reproducible regardless of outcomes.
    bool flip = rng.uniform() < cfg.flip_prob;
    double brightness = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
    double contrast = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);
    double saturation = rng.uniform(1.0 - cfg.jitter, 1.0 + cfg.jitter);

    if (flip) {
        out.image = flip_vertical(out.image);
        out.blur_label = flip_vertical(out.blur_label);
        if (out.depth) out.depth = flip_vertical(*out.depth);
    }
    jitter_image(out.image, brightness, contrast, saturation);
    return out;
}

SceneSpec SceneSpec::random(std::int64_t h, std::int64_t w, double focus_distance, RandomStream& rng,
                            bool homogeneous_at_focus) {
    SceneSpec spec;
    spec.height = h;
    spec.width = w;

    auto pick_color = [&](SceneLayer& layer) {
        for (int c = 0; c < 3; ++c) {
            layer.color[c] = rng.uniform(0.25, 0.95);
            layer.color2[c] = rng.uniform(0.05, 0.75);
        }
    };

    SceneLayer backdrop;
    backdrop.kind = SceneLayer::Backdrop;
    backdrop.depth = rng.uniform(6.0, 10.0);
    backdrop.texture = rng.bernoulli(0.5) ? SceneLayer::Checker : SceneLayer::Noise;
    backdrop.period = 2 + static_cast<int>(rng.next_below(5));
    pick_color(backdrop);
    spec.layers.push_back(backdrop);

    auto add_plane = [&](double depth, SceneLayer::Texture texture) {
        SceneLayer layer;
        layer.kind = rng.bernoulli(0.5) ? SceneLayer::Rectangle : SceneLayer::Ellipse;
        layer.depth = depth;
        layer.texture = texture;
        layer.period = 2 + static_cast<int>(rng.next_below(4));
        double cx = rng.uniform(0.15, 0.85), cy = rng.uniform(0.15, 0.85);
        double rx = rng.uniform(0.12, 0.3), ry = rng.uniform(0.12, 0.3);
        layer.x0 = std::max(0.0, cx - rx);
        layer.x1 = std::min(1.0, cx + rx);
        layer.y0 = std::max(0.0, cy - ry);
        layer.y1 = std::min(1.0, cy + ry);
        pick_color(layer);
        spec.layers.push_back(layer);
    };

    if (homogeneous_at_focus) {
        // The ambiguous pair: one textureless plane in focus, one away from it.
        add_plane(focus_distance, SceneLayer::Flat);
        add_plane(rng.bernoulli(0.5) ? rng.uniform(0.35, 0.7) * focus_distance
                                     : rng.uniform(2.2, 4.5) * focus_distance,
                  SceneLayer::Flat);
    }
    int extra = 1 + static_cast<int>(rng.next_below(2));
    for (int i = 0; i < extra; ++i) {
        double depth = rng.bernoulli(0.4) ? focus_distance : rng.uniform(0.4, 4.0) * focus_distance;
        auto texture = static_cast<SceneLayer::Texture>(1 + rng.next_below(3));
        add_plane(depth, texture);
    }

    // Nearer planes paint later so they occlude.
    std::stable_sort(spec.layers.begin() + 1, spec.layers.end(),
                     [](const SceneLayer& a, const SceneLayer& b) { return a.depth > b.depth; });
    return spec;
}

namespace {

/// Distance attenuation; the monocular cue that makes depth inferable from
/// appearance in the synthetic world.
double depth_shade(double depth) { return 1.0 / (1.0 + 0.08 * depth); }

void paint_layer(Tensor& rgb, Tensor& depth, const SceneLayer& layer, RandomStream& rng) {
    const Shape s = rgb.shape();
    const double shade = depth_shade(layer.depth);
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            double noise = layer.texture == SceneLayer::Noise ? rng.uniform(-0.18, 0.18) : 0.0;
            double nx = (static_cast<double>(x) + 0.5) / static_cast<double>(s.w);
            double ny = (static_cast<double>(y) + 0.5) / static_cast<double>(s.h);
            bool inside = true;
            if (layer.kind == SceneLayer::Rectangle)
                inside = nx >= layer.x0 && nx <= layer.x1 && ny >= layer.y0 && ny <= layer.y1;
            else if (layer.kind == SceneLayer::Ellipse) {
                double cx = 0.5 * (layer.x0 + layer.x1), cy = 0.5 * (layer.y0 + layer.y1);
                double rx = 0.5 * (layer.x1 - layer.x0), ry = 0.5 * (layer.y1 - layer.y0);
                double dx = (nx - cx) / rx, dy = (ny - cy) / ry;
                inside = dx * dx + dy * dy <= 1.0;
            }
            if (!inside) continue;
            for (std::int64_t c = 0; c < 3; ++c) {
                double v = layer.color[c];
                switch (layer.texture) {
                    case SceneLayer::Flat: break;
                    case SceneLayer::Checker: {
                        std::int64_t cell = (x / layer.period + y / layer.period) % 2;
                        v = cell ? layer.color[c] : layer.color2[c];
                        break;
                    }
                    case SceneLayer::Noise: v = std::clamp(layer.color[c] + noise, 0.0, 1.0); break;
                    case SceneLayer::HGrad: v = layer.color[c] + (layer.color2[c] - layer.color[c]) * nx; break;
                }
                rgb.at(0, c, y, x) = std::clamp(v * shade, 0.0, 1.0);
            }
            depth.at(0, 0, y, x) = layer.depth;
        }
}

Tensor disc_blur(const Tensor& sharp, const Tensor& radius, double max_radius) {
    const Shape s = sharp.shape();
    Tensor out(s);
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            double r = std::min(radius.at(0, 0, y, x), max_radius);
            std::int64_t ri = static_cast<std::int64_t>(std::floor(r));
            double r2 = r * r;
            double acc[3] = {0, 0, 0};
            int count = 0;
            for (std::int64_t dy = -ri; dy <= ri; ++dy)
                for (std::int64_t dx = -ri; dx <= ri; ++dx) {
                    if (static_cast<double>(dx * dx + dy * dy) > r2) continue;
                    std::int64_t yy = std::clamp<std::int64_t>(y + dy, 0, s.h - 1);
                    std::int64_t xx = std::clamp<std::int64_t>(x + dx, 0, s.w - 1);
                    for (std::int64_t c = 0; c < 3; ++c) acc[c] += sharp.at(0, c, yy, xx);
                    ++count;
                }
            for (std::int64_t c = 0; c < 3; ++c) out.at(0, c, y, x) = acc[c] / static_cast<double>(count);
        }
    return out;
}

} // namespace

SampleRecord synth_scene(const SceneSpec& spec, const LensParams& lens, std::uint64_t seed) {
    lens.validate();
    if (spec.layers.empty() || spec.layers.front().kind != SceneLayer::Backdrop)
        throw ArgumentError("scene must start with a backdrop layer");
    const double f = lens.focal_length_units();
    for (const auto& layer : spec.layers)
        if (layer.depth <= f)
            throw ArgumentError("invalid geometry: object at depth " + std::to_string(layer.depth) +
                                " is not beyond the focal length");

    Tensor sharp(Shape{1, 3, spec.height, spec.width});
    Tensor depth(Shape{1, 1, spec.height, spec.width});
    RandomStream rng = RandomStream(seed).fork(0x7465785full);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        RandomStream layer_rng = rng.fork(static_cast<std::uint64_t>(i));
        paint_layer(sharp, depth, spec.layers[i], layer_rng);
    }

    Tensor radius(Shape{1, 1, spec.height, spec.width});
    for (std::int64_t i = 0; i < radius.numel(); ++i) radius[i] = coc_radius_px(lens, depth[i]);

    SampleRecord rec;
    rec.image = disc_blur(sharp, radius, 8.0);
    rec.blur_label = Tensor(Shape{1, 1, spec.height, spec.width});
    for (std::int64_t i = 0; i < radius.numel(); ++i)
        rec.blur_label[i] = radius[i] > lens.coc_in_focus_threshold ? 1.0 : 0.0;
    rec.depth = depth;
    rec.meta.aperture_f_number = lens.f_number;
    rec.meta.focus_distance = lens.focus_distance;
    return rec;
}

std::vector<std::string> synth_dataset(const fs::path& root, int n, const std::vector<LensParams>& regimes,
                                       std::uint64_t seed, const SynthOptions& options) {
    if (n < 1) throw ArgumentError("synth_dataset: n must be >= 1");
    if (regimes.empty()) throw ArgumentError("synth_dataset: at least one lens regime required");
    for (const auto& lens : regimes) lens.validate();

    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "masks", ec);
    fs::create_directories(root / "depth", ec);
    if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks") || !fs::is_directory(root / "depth"))
        throw IoError("cannot create dataset directories under " + root.string());

    std::ofstream manifest(root / "manifest.txt");
    if (!manifest) throw IoError("cannot write manifest under " + root.string());

    RandomStream rng(seed);
    std::vector<std::string> stems;
    for (int i = 0; i < n; ++i) {
        const LensParams& lens = regimes[static_cast<std::size_t>(i) % regimes.size()];
        RandomStream scene_rng = rng.fork(0x7363656e65ull, static_cast<std::uint64_t>(i));
        SceneSpec spec = SceneSpec::random(options.height, options.width, lens.focus_distance, scene_rng,
                                           options.homogeneous_at_focus);
        SampleRecord rec = synth_scene(spec, lens, mix64(seed ^ static_cast<std::uint64_t>(i)));

        char stem[32];
        std::snprintf(stem, sizeof(stem), "synth_%04d", i);
        stems.emplace_back(stem);
        write_ppm(root / "images" / (stems.back() + ".ppm"), rec.image);
        write_pgm(root / "masks" / (stems.back() + ".pgm"), rec.blur_label);
        write_pfm(root / "depth" / (stems.back() + ".pfm"), *rec.depth);
        manifest << stems.back() << " f_number=" << lens.f_number << " focus_distance=" << lens.focus_distance
                 << "\n";
    }
    manifest.flush();
    if (!manifest) throw IoError("failed writing manifest under " + root.string());
    return stems;
}

} // namespace dbd
