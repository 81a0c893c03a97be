#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dbd/data.hpp"
#include "dbd/image_io.hpp"

#include "oracles.hpp"

using namespace dbd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

LensParams shallow_lens() {
    LensParams lens;
    lens.f_number = 1.8;
    return lens;
}

LensParams wide_lens() {
    LensParams lens;
    lens.f_number = 16.0;
    return lens;
}

SceneSpec two_plane_scene() {
    SceneSpec spec;
    spec.height = 32;
    spec.width = 32;
    SceneLayer backdrop;
    backdrop.kind = SceneLayer::Backdrop;
    backdrop.depth = 6.0;
    backdrop.texture = SceneLayer::Checker;
    spec.layers.push_back(backdrop);
    SceneLayer plane;
    plane.kind = SceneLayer::Rectangle;
    plane.depth = 2.0; // at focus
    plane.x0 = 0.2;
    plane.y0 = 0.2;
    plane.x1 = 0.7;
    plane.y1 = 0.7;
    plane.texture = SceneLayer::Noise;
    spec.layers.push_back(plane);
    return spec;
}

} // namespace

TEST_CASE("image files round-trip") {
    TempDir dir("dbd_test_io");
    RandomStream rng(1);
    Tensor rgb = oracle::random_tensor(Shape{1, 3, 9, 7}, rng);
    write_ppm(dir.path / "x.ppm", rgb);
    Tensor back = read_image(dir.path / "x.ppm");
    CHECK(back.shape() == rgb.shape());
    CHECK(max_abs_diff(back, rgb) <= 0.5 / 255.0 + 1e-12);

    Tensor mask = oracle::random_binary(Shape{1, 1, 9, 7}, rng);
    write_pgm(dir.path / "m.pgm", mask);
    CHECK(max_abs_diff(read_image(dir.path / "m.pgm"), mask) == 0.0);

    Tensor depth = oracle::random_tensor(Shape{1, 1, 9, 7}, rng, 0.5, 9.0);
    write_pfm(dir.path / "d.pfm", depth);
    // float32 storage
    CHECK(max_abs_diff(read_pfm(dir.path / "d.pfm"), depth) < 1e-5);

    CHECK_THROWS_AS(read_image(dir.path / "missing.ppm"), LoadError);
}

TEST_CASE("lens validation and blur radius") {
    CHECK_NOTHROW(shallow_lens().validate());
    LensParams bad = shallow_lens();
    bad.f_number = 0.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = shallow_lens();
    bad.focus_distance = 0.01; // below the 50mm focal length
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    LensParams lens = shallow_lens();
    CHECK(coc_radius_px(lens, lens.focus_distance) == 0.0);
    // monotone in |d - focus| on each side
    double prev = 0.0;
    for (double d = 2.0; d <= 6.0; d += 0.5) {
        double c = coc_radius_px(lens, d);
        CHECK(c >= prev);
        prev = c;
    }
    prev = 0.0;
    for (double d = 2.0; d >= 0.4; d -= 0.2) {
        double c = coc_radius_px(lens, d);
        CHECK(c >= prev);
        prev = c;
    }
    // shrinking the aperture shrinks the blur circle
    CHECK(coc_radius_px(wide_lens(), 4.0) < coc_radius_px(shallow_lens(), 4.0));
}

TEST_CASE("scene at focus renders an all-in-focus label") {
    SceneSpec spec = two_plane_scene();
    for (auto& layer : spec.layers) layer.depth = 2.0;
    SampleRecord rec = synth_scene(spec, shallow_lens(), 5);
    CHECK(tensor_sum(rec.blur_label) == 0.0);
}

TEST_CASE("label equals the per-pixel blur-radius rule") {
    SceneSpec spec = two_plane_scene();
    LensParams lens = shallow_lens();
    SampleRecord rec = synth_scene(spec, lens, 5);
    REQUIRE(rec.depth);
    for (std::int64_t i = 0; i < rec.blur_label.numel(); ++i) {
        double c = lens.sensor_scale * (lens.focal_length_units() / lens.f_number) * lens.focal_length_units() *
                   std::abs((*rec.depth)[i] - lens.focus_distance) /
                   ((*rec.depth)[i] * (lens.focus_distance - lens.focal_length_units()));
        CHECK(rec.blur_label[i] == (c > lens.coc_in_focus_threshold ? 1.0 : 0.0));
    }
    // the scene has both classes
    CHECK(tensor_sum(rec.blur_label) > 0.0);
    CHECK(tensor_sum(rec.blur_label) < static_cast<double>(rec.blur_label.numel()));
}

TEST_CASE("narrow apertures keep a superset of pixels in focus") {
    RandomStream rng(9);
    for (int i = 0; i < 5; ++i) {
        RandomStream scene_rng = rng.fork(static_cast<std::uint64_t>(i));
        SceneSpec spec = SceneSpec::random(32, 32, 2.0, scene_rng, true);
        SampleRecord shallow = synth_scene(spec, shallow_lens(), 77);
        SampleRecord wide = synth_scene(spec, wide_lens(), 77);
        for (std::int64_t p = 0; p < shallow.blur_label.numel(); ++p)
            if (shallow.blur_label[p] == 0.0) CHECK(wide.blur_label[p] == 0.0);
    }
}

TEST_CASE("objects at or inside the focal length are rejected") {
    SceneSpec spec = two_plane_scene();
    spec.layers[1].depth = 0.01;
    CHECK_THROWS_AS(synth_scene(spec, shallow_lens(), 1), ArgumentError);
}

TEST_CASE("generated datasets round-trip through the loader") {
    TempDir dir("dbd_test_synth");
    SynthOptions options;
    options.height = 32;
    options.width = 32;
    auto stems = synth_dataset(dir.path, 16, {shallow_lens(), wide_lens()}, 123, options);
    REQUIRE(stems.size() == 16);

    auto records = load_dataset(dir.path, dir.path / "manifest.txt");
    REQUIRE(records.size() == 16);
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].meta.source_id == stems[i]);
        CHECK(records[i].depth.has_value());
        for (double v : records[i].blur_label) CHECK((v == 0.0 || v == 1.0));
    }

    // labels round-trip bit-exactly
    for (std::size_t i = 0; i < 4; ++i) {
        RandomStream rng = RandomStream(123).fork(0x7363656e65ull, static_cast<std::uint64_t>(i));
        SceneSpec spec = SceneSpec::random(32, 32, records[i].meta.focus_distance.value(), rng, true);
        LensParams lens = shallow_lens();
        lens.f_number = records[i].meta.aperture_f_number.value();
        SampleRecord direct = synth_scene(spec, lens, mix64(123 ^ static_cast<std::uint64_t>(i)));
        CHECK(max_abs_diff(direct.blur_label, records[i].blur_label) == 0.0);
    }

    // wide-aperture-number (small aperture) regime has fewer blur pixels on average
    double shallow_frac = 0.0, wide_frac = 0.0;
    int shallow_n = 0, wide_n = 0;
    for (const auto& rec : records) {
        double frac = tensor_sum(rec.blur_label) / static_cast<double>(rec.blur_label.numel());
        if (rec.meta.aperture_f_number.value() < 5.0) {
            shallow_frac += frac;
            ++shallow_n;
        } else {
            wide_frac += frac;
            ++wide_n;
        }
    }
    CHECK(wide_frac / wide_n < shallow_frac / shallow_n);
}

TEST_CASE("regenerating with the same seed is byte-identical") {
    TempDir a("dbd_test_synth_a"), b("dbd_test_synth_b");
    SynthOptions options;
    options.height = 32;
    options.width = 32;
    synth_dataset(a.path, 6, {shallow_lens()}, 9, options);
    synth_dataset(b.path, 6, {shallow_lens()}, 9, options);
    for (const auto& entry : fs::recursive_directory_iterator(a.path)) {
        if (!entry.is_regular_file()) continue;
        fs::path rel = fs::relative(entry.path(), a.path);
        std::ifstream fa(entry.path(), std::ios::binary), fb(b.path / rel, std::ios::binary);
        std::string ca((std::istreambuf_iterator<char>(fa)), {});
        std::string cb((std::istreambuf_iterator<char>(fb)), {});
        CHECK(ca == cb);
    }
}

TEST_CASE("loader errors name the offending stem") {
    TempDir dir("dbd_test_load_err");
    SynthOptions options;
    options.height = 16;
    options.width = 16;
    synth_dataset(dir.path, 3, {shallow_lens()}, 3, options);
    fs::remove(dir.path / "masks" / "synth_0001.pgm");
    try {
        load_dataset(dir.path, dir.path / "manifest.txt");
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("synth_0001") != std::string::npos);
    }
}

TEST_CASE("mask gray levels binarize at half range") {
    TempDir dir("dbd_test_gray");
    fs::create_directories(dir.path / "images");
    fs::create_directories(dir.path / "masks");
    Tensor img(Shape{1, 3, 4, 4}, 0.5);
    write_ppm(dir.path / "images" / "g.ppm", img);
    Tensor mask(Shape{1, 1, 4, 4});
    mask.at(0, 0, 0, 0) = 0.0;
    mask.at(0, 0, 0, 1) = 128.0 / 255.0;
    mask.at(0, 0, 0, 2) = 1.0;
    write_pgm(dir.path / "masks" / "g.pgm", mask);
    std::ofstream(dir.path / "manifest.txt") << "g\n";

    auto records = load_dataset(dir.path, dir.path / "manifest.txt");
    REQUIRE(records.size() == 1);
    CHECK(records[0].blur_label.at(0, 0, 0, 0) == 0.0);
    CHECK(records[0].blur_label.at(0, 0, 0, 1) == 1.0);
    CHECK(records[0].blur_label.at(0, 0, 0, 2) == 1.0);

    auto inverted = load_dataset(dir.path, dir.path / "manifest.txt", true);
    CHECK(inverted[0].blur_label.at(0, 0, 0, 0) == 1.0);
    CHECK(inverted[0].blur_label.at(0, 0, 0, 1) == 0.0);
}

TEST_CASE("augmentation flips image and label together") {
    SceneSpec spec = two_plane_scene();
    SampleRecord rec = synth_scene(spec, shallow_lens(), 21);

    AugmentConfig cfg;
    cfg.out_h = 32;
    cfg.out_w = 32;
    cfg.jitter = 0.0;

    SUBCASE("forced flip matches a direct flip of both planes") {
        cfg.flip_prob = 1.0;
        SampleRecord aug = augment(rec, cfg, 5);
        CHECK(max_abs_diff(aug.image, flip_vertical(rec.image)) == 0.0);
        CHECK(max_abs_diff(aug.blur_label, flip_vertical(rec.blur_label)) == 0.0);
        CHECK(max_abs_diff(*aug.depth, flip_vertical(*rec.depth)) == 0.0);
    }
    SUBCASE("no flip and zero jitter is resize-only") {
        cfg.flip_prob = 0.0;
        SampleRecord aug = augment(rec, cfg, 5);
        CHECK(max_abs_diff(aug.image, rec.image) == 0.0);
        CHECK(max_abs_diff(aug.blur_label, rec.blur_label) == 0.0);
    }
    SUBCASE("two forced flips are the identity") {
        cfg.flip_prob = 1.0;
        SampleRecord once = augment(rec, cfg, 5);
        SampleRecord twice = augment(once, cfg, 6);
        CHECK(max_abs_diff(twice.image, rec.image) == 0.0);
        CHECK(max_abs_diff(twice.blur_label, rec.blur_label) == 0.0);
    }
    SUBCASE("augmentation is deterministic in the seed and keeps labels hard") {
        cfg.flip_prob = 0.5;
        cfg.jitter = 0.2;
        SampleRecord a = augment(rec, cfg, 99);
        SampleRecord b = augment(rec, cfg, 99);
        CHECK(max_abs_diff(a.image, b.image) == 0.0);
        for (double v : a.blur_label) CHECK((v == 0.0 || v == 1.0));
        CHECK(tensor_min(a.image) >= 0.0);
        CHECK(tensor_max(a.image) <= 1.0);
    }
    SUBCASE("resize to the model size keeps the paired geometry") {
        cfg.out_h = 16;
        cfg.out_w = 16;
        cfg.flip_prob = 1.0;
        SampleRecord aug = augment(rec, cfg, 7);
        CHECK(aug.image.shape() == Shape{1, 3, 16, 16});
        CHECK(aug.blur_label.shape() == Shape{1, 1, 16, 16});
        SampleRecord resized_then_flipped;
        Tensor expect = flip_vertical(resize_nearest(rec.blur_label, 16, 16));
        CHECK(max_abs_diff(aug.blur_label, expect) == 0.0);
    }
}

TEST_CASE("manifest metadata reaches the records") {
    TempDir dir("dbd_test_meta");
    SynthOptions options;
    options.height = 16;
    options.width = 16;
    synth_dataset(dir.path, 2, {shallow_lens(), wide_lens()}, 11, options);
    auto records = load_dataset(dir.path, dir.path / "manifest.txt");
    CHECK(records[0].meta.aperture_f_number.value() == doctest::Approx(1.8));
    CHECK(records[1].meta.aperture_f_number.value() == doctest::Approx(16.0));
    CHECK(records[0].meta.focus_distance.value() == doctest::Approx(2.0));
}
