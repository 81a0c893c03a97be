#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <sys/wait.h>

#include "dbd/eval.hpp"
#include "dbd/image_io.hpp"

using namespace dbd;
namespace fs = std::filesystem;

namespace {

struct RunOutput {
    int exit_code = -1;
    std::string text;
};

RunOutput run_cli(const std::string& args) {
    std::string cmd = std::string(DBD_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 512> buf{};
    RunOutput out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) out.text += buf.data();
    int status = pclose(pipe);
    out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

int count_lines(const fs::path& p) {
    std::ifstream is(p);
    int n = 0;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) ++n;
    return n;
}

struct Workspace {
    fs::path root;
    fs::path config;
    fs::path dataset;

    Workspace() {
        root = fs::temp_directory_path() / "dbd_cli_ws";
        fs::remove_all(root);
        fs::create_directories(root);
        dataset = root / "dataset";

        nlohmann::json cfg = {
            {"seed", 5},
            {"output_dir", (root / "out").string()},
            {"model",
             {{"backbone_id", "tiny"},
              {"num_decoder_levels", 4},
              {"base_channels", 6},
              {"input_size", {32, 32}},
              {"variant", "dffnet"},
              {"depth_heads", false}}},
            {"train",
             {{"batch_size", 4},
              {"max_epochs", 3},
              {"lr_model", 1e-3},
              {"stage1_loss", "bce_and_edge"},
              {"stage2_loss", "bce_and_edge"},
              {"augment", false}}},
            {"data", {{"dataset_root", dataset.string()}, {"manifest", (dataset / "manifest.txt").string()}}},
            {"synth", {{"n", 8}, {"height", 32}, {"width", 32}}},
        };
        config = root / "run.json";
        std::ofstream(config) << cfg.dump(2);
    }
};

} // namespace

TEST_CASE("command line workflow") {
    Workspace ws;
    std::string base = "--config " + ws.config.string();

    SUBCASE("synth is deterministic and prints the manifest path") {
        auto a = run_cli(base + " synth --out " + (ws.root / "ds_a").string());
        auto b = run_cli(base + " synth --out " + (ws.root / "ds_b").string());
        CHECK(a.exit_code == 0);
        CHECK(b.exit_code == 0);
        CHECK(a.text.find("ds_a/manifest.txt") != std::string::npos);
        CHECK(slurp(ws.root / "ds_a" / "manifest.txt") == slurp(ws.root / "ds_b" / "manifest.txt"));
        CHECK(slurp(ws.root / "ds_a" / "images" / "synth_0000.ppm") ==
              slurp(ws.root / "ds_b" / "images" / "synth_0000.ppm"));
        CHECK(fs::exists(ws.root / "ds_a" / "config.resolved.json"));
    }

    SUBCASE("regime flags reach the manifest") {
        auto r = run_cli(base + " synth --out " + (ws.root / "ds_r").string() + " --n 4 --regimes f2.8,f11");
        CHECK(r.exit_code == 0);
        std::string manifest = slurp(ws.root / "ds_r" / "manifest.txt");
        CHECK(manifest.find("f_number=2.8") != std::string::npos);
        CHECK(manifest.find("f_number=11") != std::string::npos);
    }

    SUBCASE("training writes history and checkpoints, and stages are validated") {
        REQUIRE(run_cli(base + " synth --out " + ws.dataset.string()).exit_code == 0);

        auto bad_stage = run_cli(base + " train --stage warmup");
        CHECK(bad_stage.exit_code == 1);

        auto missing_teacher = run_cli(base + " train --stage stage2");
        CHECK(missing_teacher.exit_code == 1);
        CHECK(missing_teacher.text.find("defocus teacher") != std::string::npos);

        auto s1 = run_cli(base + " train --stage stage1");
        CHECK(s1.exit_code == 0);
        fs::path ckpt = ws.root / "out" / "stage1.ckpt";
        fs::path history = ws.root / "out" / "stage1_history.jsonl";
        CHECK(fs::exists(ckpt));
        CHECK(count_lines(history) == 3);

        // resume continues the epoch numbering in the same history file
        auto resumed = run_cli(base + " train --stage stage1 --epochs 5 --resume " + ckpt.string());
        CHECK(resumed.exit_code == 0);
        CHECK(count_lines(history) == 5);
        std::ifstream hist(history);
        std::string line, last;
        int epoch4_seen = 0;
        while (std::getline(hist, line)) {
            if (line.find("\"epoch\":4") != std::string::npos) ++epoch4_seen;
            if (!line.empty()) last = line;
        }
        CHECK(epoch4_seen == 1);
        CHECK(last.find("\"epoch\":5") != std::string::npos);

        auto s2 = run_cli(base + " train --stage stage2 --epochs 2 --defocus-teacher " + ckpt.string());
        CHECK(s2.exit_code == 0);
        CHECK(fs::exists(ws.root / "out" / "stage2.ckpt"));
        int stage2_lines = count_lines(ws.root / "out" / "stage2_history.jsonl");
        CHECK(stage2_lines == 2);
        std::string h2 = slurp(ws.root / "out" / "stage2_history.jsonl");
        CHECK(h2.find("\"beta\":3") != std::string::npos);

        auto rd_bad = run_cli(base + " train --stage rdffnet");
        CHECK(rd_bad.exit_code == 1);
        CHECK(rd_bad.text.find("depth_heads") != std::string::npos);
    }

    SUBCASE("eval and predict run end to end, deterministically") {
        REQUIRE(run_cli(base + " synth --out " + ws.dataset.string()).exit_code == 0);
        REQUIRE(run_cli(base + " train --stage stage1 --epochs 2").exit_code == 0);
        fs::path ckpt = ws.root / "out" / "stage1.ckpt";

        fs::path report_a = ws.root / "out" / "report_a.txt";
        fs::path report_b = ws.root / "out" / "report_b.txt";
        auto ea = run_cli(base + " eval --checkpoint " + ckpt.string() + " --report " + report_a.string() +
                          " --plot " + (ws.root / "out" / "pr_a.ppm").string());
        auto eb = run_cli(base + " eval --checkpoint " + ckpt.string() + " --report " + report_b.string() +
                          " --plot " + (ws.root / "out" / "pr_b.ppm").string());
        CHECK(ea.exit_code == 0);
        CHECK(eb.exit_code == 0);
        CHECK(slurp(report_a) == slurp(report_b));
        CHECK(slurp(ws.root / "out" / "pr_a.ppm") == slurp(ws.root / "out" / "pr_b.ppm"));

        // the echoed line matches the report contents
        REQUIRE(ea.text.find("metrics mae=") != std::string::npos);
        MetricsReport parsed = MetricsReport::from_text(slurp(report_a));
        std::ostringstream expect;
        expect << "metrics mae=";
        CHECK(ea.text.find(parsed.summary_line()) != std::string::npos);

        // checkpoint/config mismatch fails the load
        nlohmann::json other = nlohmann::json::parse(slurp(ws.config));
        other["model"]["base_channels"] = 12;
        fs::path other_cfg = ws.root / "other.json";
        std::ofstream(other_cfg) << other.dump();
        auto mismatch = run_cli("--config " + other_cfg.string() + " eval --checkpoint " + ckpt.string());
        CHECK(mismatch.exit_code == 1);

        // predict: three decodable inputs, one junk file, one unsupported extension
        fs::path images = ws.root / "predict_in";
        fs::create_directories(images);
        for (int i = 0; i < 3; ++i)
            fs::copy_file(ws.dataset / "images" / ("synth_000" + std::to_string(i) + ".ppm"),
                          images / ("img" + std::to_string(i) + ".ppm"));
        std::ofstream(images / "broken.ppm") << "not an image";
        std::ofstream(images / "notes.txt") << "irrelevant";

        fs::path maps_a = ws.root / "maps_a";
        fs::path maps_b = ws.root / "maps_b";
        auto pa = run_cli(base + " predict --checkpoint " + ckpt.string() + " --images " + images.string() +
                          " --out " + maps_a.string());
        auto pb = run_cli(base + " predict --checkpoint " + ckpt.string() + " --images " + images.string() +
                          " --out " + maps_b.string());
        CHECK(pa.exit_code == 0);
        CHECK(pa.text.find("predicted 3 skipped 2") != std::string::npos);
        for (int i = 0; i < 3; ++i) {
            fs::path map = maps_a / ("img" + std::to_string(i) + ".pgm");
            REQUIRE(fs::exists(map));
            CHECK(slurp(map) == slurp(maps_b / ("img" + std::to_string(i) + ".pgm")));
        }
        Tensor map = read_image(maps_a / "img0.pgm");
        CHECK(map.shape() == Shape{1, 1, 32, 32});
        CHECK(tensor_min(map) >= 0.0);
        CHECK(tensor_max(map) <= 1.0);
    }

    SUBCASE("environment variable overrides the output root") {
        REQUIRE(run_cli(base + " synth --out " + ws.dataset.string()).exit_code == 0);
        fs::path env_out = ws.root / "env_out";
        std::string cmd = "DBD_OUTPUT_ROOT=" + env_out.string() + " " + std::string(DBD_CLI_PATH) + " " + base +
                          " train --stage stage1 --epochs 1 2>&1";
        REQUIRE(std::system(cmd.c_str()) == 0);
        CHECK(fs::exists(env_out / "stage1.ckpt"));
    }

    fs::remove_all(ws.root);
}
