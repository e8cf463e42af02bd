#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <string>

#include "seedloc/eval.hpp"
#include "seedloc/io.hpp"
#include "test_util.hpp"

using namespace seedloc;
using testutil::TempDir;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(SEEDLOC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

// the full desk pipeline into one directory; returns the eval json paths
std::vector<fs::path> mini_pipeline(const fs::path& dir) {
    const std::string d = dir.string();
    REQUIRE(run("gen-phantom --out " + d + "/data --seed 9 --n-volumes 3 --shape 24,24,24"
                " --seeds-min 2 --seeds-max 3 --noise-sd 5 --streaks 1 --jitter center") == 0);
    REQUIRE(run("make-targets --manifest " + d + "/data/dataset.json --out " + d +
                "/maps --scale 100") == 0);
    REQUIRE(run("train --manifest " + d + "/data/dataset.json --out " + d +
                " --seed 4 --levels 2 --base-channels 2 --rounds 4 --batch 2 --scale 100"
                " --weight-floor 0.1 --val-fraction 0.34") == 0);
    REQUIRE(run("infer --checkpoint " + d + "/model.ckpt.json --manifest " + d +
                "/data/dataset.json --out " + d + "/det --save-maps") == 0);
    std::vector<fs::path> evals;
    for (int i = 0; i < 3; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "phantom_%03d", i);
        REQUIRE(run("evaluate --gt " + d + "/data/" + name + ".pts.json --det " + d + "/det/" +
                    name + ".det.json --threshold-mm 3") == 0);
        evals.push_back(dir / "det" / (std::string(name) + ".eval.json"));
    }
    std::string eval_args;
    for (const auto& e : evals) eval_args += " " + e.string();
    REQUIRE(run("report" + eval_args + " --out " + d + "/report") == 0);
    return evals;
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run("") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("train --manifest /nonexistent/x.json") == 1);  // missing required --out
    CHECK(run("gen-phantom --out /tmp/x --bogus-flag 3") == 1);
}

TEST_CASE("training with an empty manifest fails with a validation error") {
    TempDir tmp("cliempty");
    write_text_file(tmp.path / "dataset.json", "[]\n");
    CHECK(run("train --manifest " + (tmp.path / "dataset.json").string() + " --out " +
              (tmp.path / "out").string() + " --rounds 2") == 1);
}

TEST_CASE("evaluate on identical point sets reports a perfect rate") {
    TempDir tmp("clieval");
    AnnotationSet gt;
    gt.points_mm = {{1, 2, 3}, {7, 8, 9}};
    write_annotations(gt, tmp.path / "a.pts.json");
    DetectionSet det;
    for (const auto& p : gt.points_mm) det.detections.push_back({p, 1.0, 1.0});
    write_detections(det, tmp.path / "a.det.json");
    CHECK(run("evaluate --gt " + (tmp.path / "a.pts.json").string() + " --det " +
              (tmp.path / "a.det.json").string()) == 0);
    const EvalReport r = eval_report_from_json(parse_json_file(tmp.path / "a.eval.json"));
    CHECK(r.detection_rate == 1.0);
    CHECK(r.detected_count == 2);
}

TEST_CASE("gradcheck subcommand passes") {
    CHECK(run("gradcheck --shape 6,6,6") == 0);
}

TEST_CASE("the full pipeline is byte-identical across reruns") {
    TempDir tmp1("clipipe1");
    TempDir tmp2("clipipe2");
    mini_pipeline(tmp1.path);
    mini_pipeline(tmp2.path);

    const std::vector<std::string> files = {
        "data/phantom_000.vol.raw", "data/phantom_000.vol.json", "data/phantom_002.pts.json",
        "data/dataset.json",        "maps/phantom_001.target.vol.raw",
        "model.ckpt.bin",           "model.ckpt.json",
        "loss_history.csv",         "det/phantom_000.det.json",
        "det/phantom_001.det.json", "det/phantom_002.det.json",
        "det/phantom_000.pred.vol.raw", "det/phantom_000.eval.json",
        "det/phantom_000.pairs.csv", "report/summary.csv", "report/summary.txt",
    };
    for (const auto& f : files) {
        CAPTURE(f);
        REQUIRE(fs::exists(tmp1.path / f));
        CHECK(testutil::same_bytes(tmp1.path / f, tmp2.path / f));
    }

    // resolved configs are persisted next to the outputs
    CHECK(fs::exists(tmp1.path / "data/config.gen-phantom.json"));
    CHECK(fs::exists(tmp1.path / "config.train.json"));
    CHECK(fs::exists(tmp1.path / "det/config.infer.json"));
}

TEST_CASE("config file values are used unless flags override them") {
    TempDir tmp("clicfg");
    json cfg;
    cfg["n_volumes"] = 2;
    cfg["shape"] = "16,16,16";
    cfg["seeds_min"] = 1;
    cfg["seeds_max"] = 1;
    cfg["jitter"] = "center";
    write_text_file(tmp.path / "gen.json", json_bytes(cfg));
    REQUIRE(run("gen-phantom --config " + (tmp.path / "gen.json").string() + " --out " +
                (tmp.path / "d").string() + " --seed 3 --shape 24,24,24") == 0);
    const auto manifest = read_manifest(tmp.path / "d/dataset.json");
    CHECK(manifest.size() == 2);  // from the config file
    const Volume v = read_volume(tmp.path / "d" / "phantom_000.vol.json");
    CHECK(v.shape == Index3{24, 24, 24});  // flag wins over the config file
}
