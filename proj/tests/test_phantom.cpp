#include <doctest.h>

#include "seedloc/phantom.hpp"
#include "seedloc/preprocess.hpp"
#include "test_util.hpp"

using namespace seedloc;
using testutil::TempDir;

namespace {

PhantomConfig clean_config() {
    PhantomConfig cfg;
    cfg.rng_seed = 12;
    cfg.shape = {64, 64, 48};
    cfg.spacing_mm = {0.5, 0.5, 0.5};
    cfg.seed_count = 20;
    cfg.noise_sd_hu = 0.0;
    cfg.streak_artifact_count = 0;
    return cfg;
}

}  // namespace

TEST_CASE("phantom generation is deterministic") {
    PhantomConfig cfg = clean_config();
    cfg.noise_sd_hu = 10.0;
    cfg.streak_artifact_count = 3;
    cfg.cluster_fraction = 0.3;
    const PhantomResult a = generate_phantom(cfg);
    const PhantomResult b = generate_phantom(cfg);
    CHECK(a.volume.data == b.volume.data);
    CHECK(a.annotations.points_mm == b.annotations.points_mm);
}

TEST_CASE("zero seeds give a background-only volume") {
    PhantomConfig cfg = clean_config();
    cfg.seed_count = 0;
    cfg.streak_artifact_count = 5;  // ignored without seeds
    cfg.noise_sd_hu = 10.0;
    const PhantomResult r = generate_phantom(cfg);
    CHECK(r.annotations.points_mm.empty());
    float vmax = -1e9f;
    for (float v : r.volume.data) vmax = std::max(vmax, v);
    CHECK(vmax < 200.0f);
}

TEST_CASE("every annotation lies on its seed") {
    PhantomConfig cfg = clean_config();
    const PhantomResult r = generate_phantom(cfg);
    REQUIRE(r.annotations.points_mm.size() == 20);
    REQUIRE(r.seeds.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        const Vec3& p = r.annotations.points_mm[i];
        // within half a seed length of the capsule center
        CHECK(distance(p, r.seeds[i].center_mm) <= cfg.seed_length_mm / 2 + 1e-9);
        // and inside a voxel that holds exactly seed_hu (pre-noise config)
        const Vec3 u = r.volume.world_to_voxel(p);
        const Index3 vi{static_cast<int>(std::lround(u[0])), static_cast<int>(std::lround(u[1])),
                        static_cast<int>(std::lround(u[2]))};
        REQUIRE(r.volume.contains(vi));
        CHECK(r.volume.at(vi[0], vi[1], vi[2]) == static_cast<float>(cfg.seed_hu));
    }
}

TEST_CASE("annotations stay on seed with center jitter") {
    PhantomConfig cfg = clean_config();
    cfg.annotation_jitter = PhantomConfig::Jitter::center;
    const PhantomResult r = generate_phantom(cfg);
    for (std::size_t i = 0; i < r.annotations.points_mm.size(); ++i) {
        const Vec3 u = r.volume.world_to_voxel(r.annotations.points_mm[i]);
        const Index3 vi{static_cast<int>(std::lround(u[0])), static_cast<int>(std::lround(u[1])),
                        static_cast<int>(std::lround(u[2]))};
        CHECK(r.volume.at(vi[0], vi[1], vi[2]) == static_cast<float>(cfg.seed_hu));
    }
}

TEST_CASE("seed voxels saturate the intensity clamp") {
    const PhantomResult r = generate_phantom(clean_config());
    float vmax = 0.0f;
    for (float v : r.volume.data) vmax = std::max(vmax, v);
    CHECK(vmax == 3000.0f);  // pre-clamp values exceed the upper bound
    const Volume clamped = clamp_values(r.volume, -80, 175);
    for (std::size_t f : r.seed_voxels[0]) CHECK(clamped.data[f] == 175.0f);
}

TEST_CASE("clustered seeds keep the configured spacing") {
    PhantomConfig cfg = clean_config();
    cfg.seed_count = 8;
    cfg.cluster_fraction = 1.0;
    cfg.cluster_gap_mm = 3.0;
    const PhantomResult r = generate_phantom(cfg);
    REQUIRE(r.seeds.size() == 8);
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
        double nearest = 1e9;
        for (std::size_t j = 0; j < r.seeds.size(); ++j)
            if (i != j)
                nearest = std::min(nearest, distance(r.seeds[i].center_mm, r.seeds[j].center_mm));
        CHECK(nearest <= cfg.cluster_gap_mm + 1e-6);
        CHECK(nearest >= 0.5 * cfg.cluster_gap_mm - 1e-6);
    }
}

TEST_CASE("streak artifacts perturb the background but not seed voxels") {
    PhantomConfig cfg = clean_config();
    cfg.streak_artifact_count = 4;
    const PhantomResult with = generate_phantom(cfg);
    for (const auto& voxels : with.seed_voxels)
        for (std::size_t f : voxels) CHECK(with.volume.data[f] == static_cast<float>(cfg.seed_hu));
    float lo = 1e9f;
    for (float v : with.volume.data) lo = std::min(lo, v);
    CHECK(lo < 0.0f);  // dark streaks push below the background range
}

TEST_CASE("impossible geometry fails after bounded retries") {
    PhantomConfig cfg = clean_config();
    cfg.shape = {8, 8, 8};  // 4 mm cube cannot hold a 4.5 mm seed with margin
    cfg.seed_count = 3;
    CHECK_THROWS_AS(generate_phantom(cfg), std::runtime_error);
}

TEST_CASE("dataset generation writes volumes, annotations and a manifest") {
    TempDir tmp("dataset");
    PhantomConfig cfg = clean_config();
    cfg.seed_count = 4;
    cfg.noise_sd_hu = 5.0;
    const auto entries = generate_dataset(cfg, 5, tmp.path, 7);
    REQUIRE(entries.size() == 5);
    const auto manifest = read_manifest(tmp.path / "dataset.json");
    REQUIRE(manifest.size() == 5);
    for (const auto& e : manifest) {
        const AnnotationSet ann =
            read_annotations(resolve_against(tmp.path / "dataset.json", e.annotation_path));
        CHECK(static_cast<int>(ann.points_mm.size()) == e.seed_count);
        CHECK(e.seed_count >= 4);
        CHECK(e.seed_count <= 7);
    }
    const Volume v0 = read_volume(resolve_against(tmp.path / "dataset.json", manifest[0].volume_path));
    const Volume v1 = read_volume(resolve_against(tmp.path / "dataset.json", manifest[1].volume_path));
    CHECK(v0.data != v1.data);
}

TEST_CASE("phantom config validation") {
    PhantomConfig cfg = clean_config();
    cfg.cluster_fraction = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = clean_config();
    cfg.seed_count = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = clean_config();
    cfg.spacing_mm[1] = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
