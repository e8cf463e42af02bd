#include <doctest.h>

#include "seedloc/preprocess.hpp"
#include "seedloc/rng.hpp"
#include "seedloc/targetmap.hpp"

using namespace seedloc;

namespace {

Volume random_volume(Index3 shape, Vec3 spacing, Vec3 origin, std::uint64_t seed,
                     double lo = -500, double hi = 1000) {
    Volume v(shape, spacing, origin);
    Rng rng(seed);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

}  // namespace

TEST_CASE("clamp maps out-of-range values to the bounds") {
    Volume v({2, 2, 1}, {1, 1, 1}, {0, 0, 0});
    v.data = {-1000.0f, 500.0f, 100.0f, -80.0f};
    const Volume c = clamp_values(v, -80, 175);
    CHECK(c.data[0] == -80.0f);
    CHECK(c.data[1] == 175.0f);
    CHECK(c.data[2] == 100.0f);
    CHECK(c.data[3] == -80.0f);
    CHECK(c.spacing_mm == v.spacing_mm);
    CHECK(c.origin_mm == v.origin_mm);
}

TEST_CASE("clamp is idempotent and monotone") {
    const Volume v = random_volume({6, 5, 4}, {1, 1, 1}, {0, 0, 0}, 3);
    const Volume c1 = clamp_values(v);
    const Volume c2 = clamp_values(c1);
    CHECK(c1.data == c2.data);

    Volume w = v;
    Rng rng(4);
    for (auto& x : w.data) x += static_cast<float>(rng.uniform(0.0, 400.0));
    const Volume cw = clamp_values(w);
    for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(c1.data[i] <= cw.data[i]);

    CHECK_THROWS_AS(clamp_values(v, 10, 10), std::invalid_argument);
}

TEST_CASE("world/voxel transforms") {
    Volume v({8, 8, 8}, {0.5, 0.5, 0.5}, {10.0, 0.0, -4.0});
    SUBCASE("index zero maps to the origin") {
        CHECK(v.voxel_to_world(Index3{0, 0, 0}) == v.origin_mm);
    }
    SUBCASE("documented case") {
        const Vec3 u = v.world_to_voxel({12.0, 0.0, -4.0});
        CHECK(u[0] == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(u[1] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(u[2] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("round-trip identity") {
        const Vec3 p{11.3, 2.7, -1.9};
        const Vec3 q = v.voxel_to_world(v.world_to_voxel(p));
        for (int a = 0; a < 3; ++a) CHECK(q[a] == doctest::Approx(p[a]).epsilon(1e-9));
    }
}

TEST_CASE("resampling a constant volume is constant at the derived shape") {
    Volume v({10, 10, 4}, {1.0, 1.0, 2.5}, {0, 0, 0}, 42.5f);
    const Volume r = resample_trilinear(v, 0.5);
    CHECK(r.shape == Index3{20, 20, 20});
    for (float x : r.data) CHECK(x == doctest::Approx(42.5).epsilon(1e-7));
}

TEST_CASE("resample output shape covers the physical extent") {
    Volume v({100, 100, 40}, {1.0, 1.0, 2.5}, {3, 4, 5});
    const Volume r = resample_trilinear(v, 0.5);
    CHECK(r.shape == Index3{200, 200, 200});
    // extent start is preserved: origin shifts by (t - s)/2
    CHECK(r.origin_mm[0] == doctest::Approx(3.0 - 0.5 + 0.25).epsilon(1e-12));
    CHECK(r.origin_mm[2] == doctest::Approx(5.0 - 1.25 + 0.25).epsilon(1e-12));
}

TEST_CASE("trilinear resampling is exact on linear fields") {
    Volume v({20, 18, 12}, {1.0, 1.0, 2.5}, {-4.0, 2.0, 7.0});
    auto f = [](const Vec3& w) { return 0.01 * w[0] + 0.02 * w[1] + 0.005 * w[2] + 0.3; };
    for (int iz = 0; iz < v.shape[2]; ++iz)
        for (int iy = 0; iy < v.shape[1]; ++iy)
            for (int ix = 0; ix < v.shape[0]; ++ix)
                v.at(ix, iy, iz) = static_cast<float>(f(v.voxel_to_world(Index3{ix, iy, iz})));
    const Volume r = resample_trilinear(v, 0.5);
    // interior voxels (no edge clamping involved)
    double max_err = 0.0;
    for (int iz = 3; iz < r.shape[2] - 3; ++iz)
        for (int iy = 3; iy < r.shape[1] - 3; ++iy)
            for (int ix = 3; ix < r.shape[0] - 3; ++ix) {
                const double want = f(r.voxel_to_world(Index3{ix, iy, iz}));
                max_err = std::max(max_err, std::abs(want - r.at(ix, iy, iz)));
            }
    CHECK(max_err < 1e-5);
}

TEST_CASE("resampling to the same spacing reproduces voxel values") {
    const Volume v = random_volume({9, 7, 5}, {0.7, 0.7, 0.7}, {1, 2, 3}, 11);
    const Volume r = resample_trilinear(v, 0.7);
    REQUIRE(r.shape == v.shape);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        CHECK(std::abs(r.data[i] - v.data[i]) < 1e-6 * std::max(1.0f, std::abs(v.data[i])));
}

TEST_CASE("voi extraction") {
    const Volume v = random_volume({16, 16, 16}, {0.5, 0.5, 0.5}, {0, 0, 0}, 5);
    VoiSpec voi;
    voi.shape_voxels = {8, 8, 8};
    voi.spacing_mm = 0.5;

    SUBCASE("fully inside equals the source sub-block") {
        voi.center_mm = {4.0, 4.0, 4.0};  // voxel (8,8,8)
        const Volume c = extract_voi(v, voi);
        // start = 8 - 4 = 4
        for (int iz = 0; iz < 8; ++iz)
            for (int iy = 0; iy < 8; ++iy)
                for (int ix = 0; ix < 8; ++ix)
                    CHECK(c.at(ix, iy, iz) == v.at(4 + ix, 4 + iy, 4 + iz));
        CHECK(c.origin_mm == Vec3{2.0, 2.0, 2.0});
    }
    SUBCASE("fully outside fills with the fill value") {
        voi.center_mm = {100.0, 100.0, 100.0};
        const Volume c = extract_voi(v, voi, -80.0f);
        for (float x : c.data) CHECK(x == -80.0f);
    }
    SUBCASE("world coordinates are preserved") {
        for (const Vec3 center : {Vec3{4.0, 4.0, 4.0}, Vec3{1.1, 5.2, 3.3}, Vec3{0.4, 7.6, 2.2}}) {
            voi.center_mm = center;
            const Volume c = extract_voi(v, voi);
            const Vec3 p{3.7, 3.9, 3.2};
            const Vec3 in_src = v.world_to_voxel(p);
            const Vec3 in_voi = c.world_to_voxel(p);
            const Vec3 corner = v.world_to_voxel(c.origin_mm);
            for (int a = 0; a < 3; ++a)
                CHECK(in_voi[a] == doctest::Approx(in_src[a] - corner[a]).epsilon(1e-9));
        }
    }
    SUBCASE("spacing mismatch is rejected") {
        voi.spacing_mm = 1.0;
        voi.center_mm = {4, 4, 4};
        CHECK_THROWS_AS(extract_voi(v, voi), std::invalid_argument);
    }
    SUBCASE("odd shapes are rejected") {
        voi.shape_voxels = {7, 8, 8};
        CHECK_THROWS_AS(voi.validate(), std::invalid_argument);
    }
}

TEST_CASE("flips") {
    const Volume v = random_volume({4, 6, 8}, {0.5, 0.5, 0.5}, {0, 1, 2}, 9);
    AnnotationSet ann;
    ann.points_mm = {{0.5, 1.5, 3.0}, {1.2, 2.0, 4.4}};

    SUBCASE("flipping twice restores volume and annotations") {
        for (const AxesMask mask : {AxesMask{1, 0, 0}, AxesMask{0, 1, 1}, AxesMask{1, 1, 1}}) {
            auto [v1, a1] = flip_augment(v, ann, mask);
            auto [v2, a2] = flip_augment(v1, a1, mask);
            CHECK(v2.data == v.data);
            for (std::size_t i = 0; i < ann.points_mm.size(); ++i)
                for (int a = 0; a < 3; ++a)
                    CHECK(a2.points_mm[i][static_cast<std::size_t>(a)] ==
                          doctest::Approx(ann.points_mm[i][static_cast<std::size_t>(a)])
                              .epsilon(1e-12));
        }
    }
    SUBCASE("empty mask is the identity") {
        auto [v1, a1] = flip_augment(v, ann, AxesMask{});
        CHECK(v1.data == v.data);
        CHECK(a1.points_mm == ann.points_mm);
    }
    SUBCASE("documented coordinate example") {
        // 4-voxel axis, origin 0, spacing 0.5: x = 0.5 -> 1.0
        Volume g({4, 2, 2}, {0.5, 0.5, 0.5}, {0, 0, 0});
        const Vec3 p = flip_point({0.5, 0.0, 0.0}, g, AxesMask{1, 0, 0});
        CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("volume data actually reverses") {
        auto [v1, a1] = flip_augment(v, ann, AxesMask{1, 0, 0});
        (void)a1;
        CHECK(v1.at(0, 2, 3) == v.at(3, 2, 3));
    }
}

TEST_CASE("target map commutes with flips") {
    Volume grid({12, 10, 8}, {0.5, 0.5, 0.5}, {0, 0, 0});
    AnnotationSet ann;
    ann.points_mm = {{2.3, 2.1, 1.7}, {3.9, 1.4, 2.2}};
    const KernelSpec spec{{1.0, 1.0, 2.0}, 4.0};
    for (const AxesMask mask : {AxesMask{1, 0, 0}, AxesMask{0, 1, 0}, AxesMask{0, 0, 1},
                                AxesMask{1, 1, 1}}) {
        auto [vol_f, ann_f] = flip_augment(grid, ann, mask);
        const ProbabilityMap direct = build_target_map(vol_f, ann_f, spec, 1.0);
        const Volume flipped = flip_volume(build_target_map(grid, ann, spec, 1.0).grid, mask);
        REQUIRE(direct.grid.data.size() == flipped.data.size());
        for (std::size_t i = 0; i < flipped.data.size(); ++i)
            CHECK(std::abs(direct.grid.data[i] - flipped.data[i]) < 1e-6);
    }
}
