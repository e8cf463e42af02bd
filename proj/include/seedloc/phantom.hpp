#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedloc/io.hpp"
#include "seedloc/parallel.hpp"
#include "seedloc/rng.hpp"
#include "seedloc/types.hpp"

namespace seedloc {

// Synthetic CT-like volume with implanted radio-opaque capsules, streak
// artifacts and noise, plus one dot annotation per capsule.
struct PhantomConfig {
    std::uint64_t rng_seed = 0;
    Index3 shape{64, 64, 48};
    Vec3 spacing_mm{0.5, 0.5, 0.5};
    Vec3 origin_mm{0.0, 0.0, 0.0};
    int seed_count = 15;
    double seed_diameter_mm = 0.8;
    double seed_length_mm = 4.5;
    double cluster_fraction = 0.0;   // fraction of seeds placed in pairs/triples
    double cluster_gap_mm = 2.0;     // center-to-center spacing inside a cluster
    int streak_artifact_count = 0;
    double noise_sd_hu = 0.0;
    double background_hu_lo = 20.0;
    double background_hu_hi = 60.0;
    double seed_hu = 3000.0;
    enum class Jitter { uniform_on_seed, center };
    Jitter annotation_jitter = Jitter::uniform_on_seed;

    void validate() const {
        if (seed_count < 0) throw std::invalid_argument("phantom: seed_count must be >= 0");
        for (int a = 0; a < 3; ++a) {
            if (shape[a] <= 0) throw std::invalid_argument("phantom: shape must be positive");
            if (!(spacing_mm[a] > 0)) throw std::invalid_argument("phantom: spacing must be positive");
        }
        if (!(seed_diameter_mm > 0) || !(seed_length_mm > seed_diameter_mm))
            throw std::invalid_argument("phantom: invalid seed dimensions");
        if (cluster_fraction < 0.0 || cluster_fraction > 1.0)
            throw std::invalid_argument("phantom: cluster_fraction must be in [0,1]");
        if (!(cluster_gap_mm > 0)) throw std::invalid_argument("phantom: cluster_gap_mm must be positive");
        if (streak_artifact_count < 0 || noise_sd_hu < 0)
            throw std::invalid_argument("phantom: negative artifact/noise settings");
        if (!(background_hu_lo <= background_hu_hi))
            throw std::invalid_argument("phantom: background range inverted");
    }
};

struct Capsule {
    Vec3 center_mm{0, 0, 0};
    Vec3 axis_dir{0, 0, 1};   // unit vector
    double length_mm = 4.5;   // overall length including hemispherical caps
    double radius_mm = 0.4;

    double half_axis() const { return 0.5 * length_mm - radius_mm; }

    bool contains(const Vec3& p) const {
        const Vec3 d = p - center_mm;
        const double t = std::clamp(dot(d, axis_dir), -half_axis(), half_axis());
        return distance(d, axis_dir * t) <= radius_mm;
    }
};

struct PhantomResult {
    Volume volume;
    AnnotationSet annotations;
    std::vector<Capsule> seeds;
    std::vector<std::vector<std::size_t>> seed_voxels;  // flat indices rasterized per seed
};

namespace detail {

constexpr double kPlacementMarginMm = 2.0;
constexpr int kPlacementTries = 500;
constexpr double kStreakAmplitudeHu = 300.0;
constexpr double kStreakSigmaMm = 1.0;

inline bool capsule_fits(const Capsule& c, const Volume& grid) {
    const Vec3 lo = grid.physical_min_mm();
    const Vec3 hi = grid.physical_max_mm();
    for (int a = 0; a < 3; ++a) {
        const double ext = std::abs(c.axis_dir[a]) * c.half_axis() + c.radius_mm;
        if (c.center_mm[a] - ext < lo[a] + kPlacementMarginMm) return false;
        if (c.center_mm[a] + ext > hi[a] - kPlacementMarginMm) return false;
    }
    return true;
}

inline std::vector<std::size_t> rasterize_capsule(const Capsule& c, Volume& grid, float value) {
    std::vector<std::size_t> voxels;
    Index3 lo, hi;
    for (int a = 0; a < 3; ++a) {
        const double r = c.half_axis() + c.radius_mm;
        lo[a] = std::max(0, static_cast<int>(std::floor((c.center_mm[a] - r - grid.origin_mm[a]) /
                                                        grid.spacing_mm[a])));
        hi[a] = std::min(grid.shape[a] - 1,
                         static_cast<int>(std::ceil((c.center_mm[a] + r - grid.origin_mm[a]) /
                                                    grid.spacing_mm[a])));
    }
    for (int iz = lo[2]; iz <= hi[2]; ++iz)
        for (int iy = lo[1]; iy <= hi[1]; ++iy)
            for (int ix = lo[0]; ix <= hi[0]; ++ix) {
                if (!c.contains(grid.voxel_to_world(Index3{ix, iy, iz}))) continue;
                const std::size_t f = grid.flat(ix, iy, iz);
                grid.data[f] = value;
                voxels.push_back(f);
            }
    return voxels;
}

inline Vec3 random_point_in_capsule(const Capsule& c, Rng& rng) {
    // orthonormal frame around the axis
    const Vec3 d = c.axis_dir;
    Vec3 e1 = std::abs(d[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    e1 = e1 - d * dot(e1, d);
    e1 = e1 * (1.0 / norm(e1));
    const Vec3 e2{d[1] * e1[2] - d[2] * e1[1], d[2] * e1[0] - d[0] * e1[2],
                  d[0] * e1[1] - d[1] * e1[0]};
    for (;;) {  // rejection from the bounding cylinder
        const double t = rng.uniform(-0.5 * c.length_mm, 0.5 * c.length_mm);
        const double a = rng.uniform(-c.radius_mm, c.radius_mm);
        const double b = rng.uniform(-c.radius_mm, c.radius_mm);
        if (a * a + b * b > c.radius_mm * c.radius_mm) continue;
        const Vec3 p = c.center_mm + d * t + e1 * a + e2 * b;
        if (c.contains(p)) return p;
    }
}

}  // namespace detail

inline PhantomResult generate_phantom(const PhantomConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.rng_seed);
    PhantomResult out;
    out.volume = Volume(cfg.shape, cfg.spacing_mm, cfg.origin_mm);
    Volume& vol = out.volume;

    // background
    for (auto& v : vol.data)
        v = static_cast<float>(rng.uniform(cfg.background_hu_lo, cfg.background_hu_hi));

    // seed geometry: clustered seeds sit cluster_gap_mm from a cluster mate.
    // Non-mates start at one seed length of center separation; when a volume
    // is too small for that, the spacing is halved a few times before the
    // bounded-retry error fires.
    double lone_min_sep = cfg.seed_length_mm;
    int n_clustered = static_cast<int>(std::lround(cfg.cluster_fraction * cfg.seed_count));
    std::vector<int> cluster_id(static_cast<std::size_t>(cfg.seed_count), -1);

    auto separation_ok = [&](const Vec3& center, int my_cluster) {
        for (std::size_t i = 0; i < out.seeds.size(); ++i) {
            const bool mate = my_cluster >= 0 && cluster_id[i] == my_cluster;
            const double min_sep = mate ? 0.5 * cfg.cluster_gap_mm : lone_min_sep;
            if (distance(out.seeds[i].center_mm, center) < min_sep) return false;
        }
        return true;
    };

    auto place_capsule = [&](const Capsule& cap, int cid) {
        out.seeds.push_back(cap);
        cluster_id[out.seeds.size() - 1] = cid;
    };

    const Vec3 lo = vol.physical_min_mm();
    const Vec3 hi = vol.physical_max_mm();
    auto random_capsule = [&](Rng& r) {
        Capsule c;
        c.length_mm = cfg.seed_length_mm;
        c.radius_mm = 0.5 * cfg.seed_diameter_mm;
        r.unit_vector(c.axis_dir[0], c.axis_dir[1], c.axis_dir[2]);
        for (int a = 0; a < 3; ++a) c.center_mm[a] = r.uniform(lo[a], hi[a]);
        return c;
    };

    int next_cluster = 0;
    int placed = 0;
    int clustered_placed = 0;
    while (placed < cfg.seed_count) {
        // consume the clustered quota in pairs/triples, then place singles
        int group = 1;
        int cid = -1;
        const int cluster_left = n_clustered - clustered_placed;
        if (cluster_left >= 2) {
            group = cluster_left >= 3 && rng.below(2) == 0 ? 3 : 2;
            group = std::min(group, cfg.seed_count - placed);
        }
        if (group >= 2) cid = next_cluster++;
        else group = 1;

        bool ok = false;
        for (int relax = 0; relax < 4 && !ok; ++relax) {
            if (relax > 0) lone_min_sep *= 0.5;
            for (int attempt = 0; attempt < detail::kPlacementTries && !ok; ++attempt) {
                Capsule anchor = random_capsule(rng);
                if (!detail::capsule_fits(anchor, vol) || !separation_ok(anchor.center_mm, cid))
                    continue;
                std::vector<Capsule> members{anchor};
                bool group_ok = true;
                for (int m = 1; m < group && group_ok; ++m) {
                    group_ok = false;
                    for (int sub = 0; sub < detail::kPlacementTries; ++sub) {
                        Vec3 dir;
                        rng.unit_vector(dir[0], dir[1], dir[2]);
                        Capsule part = random_capsule(rng);
                        part.center_mm = members[static_cast<std::size_t>(m - 1)].center_mm +
                                         dir * cfg.cluster_gap_mm;
                        if (!detail::capsule_fits(part, vol)) continue;
                        bool sep = separation_ok(part.center_mm, cid);
                        for (const auto& mem : members)
                            if (distance(mem.center_mm, part.center_mm) < 0.5 * cfg.cluster_gap_mm)
                                sep = false;
                        if (!sep) continue;
                        members.push_back(part);
                        group_ok = true;
                        break;
                    }
                }
                if (!group_ok) continue;
                for (const auto& m : members) place_capsule(m, cid);
                ok = true;
            }
        }
        if (!ok)
            throw std::runtime_error("phantom: seed placement failed after " +
                                     std::to_string(4 * detail::kPlacementTries) + " attempts");
        placed += group;
        if (cid >= 0) clustered_placed += group;
    }

    // streak artifacts: additive +/-300 HU lines through seed centers,
    // Gaussian cross-section, drawn before seeds so seed voxels stay exact
    if (!out.seeds.empty()) {
        for (int s = 0; s < cfg.streak_artifact_count; ++s) {
            const auto& seed = out.seeds[rng.below(out.seeds.size())];
            Vec3 dir;
            rng.unit_vector(dir[0], dir[1], dir[2]);
            const double amp =
                (rng.below(2) == 0 ? 1.0 : -1.0) * detail::kStreakAmplitudeHu;
            const double inv2s2 = 1.0 / (2.0 * detail::kStreakSigmaMm * detail::kStreakSigmaMm);
            for (int iz = 0; iz < vol.shape[2]; ++iz)
                for (int iy = 0; iy < vol.shape[1]; ++iy)
                    for (int ix = 0; ix < vol.shape[0]; ++ix) {
                        const Vec3 p = vol.voxel_to_world(Index3{ix, iy, iz});
                        const Vec3 d = p - seed.center_mm;
                        const double t = dot(d, dir);
                        const double r2 = dot(d, d) - t * t;
                        vol.at(ix, iy, iz) += static_cast<float>(amp * std::exp(-r2 * inv2s2));
                    }
        }
    }

    // rasterize seeds (overwrites streaks/background inside each capsule)
    for (auto& seed : out.seeds) {
        auto voxels = detail::rasterize_capsule(seed, vol, static_cast<float>(cfg.seed_hu));
        int regen = 0;
        while (voxels.empty() && regen++ < detail::kPlacementTries) {
            // pathological orientation left no voxel center inside; redraw it
            Capsule c = random_capsule(rng);
            if (!detail::capsule_fits(c, vol) || !separation_ok(c.center_mm, -1)) continue;
            seed = c;
            voxels = detail::rasterize_capsule(seed, vol, static_cast<float>(cfg.seed_hu));
        }
        if (voxels.empty()) throw std::runtime_error("phantom: capsule rasterized to zero voxels");
        out.seed_voxels.push_back(std::move(voxels));
    }

    // annotations: one point per seed, inside a voxel that holds seed_hu
    for (std::size_t i = 0; i < out.seeds.size(); ++i) {
        const Capsule& seed = out.seeds[i];
        Vec3 ann{0, 0, 0};
        bool found = false;
        if (cfg.annotation_jitter == PhantomConfig::Jitter::center) {
            ann = seed.center_mm;
            const Vec3 u = vol.world_to_voxel(ann);
            const Index3 vi{static_cast<int>(std::lround(u[0])), static_cast<int>(std::lround(u[1])),
                            static_cast<int>(std::lround(u[2]))};
            found = vol.contains(vi) && vol.at(vi[0], vi[1], vi[2]) == static_cast<float>(cfg.seed_hu);
        } else {
            for (int t = 0; t < 64 && !found; ++t) {
                ann = detail::random_point_in_capsule(seed, rng);
                const Vec3 u = vol.world_to_voxel(ann);
                const Index3 vi{static_cast<int>(std::lround(u[0])),
                                static_cast<int>(std::lround(u[1])),
                                static_cast<int>(std::lround(u[2]))};
                found = vol.contains(vi) &&
                        vol.at(vi[0], vi[1], vi[2]) == static_cast<float>(cfg.seed_hu);
            }
        }
        if (!found) {
            // fall back to a rasterized voxel center of this seed
            const auto& vox = out.seed_voxels[i];
            const Index3 vi = vol.unflatten(vox[rng.below(vox.size())]);
            ann = vol.voxel_to_world(vi);
        }
        out.annotations.points_mm.push_back(ann);
    }

    // measurement noise
    if (cfg.noise_sd_hu > 0.0)
        for (auto& v : vol.data) v += static_cast<float>(rng.normal(0.0, cfg.noise_sd_hu));

    return out;
}

// Writes n_volumes phantoms (rng_seed offset by index) plus dataset.json.
// If seed_count_max > cfg.seed_count, each volume draws its seed count
// uniformly from [cfg.seed_count, seed_count_max].
inline std::vector<ManifestEntry> generate_dataset(const PhantomConfig& cfg, int n_volumes,
                                                   const fs::path& out_dir,
                                                   int seed_count_max = -1) {
    if (n_volumes < 1) throw std::invalid_argument("dataset: n_volumes must be >= 1");
    cfg.validate();
    fs::create_directories(out_dir);
    Rng count_rng(cfg.rng_seed ^ 0x5eedc047c0047ULL);
    std::vector<PhantomConfig> configs;
    for (int i = 0; i < n_volumes; ++i) {
        PhantomConfig c = cfg;
        c.rng_seed = cfg.rng_seed + static_cast<std::uint64_t>(i);
        if (seed_count_max > cfg.seed_count)
            c.seed_count = static_cast<int>(count_rng.uniform_int(cfg.seed_count, seed_count_max));
        configs.push_back(c);
    }
    std::vector<ManifestEntry> entries(static_cast<std::size_t>(n_volumes));
    parallel_for(0, n_volumes, [&](std::int64_t i) {
        const PhantomResult r = generate_phantom(configs[static_cast<std::size_t>(i)]);
        char name[32];
        std::snprintf(name, sizeof(name), "phantom_%03d", static_cast<int>(i));
        write_volume(r.volume, out_dir / name);
        write_annotations(r.annotations, out_dir / (std::string(name) + ".pts.json"));
        ManifestEntry& e = entries[static_cast<std::size_t>(i)];
        e.volume_path = std::string(name) + ".vol.json";
        e.annotation_path = std::string(name) + ".pts.json";
        e.seed_count = static_cast<int>(r.annotations.points_mm.size());
    });
    write_manifest(entries, out_dir / "dataset.json");
    return entries;
}

}  // namespace seedloc
