#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <vector>

#include "seedloc/types.hpp"

namespace seedloc {

// Marker-controlled watershed extraction. Thresholds are relative to the
// map's global maximum and the basin-mass filter is expressed in kernel
// masses, so the result is invariant under positive rescaling of the map.
struct ExtractConfig {
    double threshold_fraction = 0.05;       // of the global maximum
    double min_basin_mass_fraction = 0.1;   // of one unit kernel's mass
    int connectivity = 26;                  // 6, 18 or 26 (watershed flood)
    bool smoothing = false;                 // optional 1-voxel Gaussian presmooth

    void validate() const {
        if (!(threshold_fraction > 0 && threshold_fraction < 1))
            throw std::invalid_argument("extract: threshold_fraction must be in (0,1)");
        if (!(min_basin_mass_fraction > 0 && min_basin_mass_fraction < 1))
            throw std::invalid_argument("extract: min_basin_mass_fraction must be in (0,1)");
        if (connectivity != 6 && connectivity != 18 && connectivity != 26)
            throw std::invalid_argument("extract: connectivity must be 6, 18 or 26");
    }
};

namespace detail {

inline std::vector<Index3> neighbor_offsets(int connectivity) {
    std::vector<Index3> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (connectivity == 6 && manhattan > 1) continue;
                if (connectivity == 18 && manhattan > 2) continue;
                offs.push_back({dx, dy, dz});
            }
    return offs;
}

// separable Gaussian, sigma = 1 voxel, radius 3
inline Volume gaussian_smooth_1vox(const Volume& v) {
    constexpr int radius = 3;
    double wsum = 0.0;
    double kern[2 * radius + 1];
    for (int i = -radius; i <= radius; ++i) {
        kern[i + radius] = std::exp(-0.5 * i * i);
        wsum += kern[i + radius];
    }
    for (auto& k : kern) k /= wsum;
    Volume cur = v;
    for (int axis = 0; axis < 3; ++axis) {
        Volume next = cur;
        for (int iz = 0; iz < v.shape[2]; ++iz)
            for (int iy = 0; iy < v.shape[1]; ++iy)
                for (int ix = 0; ix < v.shape[0]; ++ix) {
                    double acc = 0.0;
                    for (int o = -radius; o <= radius; ++o) {
                        Index3 p{ix, iy, iz};
                        p[axis] = std::clamp(p[axis] + o, 0, v.shape[axis] - 1);
                        acc += kern[o + radius] * cur.at(p[0], p[1], p[2]);
                    }
                    next.at(ix, iy, iz) = static_cast<float>(acc);
                }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace detail

// Voxels >= all 26-neighbors and above threshold_fraction * max; an
// equal-valued plateau of such voxels yields a single marker at its lowest
// flat index. Markers are returned as ascending flat indices.
inline std::vector<std::size_t> find_local_maxima(const Volume& map, const ExtractConfig& cfg = {}) {
    cfg.validate();
    float vmax = 0.0f;
    for (float v : map.data) {
        if (v < 0.0f) throw std::invalid_argument("maxima: map must be non-negative");
        vmax = std::max(vmax, v);
    }
    if (vmax == 0.0f) return {};
    const double thresh = cfg.threshold_fraction * vmax;

    const auto offs = detail::neighbor_offsets(26);
    const int nx = map.shape[0], ny = map.shape[1], nz = map.shape[2];
    std::vector<std::uint8_t> is_max(map.voxel_count(), 0);
    for (int iz = 0; iz < nz; ++iz)
        for (int iy = 0; iy < ny; ++iy)
            for (int ix = 0; ix < nx; ++ix) {
                const float v = map.at(ix, iy, iz);
                if (!(v > thresh)) continue;
                bool ok = true;
                for (const auto& o : offs) {
                    const Index3 p{ix + o[0], iy + o[1], iz + o[2]};
                    if (!map.contains(p)) continue;
                    if (map.at(p[0], p[1], p[2]) > v) {
                        ok = false;
                        break;
                    }
                }
                if (ok) is_max[map.flat(ix, iy, iz)] = 1;
            }

    // one marker per connected equal-valued plateau of candidate voxels
    std::vector<std::size_t> markers;
    std::vector<std::uint8_t> seen(map.voxel_count(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t f = 0; f < map.voxel_count(); ++f) {
        if (!is_max[f] || seen[f]) continue;
        markers.push_back(f);  // scan order makes f the plateau's lowest flat index
        stack.assign(1, f);
        seen[f] = 1;
        const float v = map.data[f];
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            const Index3 ci = map.unflatten(cur);
            for (const auto& o : offs) {
                const Index3 p{ci[0] + o[0], ci[1] + o[1], ci[2] + o[2]};
                if (!map.contains(p)) continue;
                const std::size_t pf = map.flat(p[0], p[1], p[2]);
                if (seen[pf] || !is_max[pf] || map.data[pf] != v) continue;
                seen[pf] = 1;
                stack.push_back(pf);
            }
        }
    }
    return markers;
}

// Priority flood on the negated map seeded at the markers. Voxels at or
// below threshold_fraction * max stay background (label 0); labels are
// 1-based in marker order. Ties pop in ascending flat-index order.
inline std::vector<std::uint32_t> watershed_segment(const Volume& map,
                                                    const std::vector<std::size_t>& markers,
                                                    const ExtractConfig& cfg = {}) {
    cfg.validate();
    std::vector<std::uint32_t> labels(map.voxel_count(), 0);
    if (markers.empty()) return labels;
    float vmax = 0.0f;
    for (float v : map.data) vmax = std::max(vmax, v);
    const double thresh = cfg.threshold_fraction * vmax;

    struct Node {
        float value;
        std::size_t flat;
    };
    auto cmp = [](const Node& a, const Node& b) {
        if (a.value != b.value) return a.value < b.value;  // max-heap on value
        return a.flat > b.flat;                            // then min flat index
    };
    std::priority_queue<Node, std::vector<Node>, decltype(cmp)> queue(cmp);

    for (std::size_t m = 0; m < markers.size(); ++m) {
        labels[markers[m]] = static_cast<std::uint32_t>(m + 1);
        queue.push({map.data[markers[m]], markers[m]});
    }
    const auto offs = detail::neighbor_offsets(cfg.connectivity);
    while (!queue.empty()) {
        const Node cur = queue.top();
        queue.pop();
        const Index3 ci = map.unflatten(cur.flat);
        for (const auto& o : offs) {
            const Index3 p{ci[0] + o[0], ci[1] + o[1], ci[2] + o[2]};
            if (!map.contains(p)) continue;
            const std::size_t pf = map.flat(p[0], p[1], p[2]);
            if (labels[pf] != 0) continue;
            if (!(map.data[pf] > thresh)) continue;
            labels[pf] = labels[cur.flat];
            queue.push({map.data[pf], pf});
        }
    }
    return labels;
}

// Markers -> watershed -> per-basin intensity-weighted centroid and mass.
// Basins lighter than min_basin_mass_fraction of one kernel are dropped.
inline DetectionSet extract_detections(const ProbabilityMap& map, const ExtractConfig& cfg = {}) {
    cfg.validate();
    if (!(map.scale > 0)) throw std::invalid_argument("extract: map scale must be positive");
    const Volume* work = &map.grid;
    Volume smoothed;
    if (cfg.smoothing) {
        smoothed = detail::gaussian_smooth_1vox(map.grid);
        work = &smoothed;
    }
    const auto markers = find_local_maxima(*work, cfg);
    const auto labels = watershed_segment(*work, markers, cfg);

    struct Basin {
        double wsum = 0.0;
        Vec3 centroid_num{0, 0, 0};
        double peak = 0.0;
    };
    std::vector<Basin> basins(markers.size());
    for (std::size_t m = 0; m < markers.size(); ++m)
        basins[m].peak = work->data[markers[m]];
    for (std::size_t f = 0; f < work->data.size(); ++f) {
        if (labels[f] == 0) continue;
        Basin& b = basins[labels[f] - 1];
        const double v = work->data[f];
        const Vec3 w = work->voxel_to_world(work->unflatten(f));
        b.wsum += v;
        b.centroid_num = b.centroid_num + w * v;
    }

    const double voxvol = work->voxel_volume_mm3();
    DetectionSet out;
    for (const auto& b : basins) {
        if (b.wsum <= 0.0) continue;
        const double mass = b.wsum * voxvol / map.scale;
        if (mass < cfg.min_basin_mass_fraction) continue;
        Detection d;
        d.point_mm = b.centroid_num * (1.0 / b.wsum);
        d.peak_value = b.peak;
        d.basin_mass = mass;
        out.detections.push_back(d);
    }
    return out;
}

}  // namespace seedloc
