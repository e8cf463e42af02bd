#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "seedloc/types.hpp"

namespace seedloc {

// Anisotropic Gaussian kernel used to turn dot annotations into a continuous
// density. Truncated per axis at truncation_radius_sigmas; mass lost to the
// truncation is below 1e-4 of a kernel for radius >= 3.
struct KernelSpec {
    Vec3 sigma_mm{1.0, 1.0, 2.0};
    double truncation_radius_sigmas = 4.0;

    void validate() const {
        for (int a = 0; a < 3; ++a)
            if (!(sigma_mm[a] > 0.0)) throw std::invalid_argument("kernel: sigmas must be positive");
        if (!(truncation_radius_sigmas >= 3.0))
            throw std::invalid_argument("kernel: truncation radius must be >= 3 sigmas");
    }

    double peak_density() const {
        const double two_pi = 2.0 * std::numbers::pi;
        return std::pow(two_pi, -1.5) / (sigma_mm[0] * sigma_mm[1] * sigma_mm[2]);
    }
};

// Normalized Gaussian density at point_mm for a kernel centered at center_mm.
// Exactly zero as soon as any axis offset exceeds the truncation radius.
inline double kernel_eval(const Vec3& point_mm, const Vec3& center_mm, const KernelSpec& spec) {
    double q = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = point_mm[a] - center_mm[a];
        if (std::abs(d) > spec.truncation_radius_sigmas * spec.sigma_mm[a]) return 0.0;
        const double t = d / spec.sigma_mm[a];
        q += t * t;
    }
    return spec.peak_density() * std::exp(-0.5 * q);
}

// Sum of one kernel per annotation, sampled at voxel centers and multiplied
// by `scale`. Grid metadata is copied from `grid`; its data is ignored.
inline ProbabilityMap build_target_map(const Volume& grid, const AnnotationSet& annotations,
                                       const KernelSpec& spec = {}, double scale = 1.0) {
    spec.validate();
    annotations.validate();
    if (!(scale > 0.0)) throw std::invalid_argument("target map: scale must be positive");

    std::vector<double> acc(grid.voxel_count(), 0.0);
    for (const auto& c : annotations.points_mm) {
        // voxel bounding box of the truncation region
        Index3 lo, hi;
        for (int a = 0; a < 3; ++a) {
            const double r = spec.truncation_radius_sigmas * spec.sigma_mm[a];
            const double ulo = (c[a] - r - grid.origin_mm[a]) / grid.spacing_mm[a];
            const double uhi = (c[a] + r - grid.origin_mm[a]) / grid.spacing_mm[a];
            lo[a] = std::max(0, static_cast<int>(std::ceil(ulo)));
            hi[a] = std::min(grid.shape[a] - 1, static_cast<int>(std::floor(uhi)));
        }
        for (int iz = lo[2]; iz <= hi[2]; ++iz)
            for (int iy = lo[1]; iy <= hi[1]; ++iy)
                for (int ix = lo[0]; ix <= hi[0]; ++ix) {
                    const Vec3 w = grid.voxel_to_world(Index3{ix, iy, iz});
                    acc[grid.flat(ix, iy, iz)] += kernel_eval(w, c, spec);
                }
    }

    ProbabilityMap map;
    map.grid = Volume(grid.shape, grid.spacing_mm, grid.origin_mm);
    map.scale = scale;
    for (std::size_t i = 0; i < acc.size(); ++i)
        map.grid.data[i] = static_cast<float>(scale * acc[i]);
    return map;
}

// Integral of the map in kernel units (value sum * voxel volume / scale).
inline double map_mass(const ProbabilityMap& map) {
    double sum = 0.0;
    for (float v : map.grid.data) sum += v;
    return sum * map.grid.voxel_volume_mm3() / map.scale;
}

}  // namespace seedloc
