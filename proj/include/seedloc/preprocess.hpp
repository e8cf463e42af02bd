#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "seedloc/types.hpp"

namespace seedloc {

// Fixed-size crop description used to cut network inputs out of a full scan.
struct VoiSpec {
    Vec3 center_mm{0, 0, 0};
    Index3 shape_voxels{128, 128, 96};
    double spacing_mm = 0.5;

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (shape_voxels[a] < 8 || shape_voxels[a] % 2 != 0)
                throw std::invalid_argument("voi: shape components must be even and >= 8");
        }
        if (!(spacing_mm > 0.0)) throw std::invalid_argument("voi: spacing must be positive");
    }
};

inline Volume clamp_values(const Volume& v, double lo = -80.0, double hi = 175.0) {
    if (!(lo < hi)) throw std::invalid_argument("clamp: lo must be < hi");
    Volume out = v;
    const float flo = static_cast<float>(lo), fhi = static_cast<float>(hi);
    for (auto& x : out.data) x = std::min(std::max(x, flo), fhi);
    return out;
}

// Trilinear sample at continuous voxel coordinate u; out-of-grid coordinates
// are clamped to the nearest voxel center. Arithmetic in double.
inline double sample_trilinear(const Volume& v, Vec3 u) {
    for (int a = 0; a < 3; ++a) u[a] = std::clamp(u[a], 0.0, static_cast<double>(v.shape[a] - 1));
    const int x0 = static_cast<int>(std::floor(u[0]));
    const int y0 = static_cast<int>(std::floor(u[1]));
    const int z0 = static_cast<int>(std::floor(u[2]));
    const int x1 = std::min(x0 + 1, v.shape[0] - 1);
    const int y1 = std::min(y0 + 1, v.shape[1] - 1);
    const int z1 = std::min(z0 + 1, v.shape[2] - 1);
    const double fx = u[0] - x0, fy = u[1] - y0, fz = u[2] - z0;
    const double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
    const double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
    const double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
    const double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);
    const double c00 = c000 * (1 - fx) + c100 * fx;
    const double c10 = c010 * (1 - fx) + c110 * fx;
    const double c01 = c001 * (1 - fx) + c101 * fx;
    const double c11 = c011 * (1 - fx) + c111 * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
}

// Resamples onto a grid with the given spacing covering the same physical
// extent. Output shape = ceil(extent / target spacing) per axis.
inline Volume resample_trilinear(const Volume& v, Vec3 target_spacing_mm) {
    for (int a = 0; a < 3; ++a)
        if (!(target_spacing_mm[a] > 0.0))
            throw std::invalid_argument("resample: target spacing must be positive");
    Index3 out_shape;
    Vec3 out_origin;
    for (int a = 0; a < 3; ++a) {
        const double extent = v.shape[a] * v.spacing_mm[a];
        out_shape[a] = static_cast<int>(std::ceil(extent / target_spacing_mm[a] - 1e-9));
        if (out_shape[a] < 1) out_shape[a] = 1;
        // first output cell center sits half a cell inside the extent edge
        out_origin[a] = v.origin_mm[a] - 0.5 * v.spacing_mm[a] + 0.5 * target_spacing_mm[a];
    }
    Volume out(out_shape, target_spacing_mm, out_origin);
    for (int iz = 0; iz < out_shape[2]; ++iz)
        for (int iy = 0; iy < out_shape[1]; ++iy)
            for (int ix = 0; ix < out_shape[0]; ++ix) {
                const Vec3 w = out.voxel_to_world(Index3{ix, iy, iz});
                out.at(ix, iy, iz) = static_cast<float>(sample_trilinear(v, v.world_to_voxel(w)));
            }
    return out;
}

inline Volume resample_trilinear(const Volume& v, double iso_spacing_mm) {
    return resample_trilinear(v, Vec3{iso_spacing_mm, iso_spacing_mm, iso_spacing_mm});
}

namespace detail {
// round half toward lower index
inline int round_half_down(double u) { return static_cast<int>(std::ceil(u - 0.5)); }
}  // namespace detail

// Axis-aligned crop of voi.shape_voxels voxels, centered on the voxel nearest
// voi.center_mm. Requires the source to already be at the VOI spacing. Parts
// outside the source are filled with fill_value; world coordinates of kept
// voxels are preserved.
inline Volume extract_voi(const Volume& v, const VoiSpec& voi, float fill_value = -80.0f) {
    voi.validate();
    for (int a = 0; a < 3; ++a)
        if (std::abs(v.spacing_mm[a] - voi.spacing_mm) > 1e-6)
            throw std::invalid_argument("extract_voi: volume spacing does not match voi spacing");
    const Vec3 u = v.world_to_voxel(voi.center_mm);
    Index3 start;
    for (int a = 0; a < 3; ++a)
        start[a] = detail::round_half_down(u[a]) - voi.shape_voxels[a] / 2;
    Volume out(voi.shape_voxels, v.spacing_mm,
               v.voxel_to_world(Vec3{static_cast<double>(start[0]), static_cast<double>(start[1]),
                                     static_cast<double>(start[2])}),
               fill_value);
    const Index3 lo{std::max(0, -start[0]), std::max(0, -start[1]), std::max(0, -start[2])};
    const Index3 hi{std::min(voi.shape_voxels[0], v.shape[0] - start[0]),
                    std::min(voi.shape_voxels[1], v.shape[1] - start[1]),
                    std::min(voi.shape_voxels[2], v.shape[2] - start[2])};
    for (int iz = lo[2]; iz < hi[2]; ++iz)
        for (int iy = lo[1]; iy < hi[1]; ++iy)
            for (int ix = lo[0]; ix < hi[0]; ++ix)
                out.at(ix, iy, iz) = v.at(start[0] + ix, start[1] + iy, start[2] + iz);
    return out;
}

struct AxesMask {
    bool x = false, y = false, z = false;
    bool any() const { return x || y || z; }
    bool axis(int a) const { return a == 0 ? x : (a == 1 ? y : z); }
};

// Reverses data along the masked axes; metadata is unchanged, so the grid
// stays in place and the content is mirrored about its center.
inline Volume flip_volume(const Volume& v, AxesMask mask) {
    if (!mask.any()) return v;
    Volume out = v;
    const int nx = v.shape[0], ny = v.shape[1], nz = v.shape[2];
    for (int iz = 0; iz < nz; ++iz) {
        const int sz = mask.z ? nz - 1 - iz : iz;
        for (int iy = 0; iy < ny; ++iy) {
            const int sy = mask.y ? ny - 1 - iy : iy;
            for (int ix = 0; ix < nx; ++ix) {
                const int sx = mask.x ? nx - 1 - ix : ix;
                out.at(ix, iy, iz) = v.at(sx, sy, sz);
            }
        }
    }
    return out;
}

inline Vec3 flip_point(const Vec3& p, const Volume& grid, AxesMask mask) {
    Vec3 q = p;
    for (int a = 0; a < 3; ++a) {
        if (!mask.axis(a)) continue;
        q[a] = 2.0 * grid.origin_mm[a] + (grid.shape[a] - 1) * grid.spacing_mm[a] - p[a];
    }
    return q;
}

inline std::pair<Volume, AnnotationSet> flip_augment(const Volume& v, const AnnotationSet& ann,
                                                     AxesMask mask) {
    AnnotationSet out;
    out.points_mm.reserve(ann.points_mm.size());
    for (const auto& p : ann.points_mm) out.points_mm.push_back(flip_point(p, v, mask));
    return {flip_volume(v, mask), std::move(out)};
}

inline std::pair<Volume, Volume> flip_augment(const Volume& v, const Volume& companion_map,
                                              AxesMask mask) {
    return {flip_volume(v, mask), flip_volume(companion_map, mask)};
}

}  // namespace seedloc
