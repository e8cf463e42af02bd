#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace seedloc {

using Vec3 = std::array<double, 3>;    // world coordinates / sizes, mm
using Index3 = std::array<int, 3>;     // voxel indices or grid shape

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline bool finite(const Vec3& a) {
    return std::isfinite(a[0]) && std::isfinite(a[1]) && std::isfinite(a[2]);
}

// Scalar grid with physical spacing and origin. origin_mm is the world
// coordinate of the CENTER of voxel (0,0,0): world(i) = origin + i * spacing.
// Data is stored x-fastest: flat = ix + nx*(iy + ny*iz).
struct Volume {
    Index3 shape{0, 0, 0};
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    Vec3 origin_mm{0.0, 0.0, 0.0};
    std::vector<float> data;

    Volume() = default;
    Volume(Index3 sh, Vec3 sp, Vec3 o, float fill = 0.0f)
        : shape(sh), spacing_mm(sp), origin_mm(o),
          data(static_cast<std::size_t>(sh[0]) * sh[1] * sh[2], fill) {}

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
    }

    std::size_t flat(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(shape[0]) *
                   (static_cast<std::size_t>(iy) + static_cast<std::size_t>(shape[1]) * iz);
    }

    float& at(int ix, int iy, int iz) { return data[flat(ix, iy, iz)]; }
    float at(int ix, int iy, int iz) const { return data[flat(ix, iy, iz)]; }

    Index3 unflatten(std::size_t i) const {
        const int nx = shape[0], ny = shape[1];
        return {static_cast<int>(i % nx), static_cast<int>((i / nx) % ny),
                static_cast<int>(i / (static_cast<std::size_t>(nx) * ny))};
    }

    bool contains(const Index3& i) const {
        return i[0] >= 0 && i[0] < shape[0] && i[1] >= 0 && i[1] < shape[1] && i[2] >= 0 &&
               i[2] < shape[2];
    }

    Vec3 voxel_to_world(const Vec3& index) const {
        return {origin_mm[0] + index[0] * spacing_mm[0], origin_mm[1] + index[1] * spacing_mm[1],
                origin_mm[2] + index[2] * spacing_mm[2]};
    }
    Vec3 voxel_to_world(const Index3& index) const {
        return voxel_to_world(Vec3{static_cast<double>(index[0]), static_cast<double>(index[1]),
                                   static_cast<double>(index[2])});
    }
    Vec3 world_to_voxel(const Vec3& p) const {
        return {(p[0] - origin_mm[0]) / spacing_mm[0], (p[1] - origin_mm[1]) / spacing_mm[1],
                (p[2] - origin_mm[2]) / spacing_mm[2]};
    }

    double voxel_volume_mm3() const { return spacing_mm[0] * spacing_mm[1] * spacing_mm[2]; }

    Vec3 physical_min_mm() const {  // outer edge of voxel (0,0,0)
        return {origin_mm[0] - 0.5 * spacing_mm[0], origin_mm[1] - 0.5 * spacing_mm[1],
                origin_mm[2] - 0.5 * spacing_mm[2]};
    }
    Vec3 physical_max_mm() const {
        return {origin_mm[0] + (shape[0] - 0.5) * spacing_mm[0],
                origin_mm[1] + (shape[1] - 0.5) * spacing_mm[1],
                origin_mm[2] + (shape[2] - 0.5) * spacing_mm[2]};
    }

    // Throws std::invalid_argument on any violated invariant.
    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (shape[a] <= 0) throw std::invalid_argument("volume: shape components must be positive");
            if (!(spacing_mm[a] > 0.0) || !std::isfinite(spacing_mm[a]))
                throw std::invalid_argument("volume: spacing_mm components must be positive");
            if (!std::isfinite(origin_mm[a]))
                throw std::invalid_argument("volume: origin_mm must be finite");
        }
        if (data.size() != voxel_count())
            throw std::invalid_argument("volume: data length does not match shape");
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!std::isfinite(data[i]))
                throw std::invalid_argument("volume: non-finite value at voxel " + std::to_string(i));
        }
    }
};

// Ground-truth seed points in world mm.
struct AnnotationSet {
    std::vector<Vec3> points_mm;

    void validate() const {
        for (const auto& p : points_mm)
            if (!finite(p)) throw std::invalid_argument("annotations: non-finite coordinate");
    }
};

// A Volume whose values are (optionally scaled) probability density, mm^-3.
struct ProbabilityMap {
    Volume grid;
    double scale = 1.0;
};

struct Detection {
    Vec3 point_mm{0, 0, 0};
    double peak_value = 0.0;
    double basin_mass = 0.0;
};

struct DetectionSet {
    std::vector<Detection> detections;
};

}  // namespace seedloc
