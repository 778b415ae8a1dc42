#pragma once

// Hemispherical radiance grid: 32x32 RGB bins over (u,v) in [0,1)^2 with
// cos(theta) = 1 - u (rows uniform in cos theta) and phi = 2 pi v around the
// deterministic tangent frame. Every bin subtends the same solid angle
// (1/32)*(2 pi/32) = pi/512 sr.

#include <vector>

#include "ltm/core.hpp"

namespace ltm {

struct RadianceGrid {
    static constexpr int kRes = 32;
    static constexpr int kBins = kRes * kRes;
    std::vector<Vec3> bins = std::vector<Vec3>(kBins);

    Vec3& at(int row, int col) { return bins[row * kRes + col]; }
    const Vec3& at(int row, int col) const { return bins[row * kRes + col]; }
};

constexpr float kGridBinSolidAngle = (1.0f / RadianceGrid::kRes) *
                                     (kTwoPi / RadianceGrid::kRes);

// Local direction for grid coordinates (u,v) in [0,1)^2.
inline Vec3 grid_direction_local(float u, float v) {
    float cos_theta = 1.0f - u;
    float sin_theta = std::sqrt(std::max(0.0f, 1.0f - cos_theta * cos_theta));
    float phi = kTwoPi * v;
    return {sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta};
}

inline float grid_bin_center_cos_theta(int row) {
    return 1.0f - (static_cast<float>(row) + 0.5f) / RadianceGrid::kRes;
}

inline Vec3 grid_bin_center_direction_local(int row, int col) {
    return grid_direction_local((static_cast<float>(row) + 0.5f) / RadianceGrid::kRes,
                                (static_cast<float>(col) + 0.5f) / RadianceGrid::kRes);
}

// Cosine-weighted Riemann sum over bin centers; approximates irradiance.
inline Vec3 grid_cosine_integral(const RadianceGrid& grid) {
    Vec3 total{0, 0, 0};
    for (int r = 0; r < RadianceGrid::kRes; ++r) {
        float cos_theta = grid_bin_center_cos_theta(r);
        for (int c = 0; c < RadianceGrid::kRes; ++c)
            total += grid.at(r, c) * (cos_theta * kGridBinSolidAngle);
    }
    return total;
}

}  // namespace ltm
