#pragma once

// Z-order (Morton) serialization of a point cloud: positions are normalized
// to the cloud AABB, quantized to a 2^bits grid per axis, and bit-interleaved
// with x in the least significant position, then y, then z. The permutation
// sorts codes ascending with ties broken by original index.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "ltm/core.hpp"

namespace ltm {

inline uint64_t morton_encode(uint32_t x, uint32_t y, uint32_t z, int bits_per_axis) {
    uint64_t code = 0;
    for (int b = 0; b < bits_per_axis; ++b) {
        code |= (static_cast<uint64_t>((x >> b) & 1u) << (3 * b)) |
                (static_cast<uint64_t>((y >> b) & 1u) << (3 * b + 1)) |
                (static_cast<uint64_t>((z >> b) & 1u) << (3 * b + 2));
    }
    return code;
}

inline std::vector<uint64_t> morton_codes(std::span<const Vec3> positions, int bits_per_axis) {
    if (bits_per_axis < 4 || bits_per_axis > 16)
        throw std::runtime_error("serialize_zorder: bits_per_axis must be in [4,16]");
    AABB box;
    for (const Vec3& p : positions) box.grow(p);
    Vec3 ext = box.extent();
    bool warned = false;
    for (int a = 0; a < 3; ++a) {
        if (!(ext[a] > 0) && !positions.empty() && !warned) {
            std::cerr << "serialize_zorder: degenerate AABB axis " << a
                      << ", quantizing to 0\n";
            warned = true;
        }
    }
    uint32_t grid = 1u << bits_per_axis;
    std::vector<uint64_t> codes(positions.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        uint32_t q[3];
        for (int a = 0; a < 3; ++a) {
            if (!(ext[a] > 0)) {
                q[a] = 0;
                continue;
            }
            float t = (positions[i][a] - box.lo[a]) / ext[a];
            auto v = static_cast<int64_t>(t * static_cast<float>(grid));
            q[a] = static_cast<uint32_t>(std::clamp<int64_t>(v, 0, grid - 1));
        }
        codes[i] = morton_encode(q[0], q[1], q[2], bits_per_axis);
    }
    return codes;
}

inline std::vector<int32_t> serialize_zorder(std::span<const Vec3> positions,
                                             int bits_per_axis = 10) {
    std::vector<uint64_t> codes = morton_codes(positions, bits_per_axis);
    std::vector<int32_t> perm(positions.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](int32_t a, int32_t b) {
        return codes[a] < codes[b] || (codes[a] == codes[b] && a < b);
    });
    return perm;
}

}  // namespace ltm
