#pragma once

// Farthest point sampling: greedy max-min subsampling. Each pick maximizes
// the squared distance to the already-selected set; ties resolve to the
// lowest index, first pick is start_index, so output is fully deterministic.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ltm/core.hpp"

namespace ltm {

inline std::vector<int32_t> farthest_point_sample(std::span<const Vec3> positions, int64_t m,
                                                  int32_t start_index = 0) {
    int64_t n = static_cast<int64_t>(positions.size());
    if (m < 1 || m > n)
        throw std::runtime_error("farthest_point_sample: m must be in [1, " +
                                 std::to_string(n) + "], got " + std::to_string(m));
    if (start_index < 0 || start_index >= n)
        throw std::runtime_error("farthest_point_sample: start_index out of range");

    std::vector<int32_t> picked;
    picked.reserve(m);
    picked.push_back(start_index);
    std::vector<float> min_d2(n);
    for (int64_t i = 0; i < n; ++i)
        min_d2[i] = length_squared(positions[i] - positions[start_index]);

    for (int64_t round = 1; round < m; ++round) {
        int64_t best = 0;
        float best_d2 = min_d2[0];
        for (int64_t i = 1; i < n; ++i) {
            if (min_d2[i] > best_d2) {  // strict: ties keep the lowest index
                best_d2 = min_d2[i];
                best = i;
            }
        }
        picked.push_back(static_cast<int32_t>(best));
        for (int64_t i = 0; i < n; ++i) {
            float d2 = length_squared(positions[i] - positions[best]);
            if (d2 < min_d2[i]) min_d2[i] = d2;
        }
    }
    return picked;
}

}  // namespace ltm
