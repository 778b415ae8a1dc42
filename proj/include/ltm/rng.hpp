#pragma once

#include <cmath>
#include <cstdint>

namespace ltm {

namespace detail {
inline uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based RNG: output i of a stream is a pure function of (key, i), so
// disjoint streams keyed by (seed, item index) stay reproducible under any
// parallel schedule.
struct CounterRng {
    uint64_t key = 0;
    uint64_t counter = 0;

    CounterRng() = default;
    explicit CounterRng(uint64_t seed) : key(detail::splitmix64(seed)) {}
    CounterRng(uint64_t seed, uint64_t stream)
        : key(detail::splitmix64(detail::splitmix64(seed) ^ (stream * 0x9e3779b97f4a7c15ull))) {}

    uint64_t next_u64() { return detail::splitmix64(key + counter++ * 0x9e3779b97f4a7c15ull); }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    // Uniform in [0, 1), 24 mantissa bits.
    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1p-24f; }

    // Uniform in [0, 1), 53 mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller.
    float next_gaussian() {
        float u1 = next_float();
        float u2 = next_float();
        if (u1 < 1e-12f) u1 = 1e-12f;
        return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530717958647692f * u2);
    }
};

}  // namespace ltm
