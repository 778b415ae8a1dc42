#pragma once

// Point-cloud construction: area-uniform surface sampling for scene points
// (the encoder's input tokens) and query points (shading/supervision
// locations, emitter surfaces excluded).

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ltm/core.hpp"
#include "ltm/rng.hpp"
#include "ltm/scene.hpp"

namespace ltm {

struct ScenePointCloud {
    std::vector<Vec3> position;
    std::vector<Vec3> normal;
    std::vector<Vec3> albedo;
    std::vector<Vec3> emission;
    std::vector<float> roughness;

    int64_t size() const { return static_cast<int64_t>(position.size()); }

    void push(const Vec3& p, const Vec3& n, const Vec3& c, const Vec3& e, float r) {
        position.push_back(p);
        normal.push_back(n);
        albedo.push_back(c);
        emission.push_back(e);
        roughness.push_back(r);
    }
};

struct QueryPointSet {
    std::vector<Vec3> position;
    std::vector<Vec3> normal;
    std::vector<Vec3> albedo;
    // Baked targets; empty until a bake fills them.
    std::vector<Vec3> irradiance;        // size() entries when present
    std::vector<float> radiance_grids;   // size() * 32*32*3 floats when present

    int64_t size() const { return static_cast<int64_t>(position.size()); }
    bool has_irradiance() const { return !irradiance.empty(); }
    bool has_grids() const { return !radiance_grids.empty(); }
};

namespace detail {

struct AreaTable {
    std::vector<float> cumulative;  // over kept triangles
    std::vector<int32_t> tri_index;
    float total = 0;
};

template <class Keep>
AreaTable build_area_table(const Scene& scene, Keep&& keep) {
    AreaTable t;
    for (size_t i = 0; i < scene.triangles.size(); ++i) {
        if (!keep(static_cast<int>(i))) continue;
        float a = scene.triangles[i].area();
        t.total += a;
        t.cumulative.push_back(t.total);
        t.tri_index.push_back(static_cast<int32_t>(i));
    }
    return t;
}

inline int32_t pick_triangle(const AreaTable& t, float u) {
    float target = u * t.total;
    auto it = std::lower_bound(t.cumulative.begin(), t.cumulative.end(), target);
    size_t k = static_cast<size_t>(it - t.cumulative.begin());
    if (k >= t.tri_index.size()) k = t.tri_index.size() - 1;
    return t.tri_index[k];
}

inline Vec3 sample_triangle_point(const Triangle& tri, float u1, float u2) {
    if (u1 + u2 > 1.0f) {
        u1 = 1.0f - u1;
        u2 = 1.0f - u2;
    }
    return tri.v0 + u1 * (tri.v1 - tri.v0) + u2 * (tri.v2 - tri.v0);
}

}  // namespace detail

inline ScenePointCloud sample_surface_points(const Scene& scene, int64_t count, uint64_t seed) {
    if (count < 1) throw std::runtime_error("sample_surface_points: count must be >= 1");
    auto table = detail::build_area_table(scene, [](int) { return true; });
    if (!(table.total > 0)) throw std::runtime_error("sample_surface_points: zero-area scene");
    CounterRng rng(seed, /*stream=*/0x53504cull);  // "SPL"
    ScenePointCloud cloud;
    cloud.position.reserve(count);
    for (int64_t i = 0; i < count; ++i) {
        int32_t ti = detail::pick_triangle(table, rng.next_float());
        const Triangle& tri = scene.triangles[ti];
        Vec3 p = detail::sample_triangle_point(tri, rng.next_float(), rng.next_float());
        const Material& m = scene.materials[tri.material];
        Vec3 e = m.kind == MaterialKind::kEmitter ? m.radiance : Vec3{0, 0, 0};
        float r = m.kind == MaterialKind::kConductorGgx ? m.roughness : 0.0f;
        cloud.push(p, tri.n0, m.albedo, e, r);
    }
    return cloud;
}

inline QueryPointSet sample_query_points(const Scene& scene, int64_t count, uint64_t seed) {
    if (count < 1) throw std::runtime_error("sample_query_points: count must be >= 1");
    auto table = detail::build_area_table(scene, [&](int i) {
        return scene.materials[scene.triangles[i].material].kind != MaterialKind::kEmitter;
    });
    if (!(table.total > 0)) throw std::runtime_error("sample_query_points: no shadeable surface");
    CounterRng rng(seed, /*stream=*/0x51525950ull);  // "QRYP"
    QueryPointSet q;
    q.position.reserve(count);
    for (int64_t i = 0; i < count; ++i) {
        int32_t ti = detail::pick_triangle(table, rng.next_float());
        const Triangle& tri = scene.triangles[ti];
        q.position.push_back(detail::sample_triangle_point(tri, rng.next_float(), rng.next_float()));
        q.normal.push_back(tri.n0);
        q.albedo.push_back(scene.materials[tri.material].albedo);
    }
    return q;
}

}  // namespace ltm
