#pragma once

// Shared scene fixtures for the tracer/guiding/training tests.

#include <vector>

#include "ltm/core.hpp"
#include "ltm/scene.hpp"
#include "ltm/scene_gen.hpp"

namespace ltm::testing {

// Closed axis-aligned box [0,W]x[0,H]x[0,D], inward normals, one material.
inline Scene box_room(float w, float h, float d, const Material& mat) {
    Scene s;
    s.materials.push_back(mat);
    using ltm::detail::add_quad;
    add_quad(s, {0, 0, 0}, {0, 0, d}, {w, 0, d}, {w, 0, 0}, {0, 1, 0}, 0);
    add_quad(s, {0, h, 0}, {w, h, 0}, {w, h, d}, {0, h, d}, {0, -1, 0}, 0);
    add_quad(s, {0, 0, 0}, {w, 0, 0}, {w, h, 0}, {0, h, 0}, {0, 0, 1}, 0);
    add_quad(s, {w, 0, d}, {0, 0, d}, {0, h, d}, {w, h, d}, {0, 0, -1}, 0);
    add_quad(s, {0, 0, d}, {0, 0, 0}, {0, h, 0}, {0, h, d}, {1, 0, 0}, 0);
    add_quad(s, {w, 0, 0}, {w, 0, d}, {w, h, d}, {w, h, 0}, {-1, 0, 0}, 0);
    s.camera.origin = {w * 0.5f, h * 0.5f, d * 0.1f};
    s.camera.look_at = {w * 0.5f, h * 0.5f, d * 0.9f};
    return s;
}

inline Material furnace_material(float reflectance, float emission) {
    Material m;
    m.kind = MaterialKind::kEmitter;
    m.albedo = Vec3{reflectance, reflectance, reflectance};
    m.radiance = Vec3{emission, emission, emission};
    return m;
}

inline Scene icosahedron_scene(float radius = 1.0f) {
    const float p = 1.6180339887f;  // golden ratio
    const Vec3 verts[12] = {{-1, p, 0}, {1, p, 0},  {-1, -p, 0}, {1, -p, 0},
                            {0, -1, p}, {0, 1, p},  {0, -1, -p}, {0, 1, -p},
                            {p, 0, -1}, {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
    const int faces[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                              {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                              {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                              {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    Scene s;
    s.materials.push_back({MaterialKind::kLambertian, {0.5f, 0.5f, 0.5f}});
    for (const auto& f : faces) {
        Triangle t;
        t.v0 = normalize(verts[f[0]]) * radius;
        t.v1 = normalize(verts[f[1]]) * radius;
        t.v2 = normalize(verts[f[2]]) * radius;
        Vec3 n = t.geometric_normal();
        t.n0 = t.n1 = t.n2 = n;
        t.material = 0;
        s.triangles.push_back(t);
    }
    return s;
}

}  // namespace ltm::testing
