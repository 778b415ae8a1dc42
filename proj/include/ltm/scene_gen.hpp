#pragma once

// Procedural mini-scene generator: a closed axis-aligned room with box
// clutter and rectangular ceiling-flush area lights. Stands in for a
// full-size scene dataset at desk scale; deterministic per seed.

#include <stdexcept>
#include <string>
#include <vector>

#include "ltm/core.hpp"
#include "ltm/rng.hpp"
#include "ltm/scene.hpp"

namespace ltm {

struct MiniSceneConfig {
    uint64_t seed = 0;
    // Room extent ranges in meters, y up.
    Vec3 room_size_min{3.0f, 2.4f, 3.0f};
    Vec3 room_size_max{6.0f, 3.2f, 6.0f};
    int clutter_min = 3;
    int clutter_max = 8;
    std::vector<Vec3> albedo_palette{
        {0.73f, 0.73f, 0.73f}, {0.63f, 0.065f, 0.05f}, {0.14f, 0.45f, 0.091f},
        {0.25f, 0.35f, 0.60f}, {0.55f, 0.45f, 0.25f},  {0.40f, 0.40f, 0.40f},
        {0.66f, 0.50f, 0.32f}, {0.20f, 0.20f, 0.25f}};
    int light_min = 1;
    int light_max = 2;
    float light_size_min = 0.4f;
    float light_size_max = 1.0f;
    float wall_clearance = 0.2f;  // light clearance from walls
    Vec3 light_radiance{12.0f, 12.0f, 12.0f};
    // Fraction of clutter boxes made glossy (GGX conductor).
    float conductor_fraction = 0.0f;
    float conductor_roughness_min = 0.05f;
    float conductor_roughness_max = 0.4f;
    int max_retries = 100;
};

namespace detail {

inline void add_quad(Scene& s, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
                     const Vec3& n, int material) {
    // Two triangles a-b-c, a-c-d with the supplied flat normal.
    s.triangles.push_back({a, b, c, n, n, n, material});
    s.triangles.push_back({a, c, d, n, n, n, material});
}

// Five faces of an axis-aligned box (no bottom: it rests on the floor and a
// coplanar face would only contribute occluded sample points).
inline void add_box(Scene& s, const Vec3& lo, const Vec3& hi, int material) {
    add_quad(s, {lo.x, hi.y, lo.z}, {lo.x, hi.y, hi.z}, {hi.x, hi.y, hi.z}, {hi.x, hi.y, lo.z},
             {0, 1, 0}, material);  // top
    add_quad(s, {lo.x, lo.y, lo.z}, {lo.x, hi.y, lo.z}, {hi.x, hi.y, lo.z}, {hi.x, lo.y, lo.z},
             {0, 0, -1}, material);  // -z
    add_quad(s, {hi.x, lo.y, hi.z}, {hi.x, hi.y, hi.z}, {lo.x, hi.y, hi.z}, {lo.x, lo.y, hi.z},
             {0, 0, 1}, material);  // +z
    add_quad(s, {lo.x, lo.y, hi.z}, {lo.x, hi.y, hi.z}, {lo.x, hi.y, lo.z}, {lo.x, lo.y, lo.z},
             {-1, 0, 0}, material);  // -x
    add_quad(s, {hi.x, lo.y, lo.z}, {hi.x, hi.y, lo.z}, {hi.x, hi.y, hi.z}, {hi.x, lo.y, hi.z},
             {1, 0, 0}, material);  // +x
}

struct Rect2 {
    float x0, z0, x1, z1;
    bool overlaps(const Rect2& o) const {
        return x0 < o.x1 && o.x0 < x1 && z0 < o.z1 && o.z0 < z1;
    }
};

}  // namespace detail

inline Scene generate_mini_scene(const MiniSceneConfig& cfg) {
    if (cfg.clutter_min > cfg.clutter_max || cfg.light_min > cfg.light_max ||
        cfg.light_min < 1 || cfg.albedo_palette.empty())
        throw std::runtime_error("generate_mini_scene: invalid config ranges");
    if (!(cfg.light_size_min > 0))
        throw std::runtime_error("generate_mini_scene: light area must be positive");

    CounterRng rng(cfg.seed, /*stream=*/0x53434e45ull);  // "SCNE"
    auto uniform = [&](float lo, float hi) { return lo + (hi - lo) * rng.next_float(); };
    auto pick_albedo = [&] {
        return cfg.albedo_palette[rng.next_below(cfg.albedo_palette.size())];
    };

    Vec3 size{uniform(cfg.room_size_min.x, cfg.room_size_max.x),
              uniform(cfg.room_size_min.y, cfg.room_size_max.y),
              uniform(cfg.room_size_min.z, cfg.room_size_max.z)};
    const float W = size.x, H = size.y, D = size.z;

    Scene scene;
    int mat_floor = 0, mat_ceiling = 1, mat_walls = 2;
    scene.materials.push_back({MaterialKind::kLambertian, pick_albedo()});
    scene.materials.push_back({MaterialKind::kLambertian, pick_albedo()});
    scene.materials.push_back({MaterialKind::kLambertian, pick_albedo()});

    using detail::add_quad;
    add_quad(scene, {0, 0, 0}, {0, 0, D}, {W, 0, D}, {W, 0, 0}, {0, 1, 0}, mat_floor);
    add_quad(scene, {0, H, 0}, {W, H, 0}, {W, H, D}, {0, H, D}, {0, -1, 0}, mat_ceiling);
    add_quad(scene, {0, 0, 0}, {W, 0, 0}, {W, H, 0}, {0, H, 0}, {0, 0, 1}, mat_walls);   // z=0
    add_quad(scene, {W, 0, D}, {0, 0, D}, {0, H, D}, {W, H, D}, {0, 0, -1}, mat_walls);  // z=D
    add_quad(scene, {0, 0, D}, {0, 0, 0}, {0, H, 0}, {0, H, D}, {1, 0, 0}, mat_walls);   // x=0
    add_quad(scene, {W, 0, 0}, {W, 0, D}, {W, H, D}, {W, H, 0}, {-1, 0, 0}, mat_walls);  // x=W

    // Clutter: boxes resting on the floor, kept off the walls.
    int clutter = cfg.clutter_min +
                  static_cast<int>(rng.next_below(
                      static_cast<uint64_t>(cfg.clutter_max - cfg.clutter_min + 1)));
    const float box_margin = 0.05f;
    for (int i = 0; i < clutter; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
            float hx = uniform(0.1f, 0.6f);
            float hz = uniform(0.1f, 0.6f);
            float height = uniform(0.2f, std::min(1.6f, H - 0.6f));
            if (2 * hx + 2 * box_margin >= W || 2 * hz + 2 * box_margin >= D) continue;
            float cx = uniform(box_margin + hx, W - box_margin - hx);
            float cz = uniform(box_margin + hz, D - box_margin - hz);
            int mat = static_cast<int>(scene.materials.size());
            if (rng.next_float() < cfg.conductor_fraction) {
                Material m;
                m.kind = MaterialKind::kConductorGgx;
                m.albedo = {0.95f, 0.93f, 0.88f};
                m.roughness = uniform(cfg.conductor_roughness_min, cfg.conductor_roughness_max);
                scene.materials.push_back(m);
            } else {
                scene.materials.push_back({MaterialKind::kLambertian, pick_albedo()});
            }
            detail::add_box(scene, {cx - hx, 0, cz - hz}, {cx + hx, height, cz + hz}, mat);
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("generate_mini_scene: clutter placement unsatisfiable after " +
                                     std::to_string(cfg.max_retries) + " retries");
    }

    // Ceiling lights, flush (5 mm below the ceiling plane), facing down.
    int lights = cfg.light_min +
                 static_cast<int>(rng.next_below(
                     static_cast<uint64_t>(cfg.light_max - cfg.light_min + 1)));
    std::vector<detail::Rect2> light_rects;
    const float ly = H - 0.005f;
    for (int i = 0; i < lights; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
            float sx = uniform(cfg.light_size_min, cfg.light_size_max);
            float sz = uniform(cfg.light_size_min, cfg.light_size_max);
            float clear = cfg.wall_clearance;
            if (sx + 2 * clear >= W || sz + 2 * clear >= D) continue;
            float cx = uniform(clear + sx / 2, W - clear - sx / 2);
            float cz = uniform(clear + sz / 2, D - clear - sz / 2);
            detail::Rect2 r{cx - sx / 2, cz - sz / 2, cx + sx / 2, cz + sz / 2};
            bool overlap = false;
            for (const auto& o : light_rects) overlap = overlap || r.overlaps(o);
            if (overlap) continue;
            light_rects.push_back(r);
            Material m;
            m.kind = MaterialKind::kEmitter;
            m.albedo = {0, 0, 0};
            m.radiance = cfg.light_radiance;
            int mat = static_cast<int>(scene.materials.size());
            scene.materials.push_back(m);
            add_quad(scene, {r.x0, ly, r.z0}, {r.x1, ly, r.z0}, {r.x1, ly, r.z1},
                     {r.x0, ly, r.z1}, {0, -1, 0}, mat);
            placed = true;
        }
        if (!placed)
            throw std::runtime_error("generate_mini_scene: light placement unsatisfiable after " +
                                     std::to_string(cfg.max_retries) + " retries");
    }

    scene.camera.origin = {0.12f * W, 0.62f * H, 0.12f * D};
    scene.camera.look_at = {0.55f * W, 0.30f * H, 0.55f * D};
    scene.camera.up = {0, 1, 0};
    scene.camera.vfov_deg = 60.0f;
    scene.camera.width = 512;
    scene.camera.height = 512;

    validate_scene(scene);
    return scene;
}

}  // namespace ltm
