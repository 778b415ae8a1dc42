#pragma once

// Ground-truth path tracer. Depth semantics, pinned by the furnace tests:
// one cast ray gathers emission at up to max_depth surface interactions, with
// importance-sampled continuation (Lambertian cosine / GGX NDF) and no
// Russian roulette. Irradiance bakes use stratified cosine-weighted rays:
// E = (pi / R) * sum L_path. Baking parallelizes over points; point i draws
// from the counter stream (seed, i), so results are bitwise reproducible
// under any thread count.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <span>
#include <vector>

#include "ltm/brdf.hpp"
#include "ltm/bvh.hpp"
#include "ltm/core.hpp"
#include "ltm/image.hpp"
#include "ltm/parallel.hpp"
#include "ltm/pointcloud.hpp"
#include "ltm/radiance_grid.hpp"
#include "ltm/rng.hpp"
#include "ltm/scene.hpp"

namespace ltm {

// Radiance arriving along `ray` (emission collected at each of at most
// max_depth hits; emitters emit from their front face only).
inline Vec3 trace_incoming(const Scene& scene, const Bvh& bvh, Ray ray, int max_depth,
                           CounterRng& rng) {
    Vec3 radiance{0, 0, 0};
    Vec3 beta{1, 1, 1};
    for (int depth = 0; depth < max_depth; ++depth) {
        auto hit = bvh.intersect(ray);
        if (!hit) break;
        const Material& mat = scene.materials[hit->material];
        if (mat.is_emitter() && dot(hit->normal, ray.dir) < 0)
            radiance += beta * mat.radiance;
        if (depth + 1 == max_depth) break;
        Vec3 wo = -ray.dir;
        Vec3 n = hit->normal;
        if (dot(n, wo) < 0) n = -n;
        BrdfSample bs = sample_brdf(mat, wo, n, rng.next_float(), rng.next_float());
        if (!bs.valid || !(max_component(bs.weight) > 0)) break;
        beta = beta * bs.weight;
        ray = Ray{hit->position, bs.wi};
    }
    return radiance;
}

struct BakeStats {
    int64_t rejected_non_finite = 0;
};

// Stratified cosine-weighted irradiance bake. rays_per_point is rounded down
// to a square strata grid (1024 -> 32x32).
inline std::vector<Vec3> bake_irradiance(const Scene& scene, const Bvh& bvh,
                                         std::span<const Vec3> positions,
                                         std::span<const Vec3> normals,
                                         int rays_per_point = 1024, int max_depth = 5,
                                         uint64_t seed = 0, BakeStats* stats = nullptr) {
    int strata = std::max(1, static_cast<int>(std::lround(std::sqrt(rays_per_point))));
    int rays = strata * strata;
    std::vector<Vec3> out(positions.size());
    std::atomic<int64_t> rejected{0};
    parallel_for(static_cast<int64_t>(positions.size()), [&](int64_t i) {
        CounterRng rng(seed, static_cast<uint64_t>(i));
        TangentFrame frame(normals[i]);
        Vec3 sum{0, 0, 0};
        int64_t bad = 0;
        for (int a = 0; a < strata; ++a) {
            for (int b = 0; b < strata; ++b) {
                float u1 = (a + rng.next_float()) / strata;
                float u2 = (b + rng.next_float()) / strata;
                Vec3 dir = frame.to_world(sample_cosine_hemisphere_local(u1, u2));
                Vec3 li = trace_incoming(scene, bvh, Ray{positions[i], dir}, max_depth, rng);
                if (!is_finite(li)) {
                    ++bad;
                    continue;
                }
                sum += li;
            }
        }
        out[i] = sum * (kPi / rays);
        if (bad) rejected.fetch_add(bad, std::memory_order_relaxed);
    });
    if (rejected.load() > 0)
        std::cerr << "bake_irradiance: rejected " << rejected.load() << " non-finite samples\n";
    if (stats) stats->rejected_non_finite = rejected.load();
    return out;
}

// Per-bin average incoming radiance over jittered directions inside the bin.
inline std::vector<RadianceGrid> bake_radiance_grids(const Scene& scene, const Bvh& bvh,
                                                     std::span<const Vec3> positions,
                                                     std::span<const Vec3> normals,
                                                     int spp_per_bin = 64, int max_depth = 5,
                                                     uint64_t seed = 0) {
    std::vector<RadianceGrid> out(positions.size());
    std::atomic<int64_t> rejected{0};
    parallel_for(static_cast<int64_t>(positions.size()), [&](int64_t i) {
        CounterRng rng(seed, 0x47524944ull ^ static_cast<uint64_t>(i));  // "GRID"
        TangentFrame frame(normals[i]);
        RadianceGrid& grid = out[i];
        for (int r = 0; r < RadianceGrid::kRes; ++r) {
            for (int c = 0; c < RadianceGrid::kRes; ++c) {
                Vec3 sum{0, 0, 0};
                int64_t bad = 0;
                for (int s = 0; s < spp_per_bin; ++s) {
                    float u = (r + rng.next_float()) / RadianceGrid::kRes;
                    float v = (c + rng.next_float()) / RadianceGrid::kRes;
                    Vec3 dir = frame.to_world(grid_direction_local(u, v));
                    Vec3 li = trace_incoming(scene, bvh, Ray{positions[i], dir}, max_depth, rng);
                    if (!is_finite(li)) {
                        ++bad;
                        continue;
                    }
                    sum += li;
                }
                int n = spp_per_bin - static_cast<int>(bad);
                grid.at(r, c) = n > 0 ? sum * (1.0f / n) : Vec3{0, 0, 0};
                if (bad) rejected.fetch_add(bad, std::memory_order_relaxed);
            }
        }
    });
    if (rejected.load() > 0)
        std::cerr << "bake_radiance_grids: rejected " << rejected.load()
                  << " non-finite samples\n";
    return out;
}

// Area-uniform sampling over all emissive triangles.
class EmitterTable {
  public:
    explicit EmitterTable(const Scene& scene) : scene_(&scene) {
        for (size_t i = 0; i < scene.triangles.size(); ++i) {
            if (!scene.materials[scene.triangles[i].material].is_emitter()) continue;
            total_ += scene.triangles[i].area();
            cumulative_.push_back(total_);
            tris_.push_back(static_cast<int32_t>(i));
        }
    }

    bool empty() const { return tris_.empty(); }
    float total_area() const { return total_; }

    struct LightSample {
        Vec3 position;
        Vec3 normal;
        Vec3 radiance;
        float pdf_area = 0;
    };

    LightSample sample(CounterRng& rng) const {
        LightSample s;
        float target = rng.next_float() * total_;
        auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), target);
        size_t k = std::min(static_cast<size_t>(it - cumulative_.begin()), tris_.size() - 1);
        const Triangle& tri = scene_->triangles[tris_[k]];
        float u1 = rng.next_float(), u2 = rng.next_float();
        if (u1 + u2 > 1) {
            u1 = 1 - u1;
            u2 = 1 - u2;
        }
        s.position = tri.v0 + u1 * (tri.v1 - tri.v0) + u2 * (tri.v2 - tri.v0);
        s.normal = tri.n0;
        s.radiance = scene_->materials[tri.material].radiance;
        s.pdf_area = 1.0f / total_;
        return s;
    }

  private:
    const Scene* scene_;
    std::vector<float> cumulative_;
    std::vector<int32_t> tris_;
    float total_ = 0;
};

// Direct radiance reflected at a hit via one NEE light sample.
inline Vec3 nee_direct(const Scene& scene, const Bvh& bvh, const EmitterTable& lights,
                       const Material& mat, const Vec3& p, const Vec3& n, const Vec3& wo,
                       CounterRng& rng) {
    if (lights.empty()) return {0, 0, 0};
    auto ls = lights.sample(rng);
    Vec3 to_light = ls.position - p;
    float d2 = length_squared(to_light);
    if (!(d2 > 1e-12f)) return {0, 0, 0};
    float dist = std::sqrt(d2);
    Vec3 wi = to_light / dist;
    float cos_x = dot(n, wi);
    float cos_y = dot(ls.normal, -wi);
    if (cos_x <= 0 || cos_y <= 0) return {0, 0, 0};
    if (bvh.occluded(Ray{p, wi, kRayEpsilon, dist - 2 * kRayEpsilon})) return {0, 0, 0};
    Vec3 f = eval_brdf(mat, wi, wo, n);
    return f * ls.radiance * (cos_x * cos_y / (d2 * ls.pdf_area));
}

// Direct irradiance at a point (cosine-weighted incident radiance from
// emitters only), estimated with n_samples NEE draws.
inline Vec3 direct_irradiance(const Scene& scene, const Bvh& bvh, const EmitterTable& lights,
                              const Vec3& p, const Vec3& n, int n_samples, CounterRng& rng) {
    if (lights.empty()) return {0, 0, 0};
    Vec3 sum{0, 0, 0};
    for (int s = 0; s < n_samples; ++s) {
        auto ls = lights.sample(rng);
        Vec3 to_light = ls.position - p;
        float d2 = length_squared(to_light);
        if (!(d2 > 1e-12f)) continue;
        float dist = std::sqrt(d2);
        Vec3 wi = to_light / dist;
        float cos_x = dot(n, wi);
        float cos_y = dot(ls.normal, -wi);
        if (cos_x <= 0 || cos_y <= 0) continue;
        if (bvh.occluded(Ray{p, wi, kRayEpsilon, dist - 2 * kRayEpsilon})) continue;
        sum += ls.radiance * (cos_x * cos_y / (d2 * ls.pdf_area));
    }
    return sum * (1.0f / n_samples);
}

// Direct illumination render: visible-emitter radiance plus one NEE sample
// per camera vertex. No indirect bounces.
inline Image trace_direct(const Scene& scene, const Bvh& bvh, const Camera& camera, int spp,
                          uint64_t seed = 0) {
    EmitterTable lights(scene);
    Image img(camera.width, camera.height);
    auto basis = camera.basis();
    parallel_for(static_cast<int64_t>(camera.width) * camera.height, [&](int64_t pix) {
        int px = static_cast<int>(pix % camera.width);
        int py = static_cast<int>(pix / camera.width);
        CounterRng rng(seed, 0x44495245ull ^ static_cast<uint64_t>(pix));  // "DIRE"
        Vec3 accum{0, 0, 0};
        for (int s = 0; s < spp; ++s) {
            float jx = spp == 1 ? 0.5f : rng.next_float();
            float jy = spp == 1 ? 0.5f : rng.next_float();
            Ray ray{camera.origin, camera.ray_direction(basis, px + jx, py + jy)};
            auto hit = bvh.intersect(ray);
            if (!hit) continue;
            const Material& mat = scene.materials[hit->material];
            Vec3 radiance{0, 0, 0};
            if (mat.is_emitter() && dot(hit->normal, ray.dir) < 0) radiance += mat.radiance;
            Vec3 wo = -ray.dir;
            Vec3 n = hit->normal;
            if (dot(n, wo) < 0) n = -n;
            radiance += nee_direct(scene, bvh, lights, mat, hit->position, n, wo, rng);
            accum += radiance;
        }
        img.pixels[pix] = accum * (1.0f / spp);
    });
    return img;
}

}  // namespace ltm
