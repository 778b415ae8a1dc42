#pragma once

// Ray/triangle intersection (Moller-Trumbore) behind a median-split BVH.
// Nearest hits honor t > kRayEpsilon; oracle equality against a linear-scan
// intersector is part of the test suite.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "ltm/core.hpp"
#include "ltm/scene.hpp"

namespace ltm {

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit length
    float tmin = kRayEpsilon;
    float tmax = std::numeric_limits<float>::max();
};

struct Hit {
    float t = 0;
    Vec3 position;
    Vec3 normal;  // stored shading normal (flat)
    int material = -1;
    int triangle = -1;
};

// Returns t or negative on miss; u/v unused by callers but kept exact.
inline float intersect_triangle(const Triangle& tri, const Ray& ray) {
    Vec3 e1 = tri.v1 - tri.v0;
    Vec3 e2 = tri.v2 - tri.v0;
    Vec3 pv = cross(ray.dir, e2);
    float det = dot(e1, pv);
    if (std::abs(det) < 1e-12f) return -1;
    float inv = 1.0f / det;
    Vec3 tv = ray.origin - tri.v0;
    float u = dot(tv, pv) * inv;
    if (u < 0 || u > 1) return -1;
    Vec3 qv = cross(tv, e1);
    float v = dot(ray.dir, qv) * inv;
    if (v < 0 || u + v > 1) return -1;
    float t = dot(e2, qv) * inv;
    if (t < ray.tmin || t > ray.tmax) return -1;
    return t;
}

class Bvh {
  public:
    explicit Bvh(const Scene& scene) : triangles_(scene.triangles) {
        order_.resize(triangles_.size());
        for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int32_t>(i);
        centroids_.resize(triangles_.size());
        for (size_t i = 0; i < triangles_.size(); ++i) {
            const Triangle& t = triangles_[i];
            centroids_[i] = (t.v0 + t.v1 + t.v2) * (1.0f / 3.0f);
        }
        if (!triangles_.empty()) build(0, static_cast<int32_t>(triangles_.size()));
        centroids_.clear();
        centroids_.shrink_to_fit();
    }

    std::optional<Hit> intersect(Ray ray) const {
        if (nodes_.empty()) return std::nullopt;
        int best_tri = -1;
        float best_t = ray.tmax;
        traverse(ray, [&](int32_t ti, float t) {
            if (t < best_t) {
                best_t = t;
                best_tri = ti;
                ray.tmax = t;
            }
        }, ray);
        if (best_tri < 0) return std::nullopt;
        const Triangle& tri = triangles_[best_tri];
        Hit hit;
        hit.t = best_t;
        hit.position = ray.origin + best_t * ray.dir;
        hit.normal = tri.n0;
        hit.material = tri.material;
        hit.triangle = best_tri;
        return hit;
    }

    bool occluded(const Ray& ray) const {
        if (nodes_.empty()) return false;
        bool found = false;
        Ray r = ray;
        traverse(r, [&](int32_t, float) { found = true; }, r, &found);
        return found;
    }

  private:
    static constexpr int kLeafSize = 4;

    struct Node {
        AABB box;
        int32_t left = -1;   // child id, or leaf begin
        int32_t right = -1;  // child id, or leaf end
        int32_t axis = -1;   // -1: leaf
    };

    int32_t build(int32_t begin, int32_t end) {
        int32_t id = static_cast<int32_t>(nodes_.size());
        nodes_.emplace_back();
        AABB box;
        for (int32_t i = begin; i < end; ++i) {
            const Triangle& t = triangles_[order_[i]];
            box.grow(t.v0);
            box.grow(t.v1);
            box.grow(t.v2);
        }
        if (end - begin <= kLeafSize) {
            nodes_[id] = {box, begin, end, -1};
            return id;
        }
        AABB cbox;
        for (int32_t i = begin; i < end; ++i) cbox.grow(centroids_[order_[i]]);
        int axis = cbox.longest_axis();
        int32_t mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](int32_t a, int32_t b) {
                             float ca = centroids_[a][axis], cb = centroids_[b][axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        int32_t left = build(begin, mid);
        int32_t right = build(mid, end);
        nodes_[id] = {box, left, right, axis};
        return id;
    }

    static bool hit_box(const AABB& b, const Ray& ray, const Vec3& inv_dir, float tmax) {
        float t0 = ray.tmin, t1 = tmax;
        for (int a = 0; a < 3; ++a) {
            float near = (b.lo[a] - ray.origin[a]) * inv_dir[a];
            float far = (b.hi[a] - ray.origin[a]) * inv_dir[a];
            if (near > far) std::swap(near, far);
            t0 = std::max(t0, near);
            t1 = std::min(t1, far);
            if (t0 > t1) return false;
        }
        return true;
    }

    template <class OnHit>
    void traverse(Ray& ray, OnHit&& on_hit, const Ray& query, bool* early_out = nullptr) const {
        Vec3 inv_dir{1.0f / query.dir.x, 1.0f / query.dir.y, 1.0f / query.dir.z};
        int32_t stack[64];
        int sp = 0;
        stack[sp++] = 0;
        while (sp > 0) {
            if (early_out && *early_out) return;
            const Node& nd = nodes_[stack[--sp]];
            if (!hit_box(nd.box, query, inv_dir, ray.tmax)) continue;
            if (nd.axis < 0) {
                for (int32_t i = nd.left; i < nd.right; ++i) {
                    int32_t ti = order_[i];
                    float t = intersect_triangle(triangles_[ti], ray);
                    if (t >= 0) on_hit(ti, t);
                }
                continue;
            }
            // Near child first by ray direction sign on the split axis.
            bool neg = query.dir[nd.axis] < 0;
            stack[sp++] = neg ? nd.left : nd.right;
            stack[sp++] = neg ? nd.right : nd.left;
        }
    }

    std::vector<Triangle> triangles_;
    std::vector<int32_t> order_;
    std::vector<Vec3> centroids_;
    std::vector<Node> nodes_;
};

// Linear-scan oracle used by the tests.
inline std::optional<Hit> intersect_brute_force(const Scene& scene, const Ray& ray) {
    int best = -1;
    float best_t = ray.tmax;
    for (size_t i = 0; i < scene.triangles.size(); ++i) {
        Ray r = ray;
        r.tmax = best_t;
        float t = intersect_triangle(scene.triangles[i], r);
        if (t >= 0 && t < best_t) {
            best_t = t;
            best = static_cast<int>(i);
        }
    }
    if (best < 0) return std::nullopt;
    const Triangle& tri = scene.triangles[best];
    Hit hit;
    hit.t = best_t;
    hit.position = ray.origin + best_t * ray.dir;
    hit.normal = tri.n0;
    hit.material = tri.material;
    hit.triangle = best;
    return hit;
}

}  // namespace ltm
