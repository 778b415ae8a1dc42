#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "ltm/fps.hpp"
#include "ltm/knn.hpp"
#include "ltm/morton.hpp"
#include "ltm/pointcloud.hpp"
#include "ltm/rng.hpp"
#include "ltm/scene.hpp"

using namespace ltm;

namespace {

// Independent greedy oracle: min distance to the selected set is recomputed
// by full scan each round (O(M*m^2)), unlike the incremental implementation.
std::vector<int32_t> fps_oracle(std::span<const Vec3> pts, int64_t m, int32_t start) {
    std::vector<int32_t> sel{start};
    while (static_cast<int64_t>(sel.size()) < m) {
        int64_t best = -1;
        float best_d2 = -1;
        for (int64_t i = 0; i < static_cast<int64_t>(pts.size()); ++i) {
            float d2 = std::numeric_limits<float>::max();
            for (int32_t s : sel) d2 = std::min(d2, length_squared(pts[i] - pts[s]));
            if (d2 > best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
        sel.push_back(static_cast<int32_t>(best));
    }
    return sel;
}

std::vector<int32_t> knn_oracle(std::span<const Vec3> targets, const Vec3& q, int k) {
    std::vector<std::pair<float, int32_t>> all;
    for (size_t i = 0; i < targets.size(); ++i)
        all.emplace_back(length_squared(targets[i] - q), static_cast<int32_t>(i));
    std::sort(all.begin(), all.end());
    std::vector<int32_t> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = all[i].second;
    return idx;
}

std::vector<Vec3> random_points(int n, uint64_t seed, float scale = 10.0f) {
    CounterRng rng(seed);
    std::vector<Vec3> pts(n);
    for (auto& p : pts)
        p = {scale * rng.next_float(), scale * rng.next_float(), scale * rng.next_float()};
    return pts;
}

Scene two_triangle_scene() {
    // Areas 1 and 3 (right triangles with legs (2,1) and (2,3)).
    Scene s;
    s.materials.push_back({MaterialKind::kLambertian, {0.5f, 0.5f, 0.5f}});
    Material em;
    em.kind = MaterialKind::kEmitter;
    em.albedo = {0, 0, 0};
    em.radiance = {2, 3, 4};
    s.materials.push_back(em);
    Vec3 up{0, 1, 0};
    s.triangles.push_back({{0, 0, 0}, {2, 0, 0}, {0, 0, 1}, up, up, up, 0});
    s.triangles.push_back({{5, 0, 0}, {7, 0, 0}, {5, 0, 3}, up, up, up, 1});
    return s;
}

}  // namespace

TEST(SurfaceSampling, PointsStayInsideTriangle) {
    Scene s;
    s.materials.push_back({MaterialKind::kLambertian, {0.5f, 0.5f, 0.5f}});
    Vec3 up{0, 1, 0};
    s.triangles.push_back({{0, 0, 0}, {3, 0, 0}, {0, 0, 2}, up, up, up, 0});
    auto cloud = sample_surface_points(s, 1000, 5);
    const Triangle& t = s.triangles[0];
    Vec3 e1 = t.v1 - t.v0, e2 = t.v2 - t.v0;
    for (const Vec3& p : cloud.position) {
        // Barycentric coordinates via the plane basis.
        Vec3 d = p - t.v0;
        float d11 = dot(e1, e1), d12 = dot(e1, e2), d22 = dot(e2, e2);
        float dp1 = dot(d, e1), dp2 = dot(d, e2);
        float det = d11 * d22 - d12 * d12;
        float u = (d22 * dp1 - d12 * dp2) / det;
        float v = (d11 * dp2 - d12 * dp1) / det;
        EXPECT_GE(u, -1e-5f);
        EXPECT_GE(v, -1e-5f);
        EXPECT_LE(u + v, 1.0f + 1e-5f);
    }
}

TEST(SurfaceSampling, CountsProportionalToArea) {
    Scene s = two_triangle_scene();
    const int64_t n = 40000;
    auto cloud = sample_surface_points(s, n, 11);
    int on_small = 0;
    for (const Vec3& p : cloud.position) on_small += p.x < 4.0f ? 1 : 0;
    // Binomial(n, 1/4): 3 sigma around 10000.
    double sigma = std::sqrt(n * 0.25 * 0.75);
    EXPECT_NEAR(on_small, n / 4.0, 3 * sigma);
}

TEST(SurfaceSampling, EmissiveAttributesCopied) {
    Scene s = two_triangle_scene();
    auto cloud = sample_surface_points(s, 2000, 1);
    for (int64_t i = 0; i < cloud.size(); ++i) {
        if (cloud.position[i].x >= 4.0f) {
            EXPECT_EQ(cloud.emission[i].x, 2.0f);
            EXPECT_EQ(cloud.emission[i].y, 3.0f);
            EXPECT_EQ(cloud.emission[i].z, 4.0f);
        } else {
            EXPECT_EQ(max_component(cloud.emission[i]), 0.0f);
        }
    }
}

TEST(SurfaceSampling, ZeroAreaSceneErrors) {
    Scene s;
    s.materials.push_back({MaterialKind::kLambertian, {0.5f, 0.5f, 0.5f}});
    EXPECT_THROW(sample_surface_points(s, 10, 0), std::runtime_error);
}

TEST(QuerySampling, EmitterOnlySceneErrors) {
    Scene s = two_triangle_scene();
    s.triangles.erase(s.triangles.begin());  // only the emitter remains
    try {
        sample_query_points(s, 10, 0);
        FAIL() << "expected error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("no shadeable surface"), std::string::npos);
    }
}

TEST(QuerySampling, DeterministicPerSeed) {
    Scene s = two_triangle_scene();
    auto a = sample_query_points(s, 500, 42);
    auto b = sample_query_points(s, 500, 42);
    ASSERT_EQ(a.size(), b.size());
    for (int64_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.position[i].x, b.position[i].x);
        EXPECT_EQ(a.position[i].y, b.position[i].y);
        EXPECT_EQ(a.position[i].z, b.position[i].z);
    }
    // Excludes the emitter triangle entirely.
    for (const Vec3& p : a.position) EXPECT_LT(p.x, 4.0f);
}

TEST(Fps, SpecExample) {
    std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {10, 10, 10}};
    auto sel = farthest_point_sample(pts, 2, 0);
    EXPECT_EQ(sel, (std::vector<int32_t>{0, 3}));
    EXPECT_EQ(sel, fps_oracle(pts, 2, 0));
}

TEST(Fps, DegenerateCases) {
    auto pts = random_points(64, 7);
    EXPECT_EQ(farthest_point_sample(pts, 1, 5), (std::vector<int32_t>{5}));
    // m = M selects every point exactly once.
    auto all = farthest_point_sample(pts, 64, 0);
    auto sorted = all;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 64; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_THROW(farthest_point_sample(pts, 65, 0), std::runtime_error);
}

TEST(Fps, MatchesBruteForceOracle) {
    for (uint64_t inst = 0; inst < 10; ++inst) {
        auto pts = random_points(150, 100 + inst);
        auto got = farthest_point_sample(pts, 40, 0);
        EXPECT_EQ(got, fps_oracle(pts, 40, 0)) << "instance " << inst;
    }
}

TEST(Knn, SpecExamples) {
    std::vector<Vec3> targets{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    auto r = knn(targets, std::vector<Vec3>{{1, 0, 0}}, 1);
    EXPECT_EQ(r.indices[0], 1);
    EXPECT_EQ(r.distances[0], 0.0f);

    auto r2 = knn(targets, std::vector<Vec3>{{1.4f, 0, 0}}, 2);
    EXPECT_EQ(r2.indices[0], 1);
    EXPECT_EQ(r2.indices[1], 2);

    EXPECT_THROW(knn(targets, std::vector<Vec3>{{0, 0, 0}}, 5), std::runtime_error);
}

TEST(Knn, TreeMatchesLinearScan) {
    auto targets = random_points(2000, 21);
    auto queries = random_points(200, 22);
    // Duplicate some targets to stress tie-breaking.
    for (int i = 0; i < 50; ++i) targets[i + 1000] = targets[i];
    auto r = knn(targets, queries, 16);
    for (size_t q = 0; q < queries.size(); ++q) {
        auto expect = knn_oracle(targets, queries[q], 16);
        for (int i = 0; i < 16; ++i)
            ASSERT_EQ(r.indices[q * 16 + i], expect[i]) << "query " << q << " rank " << i;
    }
}

TEST(Morton, HandInterleavedCodes) {
    EXPECT_EQ(morton_encode(0, 0, 0, 4), 0u);
    EXPECT_EQ(morton_encode(1, 0, 0, 4), 1u);
    EXPECT_EQ(morton_encode(0, 1, 0, 4), 2u);
    EXPECT_EQ(morton_encode(0, 0, 1, 4), 4u);
    EXPECT_EQ(morton_encode(3, 0, 0, 4), 0b1001u);
    EXPECT_EQ(morton_encode(2, 3, 1, 4), 0b011110u);  // reference interleave by hand
}

TEST(Morton, PermutationIsBijection) {
    auto pts = random_points(777, 31);
    auto perm = serialize_zorder(pts, 10);
    std::vector<int32_t> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 777; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Morton, SerializedOrderIsLocal) {
    auto pts = random_points(2000, 41);
    auto perm = serialize_zorder(pts, 10);
    CounterRng rng(55);
    std::vector<float> adjacent, random_pairs;
    for (int i = 0; i < 1000; ++i) {
        int j = static_cast<int>(rng.next_below(1999));
        adjacent.push_back(length(pts[perm[j]] - pts[perm[j + 1]]));
        int a = static_cast<int>(rng.next_below(2000));
        int b = static_cast<int>(rng.next_below(2000));
        random_pairs.push_back(length(pts[a] - pts[b]));
    }
    auto median = [](std::vector<float> v) {
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    EXPECT_LT(median(adjacent), median(random_pairs));
}

TEST(Morton, BitsOutOfRangeErrors) {
    auto pts = random_points(10, 1);
    EXPECT_THROW(serialize_zorder(pts, 3), std::runtime_error);
    EXPECT_THROW(serialize_zorder(pts, 17), std::runtime_error);
}
