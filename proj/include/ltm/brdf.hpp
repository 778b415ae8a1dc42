#pragma once

// BRDF evaluation and importance sampling: Lambertian (emitters reflect
// Lambertian too) and GGX conductor with alpha = roughness^2, Smith
// height-correlated visibility and Schlick Fresnel (F0 = albedo).
// All directions point away from the surface; n is the shading normal.

#include <cmath>

#include "ltm/core.hpp"
#include "ltm/scene.hpp"

namespace ltm {

// Cosine-weighted hemisphere sample in the local frame:
// (sqrt(u1) cos phi, sqrt(u1) sin phi, sqrt(1-u1)), phi = 2 pi u2.
// pdf = cos(theta) / pi. u1 = 0 maps to the pole.
inline Vec3 sample_cosine_hemisphere_local(float u1, float u2) {
    float r = std::sqrt(u1);
    float phi = kTwoPi * u2;
    return {r * std::cos(phi), r * std::sin(phi), std::sqrt(1.0f - u1)};
}

inline float cosine_hemisphere_pdf(float cos_theta) {
    return cos_theta > 0 ? cos_theta * kInvPi : 0.0f;
}

namespace detail {

inline float ggx_alpha(const Material& m) { return m.roughness * m.roughness; }

inline float ggx_ndf(float cos_h, float alpha) {
    if (cos_h <= 0) return 0;
    float a2 = alpha * alpha;
    float d = cos_h * cos_h * (a2 - 1.0f) + 1.0f;
    return a2 / (kPi * d * d);
}

// Height-correlated Smith visibility V = G / (4 cos_i cos_o).
inline float ggx_visibility(float cos_i, float cos_o, float alpha) {
    float a2 = alpha * alpha;
    float lv = cos_i * std::sqrt(cos_o * cos_o * (1.0f - a2) + a2);
    float ll = cos_o * std::sqrt(cos_i * cos_i * (1.0f - a2) + a2);
    return 0.5f / (lv + ll);
}

inline Vec3 schlick_fresnel(const Vec3& f0, float cos_d) {
    float m = std::clamp(1.0f - cos_d, 0.0f, 1.0f);
    float m2 = m * m;
    return f0 + (Vec3{1, 1, 1} - f0) * (m2 * m2 * m);
}

}  // namespace detail

// f_r(wi, wo). Zero below the horizon.
inline Vec3 eval_brdf(const Material& mat, const Vec3& wi, const Vec3& wo, const Vec3& n) {
    float cos_i = dot(wi, n);
    float cos_o = dot(wo, n);
    if (cos_i <= 0 || cos_o <= 0) return {0, 0, 0};
    switch (mat.kind) {
        case MaterialKind::kLambertian:
        case MaterialKind::kEmitter:
            return mat.albedo * kInvPi;
        case MaterialKind::kConductorGgx: {
            Vec3 h = normalize(wi + wo);
            float alpha = detail::ggx_alpha(mat);
            float d = detail::ggx_ndf(dot(h, n), alpha);
            float v = detail::ggx_visibility(cos_i, cos_o, alpha);
            Vec3 f = detail::schlick_fresnel(mat.albedo, dot(h, wi));
            return f * (d * v);
        }
    }
    return {0, 0, 0};
}

// pdf of sample_brdf for the same material, in solid angle.
inline float brdf_pdf(const Material& mat, const Vec3& wi, const Vec3& wo, const Vec3& n) {
    float cos_i = dot(wi, n);
    float cos_o = dot(wo, n);
    if (cos_i <= 0 || cos_o <= 0) return 0;
    if (mat.kind == MaterialKind::kConductorGgx) {
        Vec3 h = normalize(wi + wo);
        float cos_h = dot(h, n);
        float d = detail::ggx_ndf(cos_h, detail::ggx_alpha(mat));
        float denom = 4.0f * dot(wo, h);
        return denom > 1e-8f ? d * cos_h / denom : 0.0f;
    }
    return cosine_hemisphere_pdf(cos_i);
}

struct BrdfSample {
    Vec3 wi;        // sampled direction, world space
    float pdf = 0;  // solid-angle pdf
    Vec3 weight;    // f * cos / pdf
    bool valid = false;
};

// Lambertian: cosine-weighted. Conductor: GGX NDF half-vector sampling.
inline BrdfSample sample_brdf(const Material& mat, const Vec3& wo, const Vec3& n, float u1,
                              float u2) {
    BrdfSample s;
    TangentFrame frame(n);
    if (mat.kind == MaterialKind::kConductorGgx) {
        float alpha = detail::ggx_alpha(mat);
        float a2 = alpha * alpha;
        float cos_h = std::sqrt(std::max(0.0f, (1.0f - u1) / (u1 * (a2 - 1.0f) + 1.0f)));
        float sin_h = std::sqrt(std::max(0.0f, 1.0f - cos_h * cos_h));
        float phi = kTwoPi * u2;
        Vec3 h = frame.to_world({sin_h * std::cos(phi), sin_h * std::sin(phi), cos_h});
        Vec3 wi = 2.0f * dot(wo, h) * h - wo;
        float cos_i = dot(wi, n);
        if (cos_i <= 0) return s;  // below horizon: zero contribution
        s.wi = wi;
        s.pdf = brdf_pdf(mat, wi, wo, n);
        if (s.pdf <= 0) return s;
        s.weight = eval_brdf(mat, wi, wo, n) * (cos_i / s.pdf);
        s.valid = true;
        return s;
    }
    Vec3 local = sample_cosine_hemisphere_local(u1, u2);
    s.wi = frame.to_world(local);
    s.pdf = cosine_hemisphere_pdf(local.z);
    if (s.pdf <= 0) return s;
    s.weight = mat.albedo;  // (albedo/pi * cos) / (cos/pi)
    s.valid = true;
    return s;
}

}  // namespace ltm
