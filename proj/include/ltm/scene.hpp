#pragma once

// Scene data model and the ltscene text format.
//
// File schema (UTF-8, whitespace separated, '#' comments to end of line):
//   ltscene 1
//   materials <count>
//     lambertian    <ar> <ag> <ab>
//     conductor_ggx <ar> <ag> <ab> <roughness>
//     emitter       <ar> <ag> <ab> <lr> <lg> <lb>
//   triangles <count>
//     <v0 v1 v2: 9 floats> <n0 n1 n2: 9 floats> <material id>
//   camera <origin: 3> <look_at: 3> <up: 3> <vfov_deg> <width> <height>
//   end
//
// Emitters are Lambertian reflectors (albedo) that also emit (radiance,
// W·sr^-1·m^-2). Floats are written with 9 significant digits so
// save -> load round-trips bit-exactly. Units: meters, watts.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltm/core.hpp"

namespace ltm {

enum class MaterialKind { kLambertian, kConductorGgx, kEmitter };

struct Material {
    MaterialKind kind = MaterialKind::kLambertian;
    Vec3 albedo{0.5f, 0.5f, 0.5f};  // reflectance (Lambertian/emitter) or F0 (conductor)
    float roughness = 0.0f;         // conductor only, (0, 1]
    Vec3 radiance{0, 0, 0};         // emitter only

    bool is_emitter() const {
        return kind == MaterialKind::kEmitter && max_component(radiance) > 0;
    }
};

struct Triangle {
    Vec3 v0, v1, v2;
    Vec3 n0, n1, n2;
    int material = 0;

    float area() const { return 0.5f * length(cross(v1 - v0, v2 - v0)); }
    Vec3 geometric_normal() const { return normalize(cross(v1 - v0, v2 - v0)); }
};

struct Camera {
    Vec3 origin{0, 1, 3};
    Vec3 look_at{0, 1, 0};
    Vec3 up{0, 1, 0};
    float vfov_deg = 45.0f;
    int width = 512;
    int height = 512;

    struct Basis {
        Vec3 fwd, right, up;
        float half_w, half_h;
    };

    Basis basis() const {
        Basis b;
        b.fwd = normalize(look_at - origin);
        b.right = normalize(cross(b.fwd, up));
        b.up = cross(b.right, b.fwd);
        b.half_h = std::tan(vfov_deg * 0.5f * kPi / 180.0f);
        b.half_w = b.half_h * static_cast<float>(width) / static_cast<float>(height);
        return b;
    }

    // sx in [0,w), sy in [0,h); (w/2, h/2) maps to the view axis exactly.
    Vec3 ray_direction(const Basis& b, float sx, float sy) const {
        float ndc_x = 2.0f * sx / static_cast<float>(width) - 1.0f;
        float ndc_y = 1.0f - 2.0f * sy / static_cast<float>(height);
        return normalize(b.fwd + ndc_x * b.half_w * b.right + ndc_y * b.half_h * b.up);
    }
};

struct Scene {
    std::vector<Triangle> triangles;
    std::vector<Material> materials;
    Camera camera;

    float total_area() const {
        float a = 0;
        for (const auto& t : triangles) a += t.area();
        return a;
    }

    AABB bounds() const {
        AABB box;
        for (const auto& t : triangles) {
            box.grow(t.v0);
            box.grow(t.v1);
            box.grow(t.v2);
        }
        return box;
    }

    int emitter_count() const {
        int n = 0;
        for (const auto& m : materials) n += m.is_emitter() ? 1 : 0;
        return n;
    }
};

namespace detail {
inline void append_f(std::string& s, float v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    s += buf;
}
inline void append_v(std::string& s, const Vec3& v) {
    append_f(s, v.x);
    s += ' ';
    append_f(s, v.y);
    s += ' ';
    append_f(s, v.z);
}
}  // namespace detail

inline void validate_scene(const Scene& scene) {
    auto fail = [](const std::string& msg) { throw std::runtime_error("scene: " + msg); };
    if (scene.materials.empty()) fail("no materials");
    for (size_t i = 0; i < scene.materials.size(); ++i) {
        const Material& m = scene.materials[i];
        auto idx = std::to_string(i);
        if (!is_finite(m.albedo) || m.albedo.x < 0 || m.albedo.y < 0 || m.albedo.z < 0)
            fail("material " + idx + ": albedo out of range");
        if (m.kind != MaterialKind::kConductorGgx &&
            (m.albedo.x >= 1 || m.albedo.y >= 1 || m.albedo.z >= 1))
            fail("material " + idx + ": albedo must be < 1 per channel (energy conservation)");
        if (m.kind == MaterialKind::kConductorGgx) {
            if (m.albedo.x > 1 || m.albedo.y > 1 || m.albedo.z > 1)
                fail("material " + idx + ": F0 above 1");
            if (!(m.roughness > 0.0f && m.roughness <= 1.0f))
                fail("material " + idx + ": roughness must be in (0,1]");
        }
        if (m.kind == MaterialKind::kEmitter) {
            if (!is_finite(m.radiance) || m.radiance.x < 0 || m.radiance.y < 0 ||
                m.radiance.z < 0)
                fail("material " + idx + ": radiance must be finite and >= 0");
        }
    }
    for (size_t i = 0; i < scene.triangles.size(); ++i) {
        const Triangle& t = scene.triangles[i];
        auto idx = std::to_string(i);
        if (t.material < 0 || t.material >= static_cast<int>(scene.materials.size()))
            fail("triangle " + idx + ": material id " + std::to_string(t.material) +
                 " out of range");
        if (!(t.area() > 1e-10f)) fail("triangle " + idx + ": degenerate (area ~ 0)");
        for (const Vec3* n : {&t.n0, &t.n1, &t.n2}) {
            if (!is_finite(*n) || std::abs(length(*n) - 1.0f) > 1e-5f)
                fail("triangle " + idx + ": normal not unit length");
        }
    }
    const Camera& c = scene.camera;
    if (c.width < 1 || c.height < 1) fail("camera: non-positive resolution");
    if (!(c.vfov_deg > 0 && c.vfov_deg < 180)) fail("camera: vfov out of (0,180)");
    if (length(cross(c.look_at - c.origin, c.up)) < 1e-8f)
        fail("camera: up parallel to view direction");
}

inline std::string serialize_scene(const Scene& scene) {
    using detail::append_f;
    using detail::append_v;
    std::string s;
    s += "ltscene 1\n";
    s += "materials " + std::to_string(scene.materials.size()) + "\n";
    for (const auto& m : scene.materials) {
        switch (m.kind) {
            case MaterialKind::kLambertian:
                s += "lambertian ";
                append_v(s, m.albedo);
                break;
            case MaterialKind::kConductorGgx:
                s += "conductor_ggx ";
                append_v(s, m.albedo);
                s += ' ';
                append_f(s, m.roughness);
                break;
            case MaterialKind::kEmitter:
                s += "emitter ";
                append_v(s, m.albedo);
                s += ' ';
                append_v(s, m.radiance);
                break;
        }
        s += '\n';
    }
    s += "triangles " + std::to_string(scene.triangles.size()) + "\n";
    for (const auto& t : scene.triangles) {
        for (const Vec3* v : {&t.v0, &t.v1, &t.v2, &t.n0, &t.n1, &t.n2}) {
            append_v(s, *v);
            s += ' ';
        }
        s += std::to_string(t.material);
        s += '\n';
    }
    s += "camera ";
    append_v(s, scene.camera.origin);
    s += ' ';
    append_v(s, scene.camera.look_at);
    s += ' ';
    append_v(s, scene.camera.up);
    s += ' ';
    append_f(s, scene.camera.vfov_deg);
    s += ' ' + std::to_string(scene.camera.width) + ' ' + std::to_string(scene.camera.height);
    s += "\nend\n";
    return s;
}

namespace detail {
class SceneTokens {
  public:
    explicit SceneTokens(std::istream& in) : in_(in) {}

    std::string next() {
        std::string tok;
        while (in_ >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in_, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error("scene: unexpected end of file");
    }

    float next_f() {
        std::string tok = next();
        size_t pos = 0;
        float v;
        try {
            v = std::stof(tok, &pos);
        } catch (...) {
            throw std::runtime_error("scene: expected number, got '" + tok + "'");
        }
        if (pos != tok.size()) throw std::runtime_error("scene: malformed number '" + tok + "'");
        return v;
    }

    int64_t next_i() {
        std::string tok = next();
        size_t pos = 0;
        int64_t v;
        try {
            v = std::stoll(tok, &pos);
        } catch (...) {
            throw std::runtime_error("scene: expected integer, got '" + tok + "'");
        }
        if (pos != tok.size()) throw std::runtime_error("scene: malformed integer '" + tok + "'");
        return v;
    }

    Vec3 next_v() {
        float x = next_f(), y = next_f(), z = next_f();
        return {x, y, z};
    }

  private:
    std::istream& in_;
};
}  // namespace detail

inline Scene load_scene_stream(std::istream& in) {
    detail::SceneTokens tok(in);
    if (tok.next() != "ltscene") throw std::runtime_error("scene: missing 'ltscene' version tag");
    if (tok.next_i() != 1) throw std::runtime_error("scene: unsupported version");
    Scene scene;
    if (tok.next() != "materials") throw std::runtime_error("scene: expected 'materials'");
    int64_t mat_count = tok.next_i();
    for (int64_t i = 0; i < mat_count; ++i) {
        std::string kind = tok.next();
        Material m;
        if (kind == "lambertian") {
            m.kind = MaterialKind::kLambertian;
            m.albedo = tok.next_v();
        } else if (kind == "conductor_ggx") {
            m.kind = MaterialKind::kConductorGgx;
            m.albedo = tok.next_v();
            m.roughness = tok.next_f();
        } else if (kind == "emitter") {
            m.kind = MaterialKind::kEmitter;
            m.albedo = tok.next_v();
            m.radiance = tok.next_v();
        } else {
            throw std::runtime_error("scene: material " + std::to_string(i) +
                                     ": unknown kind '" + kind + "'");
        }
        scene.materials.push_back(m);
    }
    if (tok.next() != "triangles") throw std::runtime_error("scene: expected 'triangles'");
    int64_t tri_count = tok.next_i();
    for (int64_t i = 0; i < tri_count; ++i) {
        Triangle t;
        t.v0 = tok.next_v();
        t.v1 = tok.next_v();
        t.v2 = tok.next_v();
        t.n0 = tok.next_v();
        t.n1 = tok.next_v();
        t.n2 = tok.next_v();
        t.material = static_cast<int>(tok.next_i());
        for (Vec3* n : {&t.n0, &t.n1, &t.n2}) {
            float len = length(*n);
            if (!(len > 1e-8f) || !is_finite(*n))
                throw std::runtime_error("scene: triangle " + std::to_string(i) +
                                         ": zero or non-finite normal");
            *n = *n / len;
        }
        scene.triangles.push_back(t);
    }
    if (tok.next() != "camera") throw std::runtime_error("scene: expected 'camera'");
    scene.camera.origin = tok.next_v();
    scene.camera.look_at = tok.next_v();
    scene.camera.up = tok.next_v();
    scene.camera.vfov_deg = tok.next_f();
    scene.camera.width = static_cast<int>(tok.next_i());
    scene.camera.height = static_cast<int>(tok.next_i());
    if (tok.next() != "end") throw std::runtime_error("scene: expected 'end'");
    validate_scene(scene);
    return scene;
}

inline Scene load_scene(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open scene file: " + path);
    try {
        return load_scene_stream(f);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

inline void save_scene(const Scene& scene, const std::string& path) {
    std::ofstream f(path, std::ios::binary);  // binary: exact bytes, LF endings
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << serialize_scene(scene);
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline uint64_t scene_hash(const Scene& scene) {
    std::string s = serialize_scene(scene);
    return fnv1a(s);
}

}  // namespace ltm
