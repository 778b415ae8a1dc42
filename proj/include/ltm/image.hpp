#pragma once

// HDR image container, PFM/PNG output, Reinhard tone mapping, and the image
// metrics (MSE / PSNR in linear HDR, SSIM on tone-mapped 8-bit luminance).
//
// PFM layout is pinned: "PF\n{w} {h}\n-1.0\n" then bottom-up rows of
// little-endian f32 RGB; round-trips are bit-exact. PNG is written with
// stored (uncompressed) deflate blocks so the bytes are deterministic.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltm/core.hpp"

namespace ltm {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<Vec3> pixels;  // row-major, top-left origin

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h) {}

    Vec3& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    const Vec3& at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

inline void write_pfm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    // Bottom-up rows; -1.0 declares little-endian.
    for (int y = img.height - 1; y >= 0; --y) {
        const Vec3* row = &img.pixels[static_cast<size_t>(y) * img.width];
        f.write(reinterpret_cast<const char*>(row),
                static_cast<std::streamsize>(sizeof(float) * 3 * img.width));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline Image read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "PF") throw std::runtime_error("not a color PFM file: " + path);
    int w, h;
    float scale;
    f >> w >> h >> scale;
    if (!f || w < 1 || h < 1) throw std::runtime_error("malformed PFM header: " + path);
    if (scale >= 0) throw std::runtime_error("big-endian PFM not supported: " + path);
    f.get();  // single whitespace after the scale
    Image img(w, h);
    for (int y = h - 1; y >= 0; --y) {
        Vec3* row = &img.pixels[static_cast<size_t>(y) * w];
        f.read(reinterpret_cast<char*>(row), static_cast<std::streamsize>(sizeof(float) * 3 * w));
    }
    if (!f) throw std::runtime_error("truncated PFM data: " + path);
    return img;
}

// Reinhard x/(1+x), then 8-bit quantization.
inline uint8_t tonemap_8bit(float x) {
    float t = x < 0 ? 0.0f : x / (1.0f + x);
    int v = static_cast<int>(std::lround(t * 255.0f));
    return static_cast<uint8_t>(std::clamp(v, 0, 255));
}

namespace detail {

inline uint32_t crc32_png(const uint8_t* data, size_t n, uint32_t crc = 0xffffffffu) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

inline void png_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
    auto be32 = [&](uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    be32(static_cast<uint32_t>(data.size()));
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()),
                               static_cast<std::streamsize>(data.size()));
    uint32_t crc = crc32_png(reinterpret_cast<const uint8_t*>(type), 4);
    if (!data.empty()) crc = crc32_png(data.data(), data.size(), crc);
    crc ^= 0xffffffffu;
    be32(crc);
}

}  // namespace detail

// 8-bit RGB PNG via zlib stored blocks.
inline void write_png(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr(13);
    auto put_be32 = [](uint8_t* p, uint32_t v) {
        p[0] = static_cast<uint8_t>(v >> 24);
        p[1] = static_cast<uint8_t>(v >> 16);
        p[2] = static_cast<uint8_t>(v >> 8);
        p[3] = static_cast<uint8_t>(v);
    };
    put_be32(ihdr.data(), static_cast<uint32_t>(img.width));
    put_be32(ihdr.data() + 4, static_cast<uint32_t>(img.height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type RGB
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    detail::png_chunk(f, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + 3 * img.width));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        for (int x = 0; x < img.width; ++x) {
            const Vec3& c = img.at(x, y);
            raw.push_back(tonemap_8bit(c.x));
            raw.push_back(tonemap_8bit(c.y));
            raw.push_back(tonemap_8bit(c.z));
        }
    }
    uint32_t a = 1, b = 0;
    for (uint8_t byte : raw) {
        a = (a + byte) % 65521;
        b = (b + a) % 65521;
    }
    std::vector<uint8_t> idat;
    idat.push_back(0x78);
    idat.push_back(0x01);
    size_t off = 0;
    while (off < raw.size() || raw.empty()) {
        size_t len = std::min<size_t>(65535, raw.size() - off);
        bool final = off + len == raw.size();
        idat.push_back(final ? 1 : 0);
        idat.push_back(static_cast<uint8_t>(len & 0xff));
        idat.push_back(static_cast<uint8_t>(len >> 8));
        idat.push_back(static_cast<uint8_t>(~len & 0xff));
        idat.push_back(static_cast<uint8_t>((~len >> 8) & 0xff));
        idat.insert(idat.end(), raw.begin() + off, raw.begin() + off + len);
        off += len;
        if (final || raw.empty()) break;
    }
    uint32_t adler = (b << 16) | a;
    idat.push_back(static_cast<uint8_t>(adler >> 24));
    idat.push_back(static_cast<uint8_t>(adler >> 16));
    idat.push_back(static_cast<uint8_t>(adler >> 8));
    idat.push_back(static_cast<uint8_t>(adler));
    detail::png_chunk(f, "IDAT", idat);
    detail::png_chunk(f, "IEND", {});
    if (!f) throw std::runtime_error("write failed: " + path);
}

struct ImageMetrics {
    double mse = 0;
    double psnr = 0;
    double ssim = 0;
};

inline double image_mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::runtime_error("metrics: image dimensions differ");
    double sum = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        Vec3 d = a.pixels[i] - b.pixels[i];
        sum += static_cast<double>(d.x) * d.x + static_cast<double>(d.y) * d.y +
               static_cast<double>(d.z) * d.z;
    }
    return sum / (3.0 * static_cast<double>(a.pixels.size()));
}

// SSIM per Wang et al.: 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
// computed on the tone-mapped 8-bit luminance of both images.
inline double image_ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::runtime_error("metrics: image dimensions differ");
    const int w = a.width, h = a.height;
    auto lum = [](const Image& img) {
        std::vector<double> out(img.pixels.size());
        for (size_t i = 0; i < img.pixels.size(); ++i) {
            const Vec3& c = img.pixels[i];
            out[i] = 0.2126 * tonemap_8bit(c.x) + 0.7152 * tonemap_8bit(c.y) +
                     0.0722 * tonemap_8bit(c.z);
        }
        return out;
    };
    std::vector<double> x = lum(a), y = lum(b);

    constexpr int kR = 5;  // 11x11 window
    std::array<double, 11> g;
    double gsum = 0;
    for (int i = 0; i < 11; ++i) {
        double d = i - kR;
        g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        gsum += g[i];
    }
    for (auto& v : g) v /= gsum;

    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double c2 = (0.03 * 255) * (0.03 * 255);
    if (w < 11 || h < 11) throw std::runtime_error("metrics: image too small for SSIM window");

    double total = 0;
    int count = 0;
    for (int cy = kR; cy < h - kR; ++cy) {
        for (int cx = kR; cx < w - kR; ++cx) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int dy = -kR; dy <= kR; ++dy) {
                for (int dx = -kR; dx <= kR; ++dx) {
                    double wgt = g[dy + kR] * g[dx + kR];
                    double xv = x[static_cast<size_t>(cy + dy) * w + cx + dx];
                    double yv = y[static_cast<size_t>(cy + dy) * w + cx + dx];
                    mx += wgt * xv;
                    my += wgt * yv;
                    sxx += wgt * xv * xv;
                    syy += wgt * yv * yv;
                    sxy += wgt * xv * yv;
                }
            }
            sxx -= mx * mx;
            syy -= my * my;
            sxy -= mx * my;
            double ssim = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                          ((mx * mx + my * my + c1) * (sxx + syy + c2));
            total += ssim;
            ++count;
        }
    }
    return total / count;
}

// MSE/PSNR in linear HDR; PSNR peak is the max channel value of the
// reference image `b` (floored at 1 so black references stay finite).
inline ImageMetrics image_metrics(const Image& a, const Image& b) {
    ImageMetrics m;
    m.mse = image_mse(a, b);
    double peak = 0;
    for (const Vec3& p : b.pixels) peak = std::max<double>(peak, max_component(p));
    peak = std::max(peak, 1.0);
    m.psnr = m.mse <= 0 ? std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(peak * peak / m.mse);
    m.ssim = image_ssim(a, b);
    return m;
}

}  // namespace ltm
