#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "magiclens/error.hpp"
#include "magiclens/lens.hpp"

namespace magiclens {

/// Premultiplied RGBA.
struct Rgba {
    float r = 0, g = 0, b = 0, a = 0;
    bool operator==(const Rgba&) const = default;
};

/// Depth written where nothing was rasterized.
inline constexpr float kDepthSentinel = std::numeric_limits<float>::max();

/// Pose and intrinsics a frame was rendered with.
struct View {
    Camera camera;
    Intrinsics intrinsics;
};

struct Framebuffer {
    std::uint32_t width = 0, height = 0;
    std::vector<Rgba> pixels;           // premultiplied, row-major
    std::optional<Rgb> background;      // opaque backdrop applied on export
    View view;

    Framebuffer() = default;
    Framebuffer(std::uint32_t w, std::uint32_t h) : width(w), height(h), pixels(std::size_t(w) * h) {}

    Rgba& at(std::uint32_t x, std::uint32_t y) { return pixels[std::size_t(y) * width + x]; }
    const Rgba& at(std::uint32_t x, std::uint32_t y) const { return pixels[std::size_t(y) * width + x]; }

    /// Pixel composited over the background (or left as-is without one).
    Rgba resolved(std::size_t i) const {
        Rgba p = pixels[i];
        if (background) {
            const float t = 1.0f - p.a;
            p.r += t * float(background->x);
            p.g += t * float(background->y);
            p.b += t * float(background->z);
            p.a = 1.0f;
        }
        return p;
    }
};

struct DepthMap {
    std::uint32_t width = 0, height = 0;
    std::vector<float> depth;
    float near = 0, far = 0;
    float sentinel = kDepthSentinel;

    DepthMap() = default;
    DepthMap(std::uint32_t w, std::uint32_t h, float fill) : width(w), height(h), depth(std::size_t(w) * h, fill) {}

    float& at(std::uint32_t x, std::uint32_t y) { return depth[std::size_t(y) * width + x]; }
    float at(std::uint32_t x, std::uint32_t y) const { return depth[std::size_t(y) * width + x]; }
};

inline std::uint8_t to_unorm8(float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

/// Straight (non-premultiplied) RGBA8 bytes.
inline std::vector<std::uint8_t> to_rgba8(const Framebuffer& fb) {
    std::vector<std::uint8_t> out(fb.pixels.size() * 4);
    for (std::size_t i = 0; i < fb.pixels.size(); ++i) {
        Rgba p = fb.resolved(i);
        if (p.a > 0.0f && p.a < 1.0f) p = {p.r / p.a, p.g / p.a, p.b / p.a, p.a};
        out[4 * i + 0] = to_unorm8(p.r);
        out[4 * i + 1] = to_unorm8(p.g);
        out[4 * i + 2] = to_unorm8(p.b);
        out[4 * i + 3] = to_unorm8(p.a);
    }
    return out;
}

inline std::vector<std::uint8_t> encode_png(std::uint32_t width, std::uint32_t height,
                                            const std::vector<std::uint8_t>& rgba) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError(FormatError::Kind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError(FormatError::Kind::Io, "PNG encoding failed");
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
            v->insert(v->end(), data, data + len);
        },
        nullptr);
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::uint32_t y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(rgba.data() + std::size_t(y) * width * 4));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

inline std::vector<std::uint8_t> encode_png(const Framebuffer& fb) {
    return encode_png(fb.width, fb.height, to_rgba8(fb));
}

}  // namespace magiclens
