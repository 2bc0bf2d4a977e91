#pragma once

#include <cmath>
#include <optional>

#include "magiclens/image.hpp"
#include "magiclens/lens.hpp"
#include "magiclens/raster.hpp"

namespace magiclens {

struct TunnelConfig {
    /// Lens radius as a fraction of the peripheral frame's half-diagonal angle. Unset: the
    /// lens radius is half the NeRF frame's field of view.
    std::optional<double> lens_radius_frac;
    double feather_deg = 2.0;
    double merge_alpha = 1.0;

    void validate() const {
        if (!(feather_deg >= 0.0)) throw ValidationError("feather_deg must be >= 0");
        if (!(merge_alpha >= 0.0 && merge_alpha <= 1.0)) throw ValidationError("merge_alpha must lie in [0, 1]");
        if (lens_radius_frac && !(*lens_radius_frac >= 0.0)) throw ValidationError("lens_radius_frac must be >= 0");
    }
};

/// Maps NeRF model space into CAD world space.
struct FusionTransform {
    Trs trs{};

    Mat4 matrix() const { return trs.matrix(); }

    void validate() const {
        if (!(trs.scale > 0.0) || !std::isfinite(trs.scale)) throw ValidationError("alignment scale must be > 0");
        if (!trs.rotation.is_normalized()) throw ValidationError("alignment rotation must be a unit quaternion");
        for (int a = 0; a < 3; ++a)
            if (!std::isfinite(trs.translation[a])) throw ValidationError("alignment translation must be finite");
    }
};

/// Holder for the current alignment; every assignment is validated.
class Alignment {
public:
    void set(const FusionTransform& t) {
        t.validate();
        current_ = t;
    }
    const FusionTransform& get() const { return current_; }

private:
    FusionTransform current_{};
};

namespace detail {

inline void require_same_pose(const View& a, const View& b) {
    const Vec3 dp = a.camera.position - b.camera.position;
    const Quat& qa = a.camera.orientation;
    const Quat& qb = b.camera.orientation;
    // q and -q encode the same rotation
    const double qd = std::abs(qa.x * qb.x + qa.y * qb.y + qa.z * qb.z + qa.w * qb.w);
    if (length(dp) > 1e-9 || std::abs(qd - 1.0) > 1e-9)
        throw ValidationError("frames were rendered from different camera poses");
}

inline Rgba over(const Rgba& front, float front_scale, const Rgba& back) {
    const float k = 1.0f - front_scale * front.a;
    return {front_scale * front.r + k * back.r, front_scale * front.g + k * back.g, front_scale * front.b + k * back.b,
            front_scale * front.a + k * back.a};
}

/// w * a + (1 - w) * b, exact at w = 0, w = 1 and a == b.
inline Rgba lerp(const Rgba& a, const Rgba& b, float w) {
    if (w <= 0.0f) return b;
    if (w >= 1.0f) return a;
    return {b.r + w * (a.r - b.r), b.g + w * (a.g - b.g), b.b + w * (a.b - b.b), b.a + w * (a.a - b.a)};
}

/// Nearest NeRF pixel along the direction of raster pixel (x, y), if inside the NeRF frame.
inline const Rgba* lookup(const Framebuffer& nerf, const Intrinsics& raster_in, std::uint32_t x, std::uint32_t y) {
    const Vec3 d = raster_in.pixel_dir(x, y);
    const auto [u, v] = nerf.view.intrinsics.project(d);
    const double fu = std::floor(u), fv = std::floor(v);
    if (fu < 0 || fv < 0 || fu >= nerf.width || fv >= nerf.height) return nullptr;
    return &nerf.at(std::uint32_t(fu), std::uint32_t(fv));
}

template <class WeightFn>
Framebuffer blend(const Framebuffer& nerf, const Framebuffer& raster, float merge_alpha, WeightFn&& weight) {
    require_same_pose(nerf.view, raster.view);
    Framebuffer out(raster.width, raster.height);
    out.view = raster.view;
    out.background = nerf.background;
    const Intrinsics& in = raster.view.intrinsics;
    for (std::uint32_t y = 0; y < raster.height; ++y)
        for (std::uint32_t x = 0; x < raster.width; ++x) {
            const Rgba& r = raster.at(x, y);
            const Rgba* n = lookup(nerf, in, x, y);
            const float w = n ? float(weight(x, y)) : 0.0f;
            out.at(x, y) = n ? lerp(over(*n, merge_alpha, r), r, w) : r;
        }
    return out;
}

}  // namespace detail

/// Lens-weight of a pixel at eccentricity `theta` for a lens of radius `lens_radius` (radians).
inline double tunnel_weight(double theta, double lens_radius, double feather) {
    if (feather <= 0.0) return theta < lens_radius ? 1.0 : 0.0;
    return 1.0 - smoothstep(lens_radius - feather, lens_radius, theta);
}

/// Lens radius in radians for a composite over `raster` with the NeRF frame `nerf`.
inline double tunnel_radius(const Framebuffer& nerf, const Framebuffer& raster, const TunnelConfig& cfg) {
    if (cfg.lens_radius_frac) {
        const double half_diag = std::atan(std::sqrt(2.0) * raster.view.intrinsics.tan_half());
        return *cfg.lens_radius_frac * half_diag;
    }
    return deg_to_rad(nerf.view.intrinsics.fov_deg) / 2.0;
}

/// MR tunneling: NeRF in the central lens, raster in the periphery, smoothstep-feathered
/// by angular eccentricity. Output has the raster frame's size and intrinsics.
inline Framebuffer composite_tunnel(const Framebuffer& nerf, const Framebuffer& raster, const TunnelConfig& cfg) {
    cfg.validate();
    const double radius = tunnel_radius(nerf, raster, cfg);
    const double feather = deg_to_rad(cfg.feather_deg);
    const Intrinsics& in = raster.view.intrinsics;
    return detail::blend(nerf, raster, float(cfg.merge_alpha), [&](std::uint32_t x, std::uint32_t y) {
        return tunnel_weight(in.eccentricity(x + 0.5, y + 0.5), radius, feather);
    });
}

inline Framebuffer composite_tunnel(const Framebuffer& nerf, const RasterOutput& raster, const TunnelConfig& cfg) {
    return composite_tunnel(nerf, raster.color, cfg);
}

/// Translucent merge for alignment checks: the NeRF frame laid over the raster wherever it
/// has coverage, at opacity `merge_alpha`.
inline Framebuffer composite_merge(const Framebuffer& nerf, const Framebuffer& raster, double merge_alpha) {
    if (!(merge_alpha >= 0.0 && merge_alpha <= 1.0)) throw ValidationError("merge_alpha must lie in [0, 1]");
    return detail::blend(nerf, raster, float(merge_alpha), [](std::uint32_t, std::uint32_t) { return 1.0; });
}

/// Per-pixel depth test: the nearer layer goes in front of the other. Ties go to the raster.
/// Frames must share pose and resolution. For participating media in front of geometry,
/// render the NeRF with the raster depth as its depth limit so its alpha ends at the surface.
inline Framebuffer depth_occlude(const Framebuffer& nerf, const DepthMap& nerf_depth, const RasterOutput& raster) {
    detail::require_same_pose(nerf.view, raster.color.view);
    if (nerf.width != raster.color.width || nerf.height != raster.color.height || nerf_depth.width != nerf.width ||
        nerf_depth.height != nerf.height)
        throw ValidationError("depth_occlude requires equal frame sizes");
    Framebuffer out(nerf.width, nerf.height);
    out.view = nerf.view;
    out.background = nerf.background;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const Rgba& n = nerf.pixels[i];
        const Rgba& r = raster.color.pixels[i];
        out.pixels[i] = nerf_depth.depth[i] < raster.depth.depth[i] ? detail::over(n, 1.0f, r) : detail::over(r, 1.0f, n);
    }
    return out;
}

}  // namespace magiclens
