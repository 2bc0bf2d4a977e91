#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "magiclens/error.hpp"
#include "magiclens/field.hpp"
#include "magiclens/math.hpp"

namespace magiclens {

/// Pinhole camera. Camera frame: +x right, +y down, +z forward; `orientation` maps camera
/// frame vectors to world vectors. `near`/`far` bound the ray parameter (world distance).
struct Camera {
    Vec3 position{};
    Quat orientation{};
    double near = 0.1;
    double far = 100.0;

    void validate() const {
        if (!(near > 0.0)) throw ValidationError("camera near must be > 0");
        if (!(far > near)) throw ValidationError("camera far must exceed near");
        if (!orientation.is_normalized()) throw ValidationError("camera orientation must be a unit quaternion");
    }

    Vec3 forward() const { return orientation.rotate({0, 0, 1}); }
    Trs pose() const { return {position, orientation, 1.0}; }
};

struct LensConfig {
    double fov_deg = 30.0;
    double ppd = 20.0;
    double plane_w = 2.0;   // W: box cross-section side, world units
    double far_len = 2.0;   // L: distance of the box far face from the camera
    double supersample_c = 4.0;

    void validate(const Camera& cam) const {
        if (!(fov_deg > 0.0 && fov_deg <= 120.0)) throw ValidationError("fov_deg out of range");
        if (!(ppd > 0.0)) throw ValidationError("ppd must be > 0");
        if (!(plane_w > 0.0)) throw ValidationError("plane_w must be > 0");
        if (!(far_len > cam.near)) throw ValidationError("far_len must exceed camera near");
        if (!(supersample_c >= 1.0)) throw ValidationError("supersample_c must be >= 1");
    }

    /// Per-axis supersampling factor; C = 4 gives 2.
    int supersample_axis() const { return std::max(1, int(std::lround(std::sqrt(supersample_c)))); }
};

struct Ray {
    Vec3 origin{};
    Vec3 dir{0, 0, 1};
    Interval t_range{};
    double t_far = 0.0;  // background depth reported when nothing is hit
    bool active = false;
};

/// Square image over a symmetric field of view; pixel centers sit at half-integers.
struct Intrinsics {
    double fov_deg = 30.0;
    std::uint32_t side = 1;

    double tan_half() const { return std::tan(deg_to_rad(fov_deg) / 2.0); }

    /// Unnormalized camera-frame direction (u, v, 1) through continuous pixel coords (px, py).
    Vec3 camera_dir(double px, double py) const {
        const double t = tan_half();
        return {(px / side * 2.0 - 1.0) * t, (py / side * 2.0 - 1.0) * t, 1.0};
    }
    Vec3 pixel_dir(std::uint32_t x, std::uint32_t y) const { return camera_dir(x + 0.5, y + 0.5); }

    /// Continuous pixel coordinates of a camera-frame point with z > 0.
    std::pair<double, double> project(const Vec3& pc) const {
        const double t = tan_half();
        return {(pc.x / pc.z / t + 1.0) * 0.5 * side, (pc.y / pc.z / t + 1.0) * 0.5 * side};
    }

    /// Angle between the principal axis and the ray through continuous coords (px, py).
    double eccentricity(double px, double py) const {
        const Vec3 d = camera_dir(px, py);
        return std::atan2(std::hypot(d.x, d.y), d.z);
    }
};

/// Pixels per side: round(fov * ppd * 2).
inline std::uint32_t lens_resolution(double fov_deg, double ppd) {
    if (fov_deg < 0 || ppd < 0) throw ValidationError("fov and ppd must be >= 0");
    return std::uint32_t(std::llround(fov_deg * ppd * 2.0));
}

/// The lens render volume: W x W cross-section around the view axis, from the near plane
/// to depth L, expressed in the camera frame and carried by the camera pose.
inline CropBox lens_box(const Camera& cam, const LensConfig& lens) {
    CropBox box;
    box.min = {-lens.plane_w / 2, -lens.plane_w / 2, cam.near};
    box.max = {lens.plane_w / 2, lens.plane_w / 2, lens.far_len};
    box.model_transform = cam.pose();
    return box;
}

/// World-space ray through pixel (x, y), clipped to [near, far], the lens box and the scene box.
inline Ray pixel_ray(const Camera& cam, const Intrinsics& in, const CropBox& lens_volume, const CropBox& scene_box,
                     std::uint32_t x, std::uint32_t y) {
    const Vec3 dc = normalize(in.pixel_dir(x, y));
    Ray r;
    r.origin = cam.position;
    r.dir = cam.orientation.rotate(dc);
    r.t_far = cam.far;
    // Lens box lives in the camera frame: the ray there is simply t * dc.
    Interval t{cam.near, cam.far};
    t = t.intersect(slab_intersect({}, dc, lens_volume.min, lens_volume.max));
    if (!t.empty()) t = t.intersect(scene_box.clip(r.origin, r.dir));
    r.t_range = t;
    r.active = !t.empty() && t.hi > t.lo;
    return r;
}

struct RayBundle {
    Intrinsics intrinsics;
    std::vector<Ray> rays;  // row-major, rays[y * side + x]
    std::size_t active_count() const {
        std::size_t n = 0;
        for (const Ray& r : rays) n += r.active;
        return n;
    }
};

/// One ray per pixel of the R x R lens image, R = lens_resolution(fov, ppd).
inline RayBundle generate_rays(const Camera& cam, const LensConfig& lens, const CropBox& scene_box) {
    cam.validate();
    lens.validate(cam);
    RayBundle b;
    b.intrinsics = {lens.fov_deg, lens_resolution(lens.fov_deg, lens.ppd)};
    const CropBox volume = lens_box(cam, lens);
    const std::uint32_t n = b.intrinsics.side;
    b.rays.reserve(std::size_t(n) * n);
    for (std::uint32_t y = 0; y < n; ++y)
        for (std::uint32_t x = 0; x < n; ++x) b.rays.push_back(pixel_ray(cam, b.intrinsics, volume, scene_box, x, y));
    return b;
}

/// Continuous pixel coordinates of a world point, or nothing when it is behind the near plane.
inline std::optional<std::pair<double, double>> project_point(const Camera& cam, const Intrinsics& in, const Vec3& p) {
    const Vec3 pc = cam.orientation.inverse_rotate(p - cam.position);
    if (pc.z < cam.near) return std::nullopt;
    return in.project(pc);
}

}  // namespace magiclens
