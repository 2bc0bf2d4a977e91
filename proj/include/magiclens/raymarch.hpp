#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "magiclens/field.hpp"
#include "magiclens/image.hpp"
#include "magiclens/lens.hpp"
#include "magiclens/parallel.hpp"

namespace magiclens {

struct MarchConfig {
    double step = 0.0;       // model-space length per sample; 0 selects voxel_size / 2
    double term_eps = 1e-4;  // stop once transmittance drops below this
    Rgb background{};

    void validate() const {
        if (!(step >= 0.0)) throw ValidationError("march step must be > 0");
        if (!(term_eps >= 0.0 && term_eps < 1.0)) throw ValidationError("term_eps must lie in [0, 1)");
    }
    double step_for(const GridGeometry& g) const { return step > 0.0 ? step : g.voxel_size / 2.0; }
};

struct PixelResult {
    Rgb color{};          // composited over the background
    Rgb premultiplied{};  // accumulated radiance without the background
    double alpha = 0.0;
    double depth = 0.0;
    std::uint64_t samples = 0;
};

struct FrameStats {
    std::uint64_t rays_total = 0;
    std::uint64_t rays_active = 0;
    std::uint64_t samples_total = 0;
    double wall_time_ms = 0.0;
    std::uint64_t skipped_voxel_spans = 0;

    FrameStats& operator+=(const FrameStats& o) {
        rays_total += o.rays_total;
        rays_active += o.rays_active;
        samples_total += o.samples_total;
        wall_time_ms += o.wall_time_ms;
        skipped_voxel_spans += o.skipped_voxel_spans;
        return *this;
    }
};

/// Occupied stretch of a ray, [lo, hi] in ray parameter units.
using Span = Interval;

struct SpanList {
    std::vector<Span> spans;
    std::uint64_t empty_runs = 0;  // maximal runs of unoccupied voxels the segment crossed
};

/// Incremental Amanatides-Woo traversal of `bits` along the part of the ray inside both its
/// t_range and the grid AABB. Each call to next() yields the next maximal run of occupied
/// voxels, so callers can stop walking once they are done with the ray.
class DdaWalker {
public:
    DdaWalker(const GridGeometry& g, const OccupancyBitfield& bits, const Ray& ray) : bytes_(bits.bytes().data()) {
        seg_ = ray.t_range.intersect(slab_intersect(ray.origin, ray.dir, g.lo(), g.hi()));
        if (seg_.empty() || !(seg_.hi > seg_.lo)) {
            done_ = true;
            return;
        }
        const std::int64_t stride[3] = {std::int64_t(g.dims.w) * g.dims.l, std::int64_t(g.dims.l), 1};
        const Vec3 entry = ray.origin + ray.dir * seg_.lo;
        for (int a = 0; a < 3; ++a) {
            const int dim = int(g.dims[a]);
            const double u = (entry[a] - g.origin[a]) / g.voxel_size;
            const int idx = std::clamp(int(std::floor(u)), 0, dim - 1);
            lin_ += idx * stride[a];
            const double d = ray.dir[a];
            if (d > 0) {
                lstep_[a] = stride[a];
                left_[a] = dim - 1 - idx;
                t_max_[a] = (g.origin[a] + (idx + 1) * g.voxel_size - ray.origin[a]) / d;
                t_delta_[a] = g.voxel_size / d;
            } else if (d < 0) {
                lstep_[a] = -stride[a];
                left_[a] = idx;
                t_max_[a] = (g.origin[a] + idx * g.voxel_size - ray.origin[a]) / d;
                t_delta_[a] = -g.voxel_size / d;
            } else {
                lstep_[a] = 0;
                left_[a] = 0;
                t_max_[a] = std::numeric_limits<double>::infinity();
                t_delta_[a] = std::numeric_limits<double>::infinity();
            }
        }
        t_ = seg_.lo;
    }

    /// Segment actually walked: the ray's t_range clipped to the grid AABB.
    const Interval& segment() const { return seg_; }
    /// Maximal runs of unoccupied voxels crossed so far.
    std::uint64_t empty_runs() const { return empty_runs_; }

    std::optional<Span> next() {
        std::optional<Span> span;
        while (!done_) {
            const int axis = t_max_[0] < t_max_[1] ? (t_max_[0] < t_max_[2] ? 0 : 2) : (t_max_[1] < t_max_[2] ? 1 : 2);
            const double t_exit = std::min(t_max_[axis], seg_.hi);
            bool closed = false;
            if (t_exit > t_) {
                const bool occupied = (bytes_[lin_ >> 3] >> (lin_ & 7)) & 1u;
                if (occupied) {
                    if (span)
                        span->hi = t_exit;
                    else
                        span = Span{t_, t_exit};
                } else if (!in_gap_) {
                    ++empty_runs_;
                }
                in_gap_ = !occupied;
                closed = span && !occupied;
                t_ = t_exit;
            }
            if (t_exit >= seg_.hi || left_[axis] == 0) {
                done_ = true;
                break;
            }
            --left_[axis];
            lin_ += lstep_[axis];
            t_max_[axis] += t_delta_[axis];
            if (closed) break;
        }
        return span;
    }

private:
    const std::uint8_t* bytes_;
    Interval seg_{};
    double t_ = 0, t_max_[3]{}, t_delta_[3]{};
    std::int64_t lin_ = 0, lstep_[3]{}, left_[3]{};
    std::uint64_t empty_runs_ = 0;
    bool in_gap_ = false, done_ = false;
};

/// All occupied spans of the ray, consecutive occupied voxels merged.
inline SpanList dda_span_list(const GridGeometry& g, const OccupancyBitfield& bits, const Ray& ray) {
    SpanList out;
    DdaWalker walker(g, bits, ray);
    while (auto s = walker.next()) out.spans.push_back(*s);
    out.empty_runs = walker.empty_runs();
    return out;
}

inline std::vector<Span> dda_spans(const GridGeometry& g, const OccupancyBitfield& bits, const Ray& ray) {
    return dda_span_list(g, bits, ray).spans;
}

/// Grid plus the occupancy used to mask it, and the one-voxel dilation of that occupancy
/// used for traversal. Every point whose masked interpolation stencil touches an occupied
/// voxel lies inside a traversable voxel, so skipping untraversable voxels is lossless.
class MarchVolume {
public:
    MarchVolume(const RadianceFieldGrid& grid, OccupancyBitfield mask)
        : grid_(&grid), mask_(std::move(mask)), traversal_(dilate(mask_)) {
        if (!(mask_.dims() == grid.dims()))
            throw ValidationError("mask shape " + mask_.dims().str() + " does not match grid shape " + grid.dims().str());
    }

    const RadianceFieldGrid& grid() const { return *grid_; }
    const OccupancyBitfield& mask() const { return mask_; }
    const OccupancyBitfield& traversal() const { return traversal_; }

private:
    const RadianceFieldGrid* grid_;
    OccupancyBitfield mask_;
    OccupancyBitfield traversal_;
};

/// Trilinear density over mask-gated voxels; color is the density-weighted mean of the
/// contributing corners, so empty voxels never tint the result.
inline FieldSample sample_masked(const RadianceFieldGrid& grid, const OccupancyBitfield& mask, const Vec3& p) {
    const GridGeometry& g = grid.geometry();
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double u = (p[a] - g.origin[a]) / g.voxel_size - 0.5;
        const double f = std::floor(u);
        base[a] = int(f);
        frac[a] = u - f;
    }
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        const int n = int(g.dims[a]) - 1;
        lo[a] = std::clamp(base[a], 0, n);
        hi[a] = std::clamp(base[a] + 1, 0, n);
    }
    double density = 0;
    Rgb weighted{};
    for (int c = 0; c < 8; ++c) {
        const int i = (c & 1) ? hi[0] : lo[0];
        const int j = (c & 2) ? hi[1] : lo[1];
        const int k = (c & 4) ? hi[2] : lo[2];
        const std::size_t idx = g.index(std::uint32_t(i), std::uint32_t(j), std::uint32_t(k));
        if (!mask.get(idx)) continue;
        const double w = ((c & 1) ? frac[0] : 1.0 - frac[0]) * ((c & 2) ? frac[1] : 1.0 - frac[1]) *
                         ((c & 4) ? frac[2] : 1.0 - frac[2]);
        const auto& v = grid.at(idx);
        const double ws = w * v.sigma;
        density += ws;
        weighted += Rgb{v.r, v.g, v.b} * ws;
    }
    FieldSample s;
    s.density = density;
    if (density > 0) s.color = weighted / density;
    return s;
}

namespace detail {

struct RayOutcome {
    PixelResult pixel;
    std::uint64_t empty_runs = 0;
};

/// `traversal` chooses which voxels are visited; `mask` gates the sampled densities.
inline RayOutcome march(const RadianceFieldGrid& grid, const OccupancyBitfield& mask,
                        const OccupancyBitfield& traversal, const Ray& ray, const MarchConfig& cfg) {
    RayOutcome out;
    PixelResult& res = out.pixel;
    res.color = cfg.background;
    res.depth = ray.t_far;
    if (!ray.active) return out;
    const GridGeometry& g = grid.geometry();
    const Interval seg = ray.t_range.intersect(slab_intersect(ray.origin, ray.dir, g.lo(), g.hi()));
    if (seg.empty() || !(seg.hi > seg.lo)) return out;

    const double dt = cfg.step_for(g);
    const double len = seg.hi - seg.lo;
    const std::int64_t cells = std::max<std::int64_t>(1, std::int64_t(std::ceil(len / dt)));
    auto cell_bounds = [&](std::int64_t i) {
        const double lo = seg.lo + double(i) * dt;
        const double hi = i + 1 >= cells ? seg.hi : std::min(seg.hi, seg.lo + double(i + 1) * dt);
        return Interval{lo, hi};
    };

    DdaWalker walker(g, traversal, ray);
    double transmittance = 1.0, depth_acc = 0.0;
    Rgb radiance{};
    bool done = false;
    while (!done) {
        const std::optional<Span> span = walker.next();
        if (!span) break;
        std::int64_t i = std::max<std::int64_t>(0, std::int64_t(std::floor((span->lo - seg.lo) / dt - 0.5)));
        for (; i < cells; ++i) {
            const Interval c = cell_bounds(i);
            if ((c.lo + c.hi) * 0.5 >= span->lo) break;
        }
        for (; i < cells; ++i) {
            const Interval c = cell_bounds(i);
            const double mid = (c.lo + c.hi) * 0.5;
            if (mid >= span->hi) break;
            const FieldSample s = sample_masked(grid, mask, ray.origin + ray.dir * mid);
            ++res.samples;
            const double alpha = 1.0 - std::exp(-s.density * (c.hi - c.lo));
            const double weight = transmittance * alpha;
            radiance += s.color * weight;
            depth_acc += weight * mid;
            transmittance *= 1.0 - alpha;
            if (transmittance < cfg.term_eps) {
                done = true;
                break;
            }
        }
    }
    out.empty_runs = walker.empty_runs();
    res.premultiplied = radiance;
    res.alpha = 1.0 - transmittance;
    res.color = radiance + cfg.background * transmittance;
    res.depth = depth_acc + transmittance * ray.t_far;
    return out;
}

}  // namespace detail

/// Integrates one model-space ray through the masked field.
inline PixelResult integrate_ray(const MarchVolume& volume, const Ray& ray, const MarchConfig& cfg) {
    return detail::march(volume.grid(), volume.mask(), volume.traversal(), ray, cfg).pixel;
}

inline PixelResult integrate_ray(const RadianceFieldGrid& grid, const OccupancyBitfield& mask, const Ray& ray,
                                 const MarchConfig& cfg) {
    return integrate_ray(MarchVolume(grid, mask), ray, cfg);
}

/// Everything a frame render reads. `alignment` maps field model space into world space;
/// `scene_box` restricts the rendered volume.
struct RenderScene {
    const MarchVolume* volume = nullptr;
    CropBox scene_box;
    Trs alignment{};
};

/// Crop box equal to the grid AABB, placed by the alignment transform.
inline CropBox default_scene_box(const RadianceFieldGrid& grid, const Trs& alignment = {}) {
    return {grid.geometry().lo(), grid.geometry().hi(), alignment};
}

struct RenderOptions {
    unsigned threads = 0;
    bool keep_image = true;
    /// Per output pixel upper bound on ray depth (world units), e.g. a raster depth map.
    const DepthMap* depth_limit = nullptr;
};

struct RenderedFrame {
    Framebuffer color;
    DepthMap depth;
    FrameStats stats;
};

/// Renders the R x R supersampled lens image and box-filters it down by the per-axis
/// supersampling factor. Output depth keeps the nearest sub-sample.
inline RenderedFrame render_frame(const RenderScene& scene, const Camera& cam, const LensConfig& lens,
                                  const MarchConfig& cfg, const RenderOptions& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    cam.validate();
    lens.validate(cam);
    cfg.validate();
    scene.scene_box.validate();
    if (!(scene.alignment.scale > 0.0)) throw ValidationError("alignment scale must be > 0");

    RenderedFrame frame;
    const std::uint32_t res = lens_resolution(lens.fov_deg, lens.ppd);
    const std::uint32_t ss = std::uint32_t(lens.supersample_axis());
    const std::uint32_t out_side = res == 0 ? 0 : std::max(1u, (res + ss - 1) / ss);
    frame.color = Framebuffer(out_side, out_side);
    frame.color.background = cfg.background;
    frame.color.view = {cam, {lens.fov_deg, out_side}};
    frame.depth = DepthMap(out_side, out_side, float(cam.far));
    frame.depth.near = float(cam.near);
    frame.depth.far = float(cam.far);
    frame.depth.sentinel = float(cam.far);
    if (res == 0) return frame;
    if (opt.depth_limit && (opt.depth_limit->width != out_side || opt.depth_limit->height != out_side))
        throw ValidationError("depth limit map must match the output resolution");

    const MarchVolume& vol = *scene.volume;
    const Intrinsics in{lens.fov_deg, res};
    const CropBox volume_box = lens_box(cam, lens);
    const Trs& align = scene.alignment;
    const double inv_scale = 1.0 / align.scale;

    std::vector<Rgba> hi;
    std::vector<float> hi_depth;
    if (opt.keep_image) {
        hi.resize(std::size_t(res) * res);
        hi_depth.resize(std::size_t(res) * res);
    }

    const unsigned workers = unsigned(std::min<std::size_t>(resolve_threads(opt.threads), res));
    std::vector<FrameStats> partial(workers);
    parallel_bands(res, workers, [&](std::size_t y0, std::size_t y1, unsigned w) {
        FrameStats& st = partial[w];
        for (std::size_t y = y0; y < y1; ++y) {
            for (std::uint32_t x = 0; x < res; ++x) {
                Ray world = pixel_ray(cam, in, volume_box, scene.scene_box, x, std::uint32_t(y));
                if (opt.depth_limit) {
                    const double limit = opt.depth_limit->at(x / ss, std::uint32_t(y) / ss);
                    world.t_far = std::min(world.t_far, limit);
                    world.t_range.hi = std::min(world.t_range.hi, limit);
                    world.active = world.active && world.t_range.hi > world.t_range.lo;
                }
                ++st.rays_total;
                Ray model;
                model.origin = align.inverse_apply(world.origin);
                model.dir = align.rotation.inverse_rotate(world.dir);
                model.t_range = {world.t_range.lo * inv_scale, world.t_range.hi * inv_scale};
                model.t_far = world.t_far * inv_scale;
                model.active = world.active;
                const detail::RayOutcome r = detail::march(vol.grid(), vol.mask(), vol.traversal(), model, cfg);
                if (world.active) ++st.rays_active;
                st.samples_total += r.pixel.samples;
                st.skipped_voxel_spans += r.empty_runs;
                if (opt.keep_image) {
                    const std::size_t i = y * res + x;
                    hi[i] = {float(r.pixel.premultiplied.x), float(r.pixel.premultiplied.y),
                             float(r.pixel.premultiplied.z), float(r.pixel.alpha)};
                    hi_depth[i] = float(r.pixel.depth * align.scale);
                }
            }
        }
    });
    for (const FrameStats& p : partial) frame.stats += p;

    if (opt.keep_image) {
        for (std::uint32_t oy = 0; oy < out_side; ++oy)
            for (std::uint32_t ox = 0; ox < out_side; ++ox) {
                double r = 0, g = 0, b = 0, a = 0;
                float d = std::numeric_limits<float>::infinity();
                std::uint32_t n = 0;
                for (std::uint32_t sy = oy * ss; sy < std::min(res, (oy + 1) * ss); ++sy)
                    for (std::uint32_t sx = ox * ss; sx < std::min(res, (ox + 1) * ss); ++sx) {
                        const std::size_t i = std::size_t(sy) * res + sx;
                        r += hi[i].r, g += hi[i].g, b += hi[i].b, a += hi[i].a;
                        d = std::min(d, hi_depth[i]);
                        ++n;
                    }
                frame.color.at(ox, oy) = {float(r / n), float(g / n), float(b / n), float(a / n)};
                frame.depth.at(ox, oy) = d;
            }
    }
    frame.stats.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return frame;
}

}  // namespace magiclens
