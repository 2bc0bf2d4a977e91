#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "magiclens/edit.hpp"
#include "magiclens/field.hpp"
#include "magiclens/lens.hpp"
#include "magiclens/raymarch.hpp"

namespace magiclens {

struct PoseSample {
    double t_ms = 0.0;
    Vec3 position{};
    Quat orientation{};
};

struct Trajectory {
    std::vector<PoseSample> samples;

    void validate() const {
        if (samples.empty()) throw ValidationError("trajectory is empty");
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (!samples[i].orientation.is_normalized()) throw ValidationError("trajectory quaternion not normalized");
            if (i > 0 && !(samples[i].t_ms > samples[i - 1].t_ms))
                throw ValidationError("trajectory t_ms must be strictly increasing");
        }
    }
};

/// Orientation whose camera frame (+x right, +y down, +z forward) looks from `eye` at `target`.
inline Quat look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 1, 0}) {
    const Vec3 z = normalize(target - eye);
    const Vec3 x = normalize(cross(z, up));
    const Vec3 y = cross(z, x);
    // rotation matrix with columns x, y, z
    const double m00 = x.x, m01 = y.x, m02 = z.x;
    const double m10 = x.y, m11 = y.y, m12 = z.y;
    const double m20 = x.z, m21 = y.z, m22 = z.z;
    Quat q;
    const double tr = m00 + m11 + m22;
    if (tr > 0) {
        const double s = std::sqrt(tr + 1.0) * 2;
        q = {(m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s, 0.25 * s};
    } else if (m00 > m11 && m00 > m22) {
        const double s = std::sqrt(1.0 + m00 - m11 - m22) * 2;
        q = {0.25 * s, (m01 + m10) / s, (m02 + m20) / s, (m21 - m12) / s};
    } else if (m11 > m22) {
        const double s = std::sqrt(1.0 + m11 - m00 - m22) * 2;
        q = {(m01 + m10) / s, 0.25 * s, (m12 + m21) / s, (m02 - m20) / s};
    } else {
        const double s = std::sqrt(1.0 + m22 - m00 - m11) * 2;
        q = {(m02 + m20) / s, (m12 + m21) / s, 0.25 * s, (m10 - m01) / s};
    }
    return q.normalized();
}

/// Horizontal circle around `center` at height offset `height`, always facing the center.
inline Trajectory orbit_trajectory(const Vec3& center, double radius, double height, std::size_t frames,
                                   double frame_ms = 1000.0 / 90.0) {
    Trajectory t;
    for (std::size_t i = 0; i < frames; ++i) {
        const double a = 2.0 * std::numbers::pi * double(i) / double(std::max<std::size_t>(frames, 1));
        const Vec3 eye = center + Vec3{radius * std::cos(a), height, radius * std::sin(a)};
        t.samples.push_back({double(i) * frame_ms, eye, look_at(eye, center)});
    }
    return t;
}

struct ReplayConfig {
    LensConfig lens{};
    MarchConfig march{};
    double near = 0.02;
    double far = 10.0;
    bool stereo = true;
    double eye_separation = 0.064;
    unsigned threads = 0;
};

struct ReplaySummary {
    double mean_ft_ms = 0, median_ft_ms = 0, p95_ft_ms = 0;
    double mean_samples = 0, mean_active_rays = 0;
};

struct ReplayResult {
    std::vector<FrameStats> frames;  // per trajectory sample; both eyes summed when stereo
    ReplaySummary summary;
};

namespace detail {

/// Nearest-rank percentile of an unsorted list.
inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t rank = std::size_t(std::ceil(p / 100.0 * double(v.size())));
    return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

inline ReplaySummary summarize(const std::vector<FrameStats>& frames) {
    ReplaySummary s;
    if (frames.empty()) return s;
    std::vector<double> times;
    for (const FrameStats& f : frames) {
        times.push_back(f.wall_time_ms);
        s.mean_ft_ms += f.wall_time_ms;
        s.mean_samples += double(f.samples_total);
        s.mean_active_rays += double(f.rays_active);
    }
    const double n = double(frames.size());
    s.mean_ft_ms /= n;
    s.mean_samples /= n;
    s.mean_active_rays /= n;
    s.median_ft_ms = percentile(times, 50.0);
    s.p95_ft_ms = percentile(times, 95.0);
    return s;
}

}  // namespace detail

/// Renders every recorded pose (no interpolation) and collects frame statistics.
inline ReplayResult replay(const Trajectory& traj, const RenderScene& scene, const ReplayConfig& cfg) {
    traj.validate();
    ReplayResult out;
    RenderOptions opt;
    opt.threads = cfg.threads;
    opt.keep_image = false;
    for (const PoseSample& ps : traj.samples) {
        Camera cam{ps.position, ps.orientation, cfg.near, cfg.far};
        FrameStats frame;
        if (cfg.stereo) {
            const Vec3 right = ps.orientation.rotate({1, 0, 0});
            for (double side : {-0.5, 0.5}) {
                Camera eye = cam;
                eye.position = cam.position + right * (side * cfg.eye_separation);
                frame += render_frame(scene, eye, cfg.lens, cfg.march, opt).stats;
            }
        } else {
            frame = render_frame(scene, cam, cfg.lens, cfg.march, opt).stats;
        }
        out.frames.push_back(frame);
    }
    out.summary = detail::summarize(out.frames);
    return out;
}

struct SweepConfig {
    std::vector<double> fov_list{10, 20, 30, 40, 50, 60};
    std::vector<double> ppd_list{15, 20, 25};
    ReplayConfig replay{};
    std::size_t repeat = 1;

    void validate() const {
        if (fov_list.empty() || ppd_list.empty()) throw ValidationError("sweep lists must be non-empty");
        if (repeat == 0) throw ValidationError("repeat must be >= 1");
        for (double f : fov_list)
            if (!(f > 0 && f <= 120)) throw ValidationError("sweep fov out of range");
        for (double p : ppd_list)
            if (!(p > 0)) throw ValidationError("sweep ppd must be > 0");
    }
};

struct SweepRow {
    double fov_deg = 0, ppd = 0;
    std::uint32_t resolution = 0;
    bool masked = false;
    ReplaySummary summary;
};

/// Runs every (ppd, fov) configuration, unmasked and (when `masked` is given) masked.
/// Rows are ordered by ppd, then fov, unmasked before masked.
inline std::vector<SweepRow> sweep(const Trajectory& traj, const RenderScene& unmasked, const RenderScene* masked,
                                   const SweepConfig& cfg) {
    cfg.validate();
    traj.validate();
    std::vector<double> ppds = cfg.ppd_list, fovs = cfg.fov_list;
    std::sort(ppds.begin(), ppds.end());
    std::sort(fovs.begin(), fovs.end());
    std::vector<SweepRow> rows;
    for (double ppd : ppds)
        for (double fov : fovs)
            for (int m = 0; m < (masked ? 2 : 1); ++m) {
                ReplayConfig rc = cfg.replay;
                rc.lens.fov_deg = fov;
                rc.lens.ppd = ppd;
                SweepRow row{fov, ppd, lens_resolution(fov, ppd), m == 1, {}};
                try {
                    std::vector<FrameStats> frames;
                    for (std::size_t r = 0; r < cfg.repeat; ++r) {
                        auto res = replay(traj, m == 1 ? *masked : unmasked, rc);
                        frames.insert(frames.end(), res.frames.begin(), res.frames.end());
                    }
                    row.summary = detail::summarize(frames);
                } catch (const std::exception& e) {
                    throw ValidationError("sweep config fov=" + std::to_string(fov) + " ppd=" + std::to_string(ppd) +
                                          " masked=" + std::to_string(m) + ": " + e.what());
                }
                rows.push_back(row);
            }
    return rows;
}

inline constexpr const char* kSweepCsvHeader =
    "fov_deg,ppd,resolution,masked,mean_ft_ms,p95_ft_ms,mean_samples,mean_active_rays";

namespace detail {

inline std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace detail

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << kSweepCsvHeader << '\n';
    for (const SweepRow& r : rows)
        os << detail::shortest(r.fov_deg) << ',' << detail::shortest(r.ppd) << ',' << r.resolution << ','
           << (r.masked ? 1 : 0) << ',' << detail::fixed3(r.summary.mean_ft_ms) << ','
           << detail::fixed3(r.summary.p95_ft_ms) << ',' << detail::shortest(r.summary.mean_samples) << ','
           << detail::shortest(r.summary.mean_active_rays) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Benchmark scene: a closed hall with floor-level pipework and three inspection targets.

struct BenchmarkScene {
    SceneSpec spec;
    std::vector<EditCommand> target_reveals;  // spheres that keep only the targets visible
    Vec3 focus{};                             // orbit center
};

inline BenchmarkScene benchmark_scene(std::uint32_t side = 128) {
    BenchmarkScene b;
    SceneSpec& s = b.spec;
    s.dims = {side, side, side};
    s.origin = {0, 0, 0};
    s.voxel_size = 1.0 / side;
    auto box = [&](Vec3 lo, Vec3 hi, Rgb c, double d) { s.primitives.push_back({BoxPrimitive{lo, hi}, c, d}); };
    auto sphere = [&](Vec3 c, double r, Rgb col, double d) { s.primitives.push_back({SpherePrimitive{c, r}, col, d}); };
    const double wall = 0.05, opaque = 2000.0;
    box({0, 0, 0}, {1, wall, 1}, {0.45, 0.45, 0.42}, opaque);          // floor
    box({0, 1 - wall, 0}, {1, 1, 1}, {0.35, 0.35, 0.40}, opaque);      // ceiling
    box({0, 0, 0}, {wall, 1, 1}, {0.55, 0.50, 0.45}, opaque);          // walls
    box({1 - wall, 0, 0}, {1, 1, 1}, {0.55, 0.50, 0.45}, opaque);
    box({0, 0, 0}, {1, 1, wall}, {0.50, 0.55, 0.45}, opaque);
    box({0, 0, 1 - wall}, {1, 1, 1}, {0.50, 0.55, 0.45}, opaque);
    for (int p = 0; p < 4; ++p) {                                       // pipe runs along x and z
        const double off = 0.14 + 0.24 * p;
        box({wall, wall, off}, {1 - wall, wall + 0.03, off + 0.03}, {0.2, 0.4, 0.7}, opaque);
        box({off + 0.1, wall + 0.2, wall}, {off + 0.13, wall + 0.23, 1 - wall}, {0.6, 0.6, 0.2}, opaque);
    }
    for (int c = 0; c < 3; ++c) {                                       // columns
        const double x = 0.2 + 0.3 * c;
        box({x, wall, 0.85}, {x + 0.04, 1 - wall, 0.89}, {0.5, 0.5, 0.5}, opaque);
    }
    // targets, resting on the floor
    const Vec3 t1{0.5, 0.08, 0.5}, t2{0.3, 0.09, 0.68}, t3{0.7, 0.1, 0.3};
    sphere(t1, 0.025, {0.9, 0.1, 0.1}, opaque);
    box(t2 - Vec3{0.04, 0.04, 0.04}, t2 + Vec3{0.04, 0.04, 0.04}, {0.1, 0.8, 0.2}, opaque);
    sphere(t3, 0.05, {0.9, 0.7, 0.1}, opaque);
    const double margin = 3.0 / side;
    b.target_reveals = {{EditMode::Reveal, t1, 0.025 + margin},
                        {EditMode::Reveal, t2, 0.04 * std::sqrt(3.0) + margin},
                        {EditMode::Reveal, t3, 0.05 + margin}};
    b.focus = t1;
    return b;
}

/// Everything erased except spheres around the targets.
inline OccupancyBitfield targets_only_mask(RadianceFieldGrid& grid, const BenchmarkScene& scene,
                                           double threshold = kDefaultDensityThreshold) {
    OccupancyBitfield bits = rebuild_bitfield(grid, threshold);
    const GridGeometry& g = grid.geometry();
    const Vec3 c = (g.lo() + g.hi()) * 0.5;
    apply_edit(grid, bits, {EditMode::Erase, c, length(g.hi() - g.lo()), false}, threshold);
    for (const EditCommand& cmd : scene.target_reveals) apply_edit(grid, bits, cmd, threshold);
    return bits;
}

/// The trajectory the benchmark replays: an orbit around the central target.
inline Trajectory benchmark_trajectory(const BenchmarkScene& scene, std::size_t frames = 1) {
    return orbit_trajectory(scene.focus, 0.28, 0.17, frames);
}

/// Lens box for the benchmark: half a hall deep, wide enough for a 60 degree view.
inline ReplayConfig benchmark_replay_config() {
    ReplayConfig rc;
    rc.lens.plane_w = 1.2;
    rc.lens.far_len = 0.5;
    rc.near = 0.02;
    rc.far = 10.0;
    return rc;
}

}  // namespace magiclens
