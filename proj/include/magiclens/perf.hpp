#pragma once

#include "magiclens/error.hpp"
#include "magiclens/raymarch.hpp"

namespace magiclens {

/// Analytic render cost: pixels x samples per ray x cost per field query.
/// `f_bar` is in nanoseconds per query once calibrated from a measured frame.
struct PerfModel {
    double f_bar = 1.0;
    double c_factor = 4.0;
    double n_per_ray = 32.0;
};

inline double predict_cost(const PerfModel& m, double r_h, double r_w) {
    if (r_h < 0 || r_w < 0) throw ValidationError("resolution must be >= 0");
    return r_h * r_w * m.n_per_ray * m.f_bar;
}

inline double predict_cost_hmd(const PerfModel& m, double fov_h, double fov_v, double ppd) {
    if (fov_h < 0 || fov_v < 0 || ppd < 0) throw ValidationError("fov and ppd must be >= 0");
    // fov_h * fov_v * ppd^2 * C, grouped as (2 fov_h ppd)(2 fov_v ppd)(C / 4) so C = 4 reproduces
    // predict_cost at R = 2 fov ppd bit for bit
    return (2.0 * fov_h * ppd) * (2.0 * fov_v * ppd) * (m.c_factor / 4.0) * m.n_per_ray * m.f_bar;
}

/// f_bar = wall time per field query (ns); n_per_ray = samples per pixel of the frame.
inline PerfModel calibrate(const FrameStats& s, double c_factor = 4.0) {
    if (s.samples_total == 0 || s.rays_total == 0) throw ValidationError("calibration frame has no samples");
    PerfModel m;
    m.c_factor = c_factor;
    m.f_bar = s.wall_time_ms * 1e6 / double(s.samples_total);
    m.n_per_ray = double(s.samples_total) / double(s.rays_total);
    return m;
}

/// Predicted wall time (ms) for a square frame of `side` pixels with a calibrated model.
inline double predict_ms(const PerfModel& m, double side) { return predict_cost(m, side, side) * 1e-6; }

}  // namespace magiclens
