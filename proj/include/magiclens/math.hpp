#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>

namespace magiclens {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
constexpr Vec3 hadamard(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
inline double length(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalize(const Vec3& v) { return v / length(v); }
constexpr Vec3 min(const Vec3& a, const Vec3& b) { return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)}; }
constexpr Vec3 max(const Vec3& a, const Vec3& b) { return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)}; }

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Unit quaternion stored as (x, y, z, w). Rotations follow the right-hand rule.
struct Quat {
    double x = 0, y = 0, z = 0, w = 1;

    static Quat identity() { return {}; }
    static Quat from_axis_angle(const Vec3& axis, double radians) {
        const Vec3 a = normalize(axis);
        const double s = std::sin(radians / 2);
        return {a.x * s, a.y * s, a.z * s, std::cos(radians / 2)};
    }

    double norm() const { return std::sqrt(x * x + y * y + z * z + w * w); }
    Quat normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n, w / n};
    }
    Quat conjugate() const { return {-x, -y, -z, w}; }
    bool is_normalized(double tol = 1e-6) const { return std::abs(norm() - 1.0) <= tol; }

    Quat operator*(const Quat& b) const {
        return {w * b.x + x * b.w + y * b.z - z * b.y,
                w * b.y - x * b.z + y * b.w + z * b.x,
                w * b.z + x * b.y - y * b.x + z * b.w,
                w * b.w - x * b.x - y * b.y - z * b.z};
    }
    bool operator==(const Quat&) const = default;

    Vec3 rotate(const Vec3& v) const {
        const Vec3 u{x, y, z};
        const Vec3 t = 2.0 * cross(u, v);
        return v + w * t + cross(u, t);
    }
    Vec3 inverse_rotate(const Vec3& v) const { return conjugate().rotate(v); }
};

using Mat4 = std::array<double, 16>;  // row-major

/// Translation, rotation, uniform scale. Applied as scale, then rotation, then translation.
struct Trs {
    Vec3 translation{};
    Quat rotation{};
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return translation + rotation.rotate(p * scale); }
    Vec3 apply_vector(const Vec3& v) const { return rotation.rotate(v * scale); }
    Vec3 inverse_apply(const Vec3& p) const { return rotation.inverse_rotate(p - translation) / scale; }
    Vec3 inverse_apply_vector(const Vec3& v) const { return rotation.inverse_rotate(v) / scale; }

    Mat4 matrix() const {
        const Vec3 ex = rotation.rotate({1, 0, 0}) * scale;
        const Vec3 ey = rotation.rotate({0, 1, 0}) * scale;
        const Vec3 ez = rotation.rotate({0, 0, 1}) * scale;
        return {ex.x, ey.x, ez.x, translation.x,
                ex.y, ey.y, ez.y, translation.y,
                ex.z, ey.z, ez.z, translation.z,
                0, 0, 0, 1};
    }
    bool operator==(const Trs&) const = default;
};

inline Vec3 transform_point(const Mat4& m, const Vec3& p) {
    return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
}

/// Parametric interval; empty when lo > hi.
struct Interval {
    double lo = 0, hi = 0;
    bool empty() const { return !(lo <= hi); }
    double length() const { return empty() ? 0.0 : hi - lo; }
    Interval intersect(const Interval& o) const { return {std::max(lo, o.lo), std::min(hi, o.hi)}; }
};

/// Slab test of the line o + t*d against [lo, hi]. Axis-parallel rays outside the slab
/// return an empty interval.
inline Interval slab_intersect(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
    Interval r{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) return {1, 0};
            continue;
        }
        const double inv = 1.0 / d[a];
        double t0 = (lo[a] - o[a]) * inv;
        double t1 = (hi[a] - o[a]) * inv;
        if (t0 > t1) std::swap(t0, t1);
        r.lo = std::max(r.lo, t0);
        r.hi = std::min(r.hi, t1);
    }
    return r;
}

inline double smoothstep(double e0, double e1, double x) {
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

}  // namespace magiclens
