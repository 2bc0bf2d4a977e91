#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "magiclens/error.hpp"
#include "magiclens/math.hpp"

namespace magiclens {

using Rgb = Vec3;

/// Emission color and volume density at one point of the radiance field.
struct FieldSample {
    Rgb color{};
    double density = 0.0;
};

/// Voxel counts along x (h), y (w) and z (l).
struct Dims {
    std::uint32_t h = 0, w = 0, l = 0;

    std::size_t count() const { return std::size_t(h) * w * l; }
    std::uint32_t operator[](int a) const { return a == 0 ? h : (a == 1 ? w : l); }
    bool operator==(const Dims&) const = default;
    std::string str() const { return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(l); }
};

/// Placement of a voxel lattice: voxel (i,j,k) covers origin + [i,i+1)*voxel_size on each axis.
struct GridGeometry {
    Dims dims;
    Vec3 origin{};
    double voxel_size = 1.0;

    std::size_t index(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return (std::size_t(i) * dims.w + j) * dims.l + k;
    }
    Vec3 center(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
        return origin + Vec3{i + 0.5, j + 0.5, k + 0.5} * voxel_size;
    }
    Vec3 lo() const { return origin; }
    Vec3 hi() const { return origin + Vec3{double(dims.h), double(dims.w), double(dims.l)} * voxel_size; }
    bool contains(const Vec3& p) const {
        const Vec3 a = lo(), b = hi();
        return p.x >= a.x && p.y >= a.y && p.z >= a.z && p.x <= b.x && p.y <= b.y && p.z <= b.z;
    }
};

/// Dense voxel realization of the radiance field, z-fastest storage.
class RadianceFieldGrid {
public:
    struct Voxel {
        float r = 0, g = 0, b = 0, sigma = 0;
        bool operator==(const Voxel&) const = default;
    };

    RadianceFieldGrid() = default;
    RadianceFieldGrid(Dims dims, Vec3 origin, double voxel_size) : geo_{dims, origin, voxel_size} {
        if (dims.h == 0 || dims.w == 0 || dims.l == 0)
            throw ValidationError("grid dims must be >= 1, got " + dims.str());
        if (!(voxel_size > 0.0)) throw ValidationError("voxel_size must be > 0");
        voxels_.resize(dims.count());
    }

    const GridGeometry& geometry() const { return geo_; }
    const Dims& dims() const { return geo_.dims; }
    std::size_t size() const { return voxels_.size(); }

    Voxel& at(std::size_t idx) { return voxels_[idx]; }
    const Voxel& at(std::size_t idx) const { return voxels_[idx]; }
    Voxel& at(std::uint32_t i, std::uint32_t j, std::uint32_t k) { return voxels_[geo_.index(i, j, k)]; }
    const Voxel& at(std::uint32_t i, std::uint32_t j, std::uint32_t k) const { return voxels_[geo_.index(i, j, k)]; }

    std::vector<Voxel>& voxels() { return voxels_; }
    const std::vector<Voxel>& voxels() const { return voxels_; }

    bool operator==(const RadianceFieldGrid& o) const {
        return geo_.dims == o.geo_.dims && geo_.origin == o.geo_.origin && geo_.voxel_size == o.geo_.voxel_size &&
               voxels_ == o.voxels_;
    }

    /// FNV-1a over dims, placement and voxel payload. Stable across hosts.
    std::uint64_t content_hash() const {
        std::uint64_t hsh = 0xcbf29ce484222325ull;
        auto mix = [&](std::uint32_t v) {
            for (int b = 0; b < 4; ++b) {
                hsh ^= (v >> (8 * b)) & 0xffu;
                hsh *= 0x100000001b3ull;
            }
        };
        mix(geo_.dims.h), mix(geo_.dims.w), mix(geo_.dims.l);
        for (int a = 0; a < 3; ++a) mix(std::bit_cast<std::uint32_t>(float(geo_.origin[a])));
        mix(std::bit_cast<std::uint32_t>(float(geo_.voxel_size)));
        for (const Voxel& v : voxels_) {
            mix(std::bit_cast<std::uint32_t>(v.r));
            mix(std::bit_cast<std::uint32_t>(v.g));
            mix(std::bit_cast<std::uint32_t>(v.b));
            mix(std::bit_cast<std::uint32_t>(v.sigma));
        }
        return hsh;
    }

private:
    GridGeometry geo_;
    std::vector<Voxel> voxels_;
};

/// One bit per voxel, LSB-first within each byte; a set bit marks a render-eligible voxel.
class OccupancyBitfield {
public:
    OccupancyBitfield() = default;
    explicit OccupancyBitfield(Dims dims, bool value = false)
        : dims_(dims), bytes_((dims.count() + 7) / 8, value ? 0xff : 0x00) {
        if (value) trim_tail();
    }

    const Dims& dims() const { return dims_; }
    std::size_t size() const { return dims_.count(); }

    bool get(std::size_t idx) const { return (bytes_[idx >> 3] >> (idx & 7)) & 1u; }
    void set(std::size_t idx, bool v) {
        const auto mask = std::uint8_t(1u << (idx & 7));
        if (v)
            bytes_[idx >> 3] |= mask;
        else
            bytes_[idx >> 3] &= std::uint8_t(~mask);
    }

    std::size_t popcount() const {
        std::size_t n = 0;
        for (std::uint8_t b : bytes_) n += std::size_t(std::popcount(b));
        return n;
    }

    OccupancyBitfield& operator&=(const OccupancyBitfield& o) {
        if (!(dims_ == o.dims_)) throw ValidationError("bitfield shape mismatch: " + dims_.str() + " vs " + o.dims_.str());
        for (std::size_t i = 0; i < bytes_.size(); ++i) bytes_[i] &= o.bytes_[i];
        return *this;
    }

    std::vector<std::uint8_t>& bytes() { return bytes_; }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

    bool operator==(const OccupancyBitfield&) const = default;

private:
    void trim_tail() {
        const std::size_t rem = dims_.count() & 7;
        if (rem != 0 && !bytes_.empty()) bytes_.back() = std::uint8_t((1u << rem) - 1u);
    }

    Dims dims_;
    std::vector<std::uint8_t> bytes_;
};

/// Axis-aligned box in model space carried into world space by `model_transform`.
struct CropBox {
    Vec3 min{}, max{1, 1, 1};
    Trs model_transform{};

    void validate() const {
        if (!(min.x < max.x && min.y < max.y && min.z < max.z)) throw ValidationError("crop box requires min < max");
        if (!model_transform.rotation.is_normalized()) throw ValidationError("crop box rotation must be a unit quaternion");
        if (!(model_transform.scale > 0.0)) throw ValidationError("crop box scale must be > 0");
    }

    /// World-space ray parameter interval inside the box (world units, unit `dir`).
    Interval clip(const Vec3& origin, const Vec3& dir) const {
        const Vec3 o = model_transform.inverse_apply(origin);
        const Vec3 d = model_transform.inverse_apply_vector(dir);
        return slab_intersect(o, d, min, max);
    }
};

inline Vec3 apply_model_transform(const CropBox& box, const Vec3& p) { return box.model_transform.apply(p); }

inline constexpr double kDefaultDensityThreshold = 0.01;

/// Plain trilinear interpolation between voxel centers. Points outside the grid AABB are
/// empty; between the AABB faces and the outermost centers the edge voxel is held constant.
/// The view direction is accepted for interface parity and ignored.
inline FieldSample sample_field(const RadianceFieldGrid& grid, const Vec3& p, const Vec3& /*dir*/ = {}) {
    const GridGeometry& g = grid.geometry();
    if (!g.contains(p)) return {};
    int base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double u = (p[a] - g.origin[a]) / g.voxel_size - 0.5;
        const double f = std::floor(u);
        base[a] = int(f);
        frac[a] = u - f;
    }
    FieldSample out;
    for (int c = 0; c < 8; ++c) {
        double w = 1.0;
        std::uint32_t idx[3];
        for (int a = 0; a < 3; ++a) {
            const int bit = (c >> a) & 1;
            w *= bit ? frac[a] : 1.0 - frac[a];
            idx[a] = std::uint32_t(std::clamp(base[a] + bit, 0, int(g.dims[a]) - 1));
        }
        if (w == 0.0) continue;
        const auto& v = grid.at(idx[0], idx[1], idx[2]);
        out.color += Rgb{v.r, v.g, v.b} * w;
        out.density += w * v.sigma;
    }
    return out;
}

/// bit[v] = density[v] >= threshold.
inline OccupancyBitfield rebuild_bitfield(const RadianceFieldGrid& grid, double threshold = kDefaultDensityThreshold) {
    if (!(threshold >= 0.0)) throw ValidationError("density threshold must be >= 0");
    OccupancyBitfield bits(grid.dims());
    const auto& vox = grid.voxels();
    for (std::size_t i = 0; i < vox.size(); ++i)
        if (double(vox[i].sigma) >= threshold) bits.set(i, true);
    return bits;
}

/// 3x3x3 dilation. A voxel is set when any voxel of its 27-neighborhood is set in `src`.
inline OccupancyBitfield dilate(const OccupancyBitfield& src) {
    const Dims d = src.dims();
    std::vector<std::uint8_t> a(d.count()), b(d.count());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = src.get(i);
    const std::size_t stride[3] = {std::size_t(d.w) * d.l, d.l, 1};
    for (int axis = 0; axis < 3; ++axis) {
        const std::size_t s = stride[axis];
        const std::uint32_t n = d[axis];
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::uint32_t c = std::uint32_t((i / s) % n);
            std::uint8_t v = a[i];
            if (c > 0) v |= a[i - s];
            if (c + 1 < n) v |= a[i + s];
            b[i] = v;
        }
        std::swap(a, b);
    }
    OccupancyBitfield out(d);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i]) out.set(i, true);
    return out;
}

// ---------------------------------------------------------------------------
// Procedural scenes

struct BoxPrimitive {
    Vec3 min{}, max{};
};
struct SpherePrimitive {
    Vec3 center{};
    double radius = 0;
};
/// Homogeneous layer between two planes orthogonal to `axis`.
struct SlabPrimitive {
    int axis = 2;
    double from = 0, to = 0;
};
/// `count` spheres with random centers/radii/colors drawn from `seed`.
struct ScatterPrimitive {
    std::uint32_t count = 0;
    double radius_min = 0.02, radius_max = 0.08;
    std::uint64_t seed = 0;
};

struct Primitive {
    std::variant<BoxPrimitive, SpherePrimitive, SlabPrimitive, ScatterPrimitive> shape;
    Rgb color{1, 1, 1};
    double density = 1.0;
};

struct SceneSpec {
    Dims dims{32, 32, 32};
    Vec3 origin{};
    double voxel_size = 1.0 / 32;
    std::vector<Primitive> primitives;
};

namespace detail {

/// Uniform double in [0,1) from the standard-defined mt19937_64 sequence.
inline double unit_double(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline std::vector<Primitive> expand_scatter(const Primitive& p, const ScatterPrimitive& s, const SceneSpec& spec) {
    std::mt19937_64 rng(s.seed);
    const Vec3 lo = spec.origin;
    const Vec3 ext = Vec3{double(spec.dims.h), double(spec.dims.w), double(spec.dims.l)} * spec.voxel_size;
    std::vector<Primitive> out;
    out.reserve(s.count);
    for (std::uint32_t i = 0; i < s.count; ++i) {
        SpherePrimitive sp;
        sp.center = lo + Vec3{unit_double(rng) * ext.x, unit_double(rng) * ext.y, unit_double(rng) * ext.z};
        sp.radius = s.radius_min + unit_double(rng) * (s.radius_max - s.radius_min);
        Primitive q;
        q.shape = sp;
        q.color = {unit_double(rng), unit_double(rng), unit_double(rng)};
        q.density = p.density;
        out.push_back(q);
    }
    return out;
}

inline bool inside(const Primitive& prim, const Vec3& c) {
    return std::visit(
        [&](const auto& s) -> bool {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, BoxPrimitive>) {
                return c.x >= s.min.x && c.y >= s.min.y && c.z >= s.min.z && c.x <= s.max.x && c.y <= s.max.y &&
                       c.z <= s.max.z;
            } else if constexpr (std::is_same_v<T, SpherePrimitive>) {
                const Vec3 d = c - s.center;
                return dot(d, d) <= s.radius * s.radius;
            } else if constexpr (std::is_same_v<T, SlabPrimitive>) {
                return c[s.axis] >= s.from && c[s.axis] <= s.to;
            } else {
                return false;
            }
        },
        prim.shape);
}

/// Half-open voxel index range whose centers may fall inside the primitive.
inline std::pair<std::array<std::uint32_t, 3>, std::array<std::uint32_t, 3>> index_bounds(const Primitive& prim,
                                                                                           const GridGeometry& g) {
    Vec3 lo = g.lo(), hi = g.hi();
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, BoxPrimitive>) {
                lo = s.min, hi = s.max;
            } else if constexpr (std::is_same_v<T, SpherePrimitive>) {
                lo = s.center - Vec3{s.radius, s.radius, s.radius};
                hi = s.center + Vec3{s.radius, s.radius, s.radius};
            } else if constexpr (std::is_same_v<T, SlabPrimitive>) {
                lo[s.axis] = s.from, hi[s.axis] = s.to;
            }
        },
        prim.shape);
    std::array<std::uint32_t, 3> a{}, b{};
    for (int ax = 0; ax < 3; ++ax) {
        // center(i) = origin + (i + 0.5) * vs; widen by one voxel to stay conservative
        const double first = std::floor((lo[ax] - g.origin[ax]) / g.voxel_size - 0.5) - 1;
        const double last = std::ceil((hi[ax] - g.origin[ax]) / g.voxel_size - 0.5) + 2;
        a[ax] = std::uint32_t(std::clamp(first, 0.0, double(g.dims[ax])));
        b[ax] = std::uint32_t(std::clamp(last, 0.0, double(g.dims[ax])));
    }
    return {a, b};
}

/// Strict weak "wins" order: higher density first, ties broken by the larger color.
inline bool dominates(double da, const Rgb& ca, double db, const Rgb& cb) {
    if (da != db) return da > db;
    if (ca.x != cb.x) return ca.x > cb.x;
    if (ca.y != cb.y) return ca.y > cb.y;
    return ca.z > cb.z;
}

}  // namespace detail

/// Voxelizes the scene by testing voxel centers. Overlaps keep the maximum density and the
/// color of that contributor, so primitive order never matters.
inline RadianceFieldGrid make_procedural_grid(const SceneSpec& spec) {
    RadianceFieldGrid grid(spec.dims, spec.origin, spec.voxel_size);
    std::vector<Primitive> prims;
    for (const Primitive& p : spec.primitives) {
        if (p.density < 0.0) throw ValidationError("primitive density must be >= 0");
        if (const auto* s = std::get_if<ScatterPrimitive>(&p.shape)) {
            auto more = detail::expand_scatter(p, *s, spec);
            prims.insert(prims.end(), more.begin(), more.end());
        } else {
            prims.push_back(p);
        }
    }
    const GridGeometry& g = grid.geometry();
    std::vector<double> best_density(grid.size(), 0.0);
    std::vector<Rgb> best_color(grid.size());
    std::vector<std::uint8_t> touched(grid.size(), 0);
    for (const Primitive& p : prims) {
        const auto [lo, hi] = detail::index_bounds(p, g);
        for (std::uint32_t i = lo[0]; i < hi[0]; ++i)
            for (std::uint32_t j = lo[1]; j < hi[1]; ++j)
                for (std::uint32_t k = lo[2]; k < hi[2]; ++k) {
                    if (!detail::inside(p, g.center(i, j, k))) continue;
                    const std::size_t idx = g.index(i, j, k);
                    if (!touched[idx] || detail::dominates(p.density, p.color, best_density[idx], best_color[idx])) {
                        touched[idx] = 1;
                        best_density[idx] = p.density;
                        best_color[idx] = p.color;
                    }
                }
    }
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
        if (!touched[idx]) continue;
        auto& v = grid.at(idx);
        v.r = float(best_color[idx].x);
        v.g = float(best_color[idx].y);
        v.b = float(best_color[idx].z);
        v.sigma = float(best_density[idx]);
    }
    return grid;
}

}  // namespace magiclens
