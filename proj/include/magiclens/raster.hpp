#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "magiclens/error.hpp"
#include "magiclens/image.hpp"
#include "magiclens/lens.hpp"
#include "magiclens/parallel.hpp"

namespace magiclens {

struct MeshEdge {
    std::uint32_t a = 0, b = 0;
    Rgb color{1, 1, 1};
};

struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<Rgb> face_colors;
    std::vector<MeshEdge> edges;  // explicit wireframe; derived from feature edges when empty

    bool empty() const { return triangles.empty() && edges.empty(); }

    void validate() const {
        if (face_colors.size() != triangles.size()) throw ValidationError("mesh needs one color per triangle");
        for (const auto& t : triangles)
            for (std::uint32_t i : t)
                if (i >= vertices.size()) throw ValidationError("mesh triangle index out of range");
        for (const auto& e : edges)
            if (e.a >= vertices.size() || e.b >= vertices.size()) throw ValidationError("mesh edge index out of range");
    }
};

enum class RasterStyle { Solid, Wireframe };

struct RasterOutput {
    Framebuffer color;  // transparent where nothing was drawn
    DepthMap depth;     // distance along the pixel ray, kDepthSentinel where empty
};

inline constexpr double kFeatureAngleDeg = 15.0;
inline constexpr double kDegenerateArea = 1e-12;

/// Edges bounding fewer or more than two faces, or two faces meeting at more than 15 degrees.
/// Degenerate triangles are ignored. Edge color is the smallest adjacent face color.
inline std::vector<MeshEdge> feature_edges(const Mesh& mesh) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::size_t>> adj;
    std::vector<Vec3> normals(mesh.triangles.size());
    for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
        const auto& t = mesh.triangles[f];
        const Vec3 n = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]], mesh.vertices[t[2]] - mesh.vertices[t[0]]);
        if (0.5 * length(n) <= kDegenerateArea) continue;
        normals[f] = normalize(n);
        for (int e = 0; e < 3; ++e) {
            std::uint32_t a = t[e], b = t[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            adj[{a, b}].push_back(f);
        }
    }
    auto less = [](const Rgb& p, const Rgb& q) {
        if (p.x != q.x) return p.x < q.x;
        if (p.y != q.y) return p.y < q.y;
        return p.z < q.z;
    };
    const double cos_thresh = std::cos(deg_to_rad(kFeatureAngleDeg));
    std::vector<MeshEdge> out;
    for (const auto& [key, faces] : adj) {
        bool feature = faces.size() != 2;
        if (!feature) feature = dot(normals[faces[0]], normals[faces[1]]) < cos_thresh;
        if (!feature) continue;
        Rgb c = mesh.face_colors[faces[0]];
        for (std::size_t f : faces)
            if (less(mesh.face_colors[f], c)) c = mesh.face_colors[f];
        out.push_back({key.first, key.second, c});
    }
    return out;
}

namespace detail {

/// Depth-test predicate: nearer wins, equal depth goes to the lexicographically smaller color
/// so the result does not depend on submission order.
inline bool closer(float d, const Rgba& c, float cur_d, const Rgba& cur) {
    if (d != cur_d) return d < cur_d;
    if (c.r != cur.r) return c.r < cur.r;
    if (c.g != cur.g) return c.g < cur.g;
    return c.b < cur.b;
}

struct ScreenVertex {
    double px, py, inv_z;
};

struct ScreenTriangle {
    std::array<ScreenVertex, 3> v;
    Rgba color;
};

/// Sutherland-Hodgman against the plane z = near (camera frame).
inline std::vector<Vec3> clip_near(const std::vector<Vec3>& poly, double near) {
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec3& a = poly[i];
        const Vec3& b = poly[(i + 1) % poly.size()];
        const bool ia = a.z >= near, ib = b.z >= near;
        if (ia) out.push_back(a);
        if (ia != ib) out.push_back(a + (b - a) * ((near - a.z) / (b.z - a.z)));
    }
    return out;
}

}  // namespace detail

/// Renders the mesh from `cam` with the same pinhole intrinsics the lens rays use.
inline RasterOutput rasterize(const Mesh& mesh, const Camera& cam, const Intrinsics& in, RasterStyle style,
                              unsigned threads = 0) {
    if (in.side == 0) throw ValidationError("raster resolution must be >= 1");
    cam.validate();
    mesh.validate();
    RasterOutput out;
    out.color = Framebuffer(in.side, in.side);
    out.color.view = {cam, in};
    out.depth = DepthMap(in.side, in.side, kDepthSentinel);
    out.depth.near = float(cam.near);
    out.depth.far = float(cam.far);
    const std::uint32_t n = in.side;
    auto to_cam = [&](const Vec3& p) { return cam.orientation.inverse_rotate(p - cam.position); };
    auto ray_len = [&](std::uint32_t x, std::uint32_t y) { return length(in.pixel_dir(x, y)); };

    if (style == RasterStyle::Solid) {
        const Vec3 fwd = cam.forward();
        std::vector<detail::ScreenTriangle> tris;
        for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
            const auto& t = mesh.triangles[f];
            const Vec3 nrm = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]], mesh.vertices[t[2]] - mesh.vertices[t[0]]);
            if (length(nrm) == 0.0) continue;
            const double shade = 0.25 + 0.75 * std::abs(dot(normalize(nrm), fwd));
            const Rgb c = mesh.face_colors[f] * shade;
            const auto poly = detail::clip_near({to_cam(mesh.vertices[t[0]]), to_cam(mesh.vertices[t[1]]),
                                                 to_cam(mesh.vertices[t[2]])},
                                                cam.near);
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                detail::ScreenTriangle st;
                const Vec3* corners[3] = {&poly[0], &poly[k], &poly[k + 1]};
                for (int v = 0; v < 3; ++v) {
                    const auto [px, py] = in.project(*corners[v]);
                    st.v[v] = {px, py, 1.0 / corners[v]->z};
                }
                st.color = {float(c.x), float(c.y), float(c.z), 1.0f};
                tris.push_back(st);
            }
        }
        parallel_bands(n, threads, [&](std::size_t y0, std::size_t y1, unsigned) {
            for (const auto& st : tris) {
                const auto& [a, b, c] = st.v;
                const double area = (b.px - a.px) * (c.py - a.py) - (b.py - a.py) * (c.px - a.px);
                if (area == 0.0) continue;
                const double min_x = std::min({a.px, b.px, c.px}), max_x = std::max({a.px, b.px, c.px});
                const double min_y = std::min({a.py, b.py, c.py}), max_y = std::max({a.py, b.py, c.py});
                const auto x_lo = std::uint32_t(std::clamp(std::floor(min_x - 0.5), 0.0, double(n)));
                const auto x_hi = std::uint32_t(std::clamp(std::ceil(max_x + 0.5), 0.0, double(n)));
                const auto y_lo = std::max<std::size_t>(y0, std::size_t(std::clamp(std::floor(min_y - 0.5), 0.0, double(n))));
                const auto y_hi = std::min<std::size_t>(y1, std::size_t(std::clamp(std::ceil(max_y + 0.5), 0.0, double(n))));
                for (std::size_t y = y_lo; y < y_hi; ++y)
                    for (std::uint32_t x = x_lo; x < x_hi; ++x) {
                        const double sx = x + 0.5, sy = double(y) + 0.5;
                        double w0 = (b.px - sx) * (c.py - sy) - (b.py - sy) * (c.px - sx);
                        double w1 = (c.px - sx) * (a.py - sy) - (c.py - sy) * (a.px - sx);
                        double w2 = (a.px - sx) * (b.py - sy) - (a.py - sy) * (b.px - sx);
                        w0 /= area, w1 /= area, w2 /= area;
                        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                        const double inv_z = w0 * a.inv_z + w1 * b.inv_z + w2 * c.inv_z;
                        const float d = float(ray_len(x, std::uint32_t(y)) / inv_z);
                        float& cur_d = out.depth.at(x, std::uint32_t(y));
                        Rgba& cur = out.color.at(x, std::uint32_t(y));
                        if (detail::closer(d, st.color, cur_d, cur)) {
                            cur_d = d;
                            cur = st.color;
                        }
                    }
            }
        });
        return out;
    }

    const std::vector<MeshEdge> edges = mesh.edges.empty() ? feature_edges(mesh) : mesh.edges;
    for (const MeshEdge& e : edges) {
        auto seg = detail::clip_near({to_cam(mesh.vertices[e.a]), to_cam(mesh.vertices[e.b])}, cam.near);
        if (seg.size() < 2) continue;
        const auto [ax, ay] = in.project(seg[0]);
        const auto [bx, by] = in.project(seg[1]);
        const double iza = 1.0 / seg[0].z, izb = 1.0 / seg[1].z;
        const Rgba color{float(e.color.x), float(e.color.y), float(e.color.z), 1.0f};
        // Bresenham over the pixel grid; coordinates may start off-screen.
        long x0 = long(std::floor(ax)), y0 = long(std::floor(ay));
        const long x1 = long(std::floor(bx)), y1 = long(std::floor(by));
        const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
        const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        const long steps = std::max(dx, -dy);
        long err = dx + dy, k = 0;
        while (true) {
            if (x0 >= 0 && y0 >= 0 && x0 < long(n) && y0 < long(n)) {
                const double s = steps == 0 ? 0.0 : double(k) / double(steps);
                const double inv_z = iza + (izb - iza) * s;
                const auto x = std::uint32_t(x0), y = std::uint32_t(y0);
                const float d = float(ray_len(x, y) / inv_z);
                if (detail::closer(d, color, out.depth.at(x, y), out.color.at(x, y))) {
                    out.depth.at(x, y) = d;
                    out.color.at(x, y) = color;
                }
            }
            if (x0 == x1 && y0 == y1) break;
            const long e2 = 2 * err;
            if (e2 >= dy) err += dy, x0 += sx;
            if (e2 <= dx) err += dx, y0 += sy;
            ++k;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// OBJ

inline constexpr Rgb kDefaultMeshColor{0.7, 0.7, 0.7};

/// Reads `v` and `f` records (polygons become fans; `v/vt/vn` and negative indices accepted).
/// Colors come from an optional sidecar `<stem>.json` of the form
/// {"default": [r,g,b], "objects": {"name": [r,g,b]}} keyed by `o`/`g` names.
inline Mesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());

    Rgb default_color = kDefaultMeshColor;
    std::map<std::string, Rgb> object_colors;
    std::filesystem::path sidecar = path;
    sidecar.replace_extension(".json");
    if (std::filesystem::exists(sidecar)) {
        std::ifstream js(sidecar);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(js);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(FormatError::Kind::Schema, sidecar.string() + ": " + e.what());
        }
        auto rgb = [](const nlohmann::json& a) { return Rgb{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()}; };
        if (j.contains("default")) default_color = rgb(j["default"]);
        if (j.contains("objects"))
            for (const auto& [k, v] : j["objects"].items()) object_colors[k] = rgb(v);
    }

    Mesh mesh;
    Rgb current = default_color;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p.x >> p.y >> p.z)) throw ParseError(lineno, "vertex needs three coordinates");
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<std::uint32_t> idx;
            std::string tok;
            while (ss >> tok) {
                const std::string head = tok.substr(0, tok.find('/'));
                long v = 0;
                const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
                if (ec != std::errc() || ptr != head.data() + head.size())
                    throw ParseError(lineno, "malformed face index '" + tok + "'");
                const long count = long(mesh.vertices.size());
                const long resolved = v < 0 ? count + v : v - 1;
                if (v == 0 || resolved < 0 || resolved >= count)
                    throw ParseError(lineno, "face index " + head + " out of range (" + std::to_string(count) + " vertices)");
                idx.push_back(std::uint32_t(resolved));
            }
            if (idx.size() < 3) throw ParseError(lineno, "face needs at least three vertices");
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
                mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
                mesh.face_colors.push_back(current);
            }
        } else if (tag == "o" || tag == "g") {
            std::string name;
            ss >> name;
            const auto it = object_colors.find(name);
            current = it != object_colors.end() ? it->second : default_color;
        }
    }
    return mesh;
}

}  // namespace magiclens
