#pragma once

#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "magiclens/bench.hpp"
#include "magiclens/binary_io.hpp"
#include "magiclens/edit.hpp"
#include "magiclens/error.hpp"
#include "magiclens/field.hpp"
#include "magiclens/fusion.hpp"
#include "magiclens/image.hpp"
#include "magiclens/raster.hpp"

namespace magiclens {

using json = nlohmann::json;

namespace schema {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
    throw FormatError(FormatError::Kind::Schema, path + ": " + what);
}

inline const json& field(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) fail(path, "expected object");
    auto it = j.find(key);
    if (it == j.end()) fail(path + "." + key, "missing");
    return *it;
}

inline const json* optional_field(const json& j, const std::string& key) {
    if (!j.is_object()) return nullptr;
    auto it = j.find(key);
    return it == j.end() || it->is_null() ? nullptr : &*it;
}

inline double number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(path, "expected finite number");
    return d;
}

inline double number(const json& j, const std::string& key, const std::string& path) {
    return number(field(j, key, path), path + "." + key);
}

inline double number_or(const json& j, const std::string& key, const std::string& path, double fallback) {
    const json* v = optional_field(j, key);
    return v ? number(*v, path + "." + key) : fallback;
}

inline std::uint64_t unsigned_int(const json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        fail(path, "expected non-negative integer");
    return v.get<std::uint64_t>();
}

inline bool boolean_or(const json& j, const std::string& key, const std::string& path, bool fallback) {
    const json* v = optional_field(j, key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(path + "." + key, "expected boolean");
    return v->get<bool>();
}

inline std::string string(const json& j, const std::string& key, const std::string& path) {
    const json& v = field(j, key, path);
    if (!v.is_string()) fail(path + "." + key, "expected string");
    return v.get<std::string>();
}

inline std::vector<double> numbers(const json& v, std::size_t n, const std::string& path) {
    if (!v.is_array() || v.size() != n) fail(path, "expected array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline Vec3 vec3(const json& v, const std::string& path) {
    const auto a = numbers(v, 3, path);
    return {a[0], a[1], a[2]};
}

inline Vec3 vec3(const json& j, const std::string& key, const std::string& path) {
    return vec3(field(j, key, path), path + "." + key);
}

/// Quaternion [x, y, z, w]; must already be normalized.
inline Quat quat(const json& v, const std::string& path) {
    const auto a = numbers(v, 4, path);
    const Quat q{a[0], a[1], a[2], a[3]};
    if (!q.is_normalized()) fail(path, "quaternion not normalized");
    return q;
}

}  // namespace schema

inline json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
inline json to_json(const Quat& q) { return json::array({q.x, q.y, q.z, q.w}); }

// ---------------------------------------------------------------------------
// Scene specs

inline SceneSpec parse_scene_spec(const json& j) {
    const std::string root = "$";
    SceneSpec s;
    const auto d = schema::numbers(schema::field(j, "dims", root), 3, "$.dims");
    for (int a = 0; a < 3; ++a)
        if (!(d[a] >= 1 && d[a] == std::floor(d[a]) && d[a] <= 4096)) schema::fail("$.dims", "expected integers in [1, 4096]");
    s.dims = {std::uint32_t(d[0]), std::uint32_t(d[1]), std::uint32_t(d[2])};
    if (const json* o = schema::optional_field(j, "origin")) s.origin = schema::vec3(*o, "$.origin");
    s.voxel_size = schema::number_or(j, "voxel_size", root, 1.0 / double(s.dims.h));
    if (!(s.voxel_size > 0)) schema::fail("$.voxel_size", "must be > 0");
    const json* prims = schema::optional_field(j, "primitives");
    if (prims && !prims->is_array()) schema::fail("$.primitives", "expected array");
    if (prims)
        for (std::size_t i = 0; i < prims->size(); ++i) {
            const json& p = (*prims)[i];
            const std::string path = "$.primitives[" + std::to_string(i) + "]";
            Primitive prim;
            if (const json* c = schema::optional_field(p, "color")) prim.color = schema::vec3(*c, path + ".color");
            prim.density = schema::number_or(p, "density", path, 1.0);
            if (!(prim.density >= 0)) schema::fail(path + ".density", "must be >= 0");
            const std::string type = schema::string(p, "type", path);
            if (type == "box") {
                prim.shape = BoxPrimitive{schema::vec3(p, "min", path), schema::vec3(p, "max", path)};
            } else if (type == "sphere") {
                const double r = schema::number(p, "radius", path);
                if (!(r > 0)) schema::fail(path + ".radius", "must be > 0");
                prim.shape = SpherePrimitive{schema::vec3(p, "center", path), r};
            } else if (type == "slab") {
                const json& ax = schema::field(p, "axis", path);
                int axis = -1;
                if (ax.is_string()) {
                    const std::string n = ax.get<std::string>();
                    axis = n == "x" ? 0 : n == "y" ? 1 : n == "z" ? 2 : -1;
                } else if (ax.is_number_integer()) {
                    axis = ax.get<int>();
                }
                if (axis < 0 || axis > 2) schema::fail(path + ".axis", "expected 0-2 or x/y/z");
                prim.shape = SlabPrimitive{axis, schema::number(p, "from", path), schema::number(p, "to", path)};
            } else if (type == "scatter") {
                ScatterPrimitive sc;
                sc.count = std::uint32_t(schema::unsigned_int(schema::field(p, "count", path), path + ".count"));
                sc.radius_min = schema::number_or(p, "radius_min", path, sc.radius_min);
                sc.radius_max = schema::number_or(p, "radius_max", path, sc.radius_max);
                if (!(sc.radius_min > 0 && sc.radius_max >= sc.radius_min))
                    schema::fail(path, "scatter radii must satisfy 0 < radius_min <= radius_max");
                if (const json* seed = schema::optional_field(p, "seed"))
                    sc.seed = schema::unsigned_int(*seed, path + ".seed");
                prim.shape = sc;
            } else {
                schema::fail(path + ".type", "unknown primitive '" + type + "'");
            }
            s.primitives.push_back(prim);
        }
    return s;
}

inline json scene_spec_to_json(const SceneSpec& s) {
    json prims = json::array();
    for (const Primitive& p : s.primitives) {
        json o = std::visit(
            [](const auto& sh) -> json {
                using T = std::decay_t<decltype(sh)>;
                if constexpr (std::is_same_v<T, BoxPrimitive>)
                    return {{"type", "box"}, {"min", to_json(sh.min)}, {"max", to_json(sh.max)}};
                else if constexpr (std::is_same_v<T, SpherePrimitive>)
                    return {{"type", "sphere"}, {"center", to_json(sh.center)}, {"radius", sh.radius}};
                else if constexpr (std::is_same_v<T, SlabPrimitive>)
                    return {{"type", "slab"}, {"axis", sh.axis}, {"from", sh.from}, {"to", sh.to}};
                else
                    return {{"type", "scatter"},       {"count", sh.count},          {"radius_min", sh.radius_min},
                            {"radius_max", sh.radius_max}, {"seed", sh.seed}};
            },
            p.shape);
        o["color"] = to_json(p.color);
        o["density"] = p.density;
        prims.push_back(o);
    }
    return {{"dims", {s.dims.h, s.dims.w, s.dims.l}},
            {"origin", to_json(s.origin)},
            {"voxel_size", s.voxel_size},
            {"primitives", prims}};
}

// ---------------------------------------------------------------------------
// Poses and trajectories

/// {"position":[3], "quat":[4], "near"?, "far"?}; "pos" is accepted for "position".
inline Camera parse_pose(const json& j, const std::string& path = "$") {
    Camera cam;
    const char* key = schema::optional_field(j, "position") ? "position" : "pos";
    cam.position = schema::vec3(j, key, path);
    cam.orientation = schema::quat(schema::field(j, "quat", path), path + ".quat");
    cam.near = schema::number_or(j, "near", path, cam.near);
    cam.far = schema::number_or(j, "far", path, cam.far);
    try {
        cam.validate();
    } catch (const ValidationError& e) {
        schema::fail(path, e.what());
    }
    return cam;
}

inline json pose_to_json(const Camera& cam) {
    return {{"position", to_json(cam.position)}, {"quat", to_json(cam.orientation)}, {"near", cam.near}, {"far", cam.far}};
}

/// {"samples":[{"t_ms", "position", "quat"}, ...]} or the bare array.
inline Trajectory parse_trajectory(const json& j) {
    const json& arr = j.is_array() ? j : schema::field(j, "samples", "$");
    const std::string base = j.is_array() ? "$" : "$.samples";
    if (!arr.is_array()) schema::fail(base, "expected array");
    Trajectory t;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = base + "[" + std::to_string(i) + "]";
        const json& s = arr[i];
        const char* key = schema::optional_field(s, "position") ? "position" : "pos";
        t.samples.push_back({schema::number(s, "t_ms", path), schema::vec3(s, key, path),
                             schema::quat(schema::field(s, "quat", path), path + ".quat")});
    }
    try {
        t.validate();
    } catch (const ValidationError& e) {
        schema::fail("$", e.what());
    }
    return t;
}

inline json trajectory_to_json(const Trajectory& t) {
    json arr = json::array();
    for (const PoseSample& s : t.samples)
        arr.push_back({{"t_ms", s.t_ms}, {"position", to_json(s.position)}, {"quat", to_json(s.orientation)}});
    return {{"samples", arr}};
}

// ---------------------------------------------------------------------------
// Fusion transform

inline constexpr double kMatrixTolerance = 1e-5;

inline FusionTransform parse_fusion_transform(const json& j) {
    FusionTransform t;
    t.trs.translation = schema::vec3(j, "translation", "$");
    t.trs.rotation = schema::quat(schema::field(j, "rotation_quat", "$"), "$.rotation_quat");
    t.trs.scale = schema::number(j, "scale", "$");
    try {
        t.validate();
    } catch (const ValidationError& e) {
        schema::fail("$", e.what());
    }
    if (const json* m = schema::optional_field(j, "matrix")) {
        const auto stored = schema::numbers(*m, 16, "$.matrix");
        const Mat4 composed = t.matrix();
        for (int i = 0; i < 16; ++i)
            if (std::abs(stored[i] - composed[i]) > kMatrixTolerance)
                schema::fail("$.matrix[" + std::to_string(i) + "]", "disagrees with the TRS decomposition");
    }
    return t;
}

inline json fusion_transform_to_json(const FusionTransform& t) {
    json m = json::array();
    for (double v : t.matrix()) m.push_back(v);
    return {{"translation", to_json(t.trs.translation)},
            {"rotation_quat", to_json(t.trs.rotation)},
            {"scale", t.trs.scale},
            {"matrix", m}};
}

// ---------------------------------------------------------------------------
// Edit logs (JSON lines)

inline EditCommand parse_edit_command(const json& j, const std::string& path = "$") {
    EditCommand c;
    const std::string mode = schema::string(j, "mode", path);
    if (mode == "erase")
        c.mode = EditMode::Erase;
    else if (mode == "reveal")
        c.mode = EditMode::Reveal;
    else
        schema::fail(path + ".mode", "expected 'erase' or 'reveal'");
    c.center = schema::vec3(j, "center", path);
    c.radius = schema::number(j, "radius", path);
    if (!(c.radius > 0)) schema::fail(path + ".radius", "must be > 0");
    c.hard = schema::boolean_or(j, "hard", path, false);
    c.t_ms = schema::number_or(j, "t_ms", path, 0.0);
    return c;
}

inline json edit_command_to_json(const EditCommand& c) {
    return {{"t_ms", c.t_ms},
            {"mode", c.mode == EditMode::Erase ? "erase" : "reveal"},
            {"center", to_json(c.center)},
            {"radius", c.radius},
            {"hard", c.hard}};
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// One command per line. An optional first line {"grid_hash":"<16 hex>"} binds the log to a grid.
inline EditLog parse_edit_log(const std::string& text) {
    EditLog log;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(n, "invalid JSON");
        }
        try {
            if (j.is_object() && j.contains("grid_hash")) {
                if (log.grid_hash || !log.commands.empty()) throw ParseError(n, "grid_hash must be the first line");
                const std::string hex = schema::string(j, "grid_hash", "$");
                std::size_t used = 0;
                log.grid_hash = std::stoull(hex, &used, 16);
                if (used != hex.size()) throw ParseError(n, "grid_hash is not hexadecimal");
                continue;
            }
            log.commands.push_back(parse_edit_command(j));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(n, e.what());
        }
    }
    return log;
}

inline std::string edit_log_to_jsonl(const EditLog& log) {
    std::string out;
    if (log.grid_hash) out += json{{"grid_hash", hash_hex(*log.grid_hash)}}.dump() + "\n";
    for (const EditCommand& c : log.commands) out += edit_command_to_json(c).dump() + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Frame and depth exports

inline std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

inline json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw FormatError(FormatError::Kind::CorruptPayload, path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

inline void write_png(const std::filesystem::path& path, const Framebuffer& fb) { write_file_atomic(path, encode_png(fb)); }

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".json";
    return p;
}

/// Row-major little-endian f32 depths plus `<path>.json` = {width, height, near, far, sentinel}.
inline void write_depth(const std::filesystem::path& path, const DepthMap& d) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(d.depth.size() * 4);
    for (float v : d.depth) le::put_f32(bytes, v);
    write_file_atomic(path, bytes);
    write_json(sidecar_path(path),
               {{"width", d.width}, {"height", d.height}, {"near", d.near}, {"far", d.far}, {"sentinel", d.sentinel}});
}

inline DepthMap read_depth(const std::filesystem::path& path) {
    const json side = read_json(sidecar_path(path));
    DepthMap d;
    d.width = std::uint32_t(schema::unsigned_int(schema::field(side, "width", "$"), "$.width"));
    d.height = std::uint32_t(schema::unsigned_int(schema::field(side, "height", "$"), "$.height"));
    d.near = float(schema::number(side, "near", "$"));
    d.far = float(schema::number(side, "far", "$"));
    const json& s = schema::field(side, "sentinel", "$");
    d.sentinel = s.is_number() ? s.get<float>() : kDepthSentinel;
    const auto bytes = read_file(path);
    if (bytes.size() != std::size_t(d.width) * d.height * 4)
        throw FormatError(FormatError::Kind::CorruptPayload, "depth payload size does not match sidecar dims");
    d.depth.resize(std::size_t(d.width) * d.height);
    for (std::size_t i = 0; i < d.depth.size(); ++i) d.depth[i] = le::get_f32(bytes.data() + 4 * i);
    return d;
}

/// Premultiplied RGBA f32 per pixel, row-major, little-endian.
inline std::vector<std::uint8_t> encode_frame_f32(const Framebuffer& fb) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(fb.pixels.size() * 16);
    for (const Rgba& p : fb.pixels) {
        le::put_f32(bytes, p.r);
        le::put_f32(bytes, p.g);
        le::put_f32(bytes, p.b);
        le::put_f32(bytes, p.a);
    }
    return bytes;
}

// ---------------------------------------------------------------------------
// Dispatch

using Artifact = std::variant<RadianceFieldGrid, OccupancyBitfield, SceneSpec, Trajectory, FusionTransform, EditLog, Mesh>;

/// Loads any known artifact. Magic bytes win over the extension; JSON documents are told
/// apart by their keys.
inline Artifact read_any(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() >= 4) {
        if (std::memcmp(bytes.data(), kGridMagic.data(), 4) == 0) return decode_grid(bytes);
        if (std::memcmp(bytes.data(), kMaskMagic.data(), 4) == 0) return decode_bitfield(bytes);
    }
    const std::string ext = path.extension().string();
    if (ext == ".mnlv" || ext == ".mnlb") {
        // extension promises a binary artifact but the magic disagrees
        throw FormatError(FormatError::Kind::BadMagic, path.string() + " does not start with MNLV or MNLB");
    }
    const std::string text(bytes.begin(), bytes.end());
    if (ext == ".jsonl") return parse_edit_log(text);
    if (ext == ".obj") return load_obj(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error&) {
        throw FormatError(FormatError::Kind::BadMagic, path.string() + " is not a recognized artifact");
    }
    if (j.is_array() || (j.is_object() && j.contains("samples"))) return parse_trajectory(j);
    if (j.is_object() && j.contains("rotation_quat")) return parse_fusion_transform(j);
    if (j.is_object() && j.contains("dims")) return parse_scene_spec(j);
    if (j.is_object() && j.contains("mode")) {
        EditLog log;
        log.commands.push_back(parse_edit_command(j));
        return log;
    }
    throw FormatError(FormatError::Kind::Schema, path.string() + ": unrecognized JSON document");
}

inline SceneSpec read_scene_spec(const std::filesystem::path& path) { return parse_scene_spec(read_json(path)); }
inline Trajectory read_trajectory(const std::filesystem::path& path) { return parse_trajectory(read_json(path)); }
inline Camera read_pose(const std::filesystem::path& path) { return parse_pose(read_json(path)); }
inline FusionTransform read_fusion_transform(const std::filesystem::path& path) {
    return parse_fusion_transform(read_json(path));
}
inline EditLog read_edit_log(const std::filesystem::path& path) { return parse_edit_log(read_text(path)); }

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& t) {
    write_json(path, trajectory_to_json(t));
}
inline void write_fusion_transform(const std::filesystem::path& path, const FusionTransform& t) {
    write_json(path, fusion_transform_to_json(t));
}
inline void write_edit_log(const std::filesystem::path& path, const EditLog& log) {
    write_file_atomic(path, edit_log_to_jsonl(log));
}
inline void write_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    write_file_atomic(path, sweep_csv(rows));
}

}  // namespace magiclens
