#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "magiclens/edit.hpp"
#include "magiclens/formats.hpp"
#include "magiclens/fusion.hpp"
#include "magiclens/raster.hpp"
#include "magiclens/raymarch.hpp"

namespace magiclens {

// ---------------------------------------------------------------------------
// Frame packets

inline constexpr std::array<char, 4> kFrameMagic{'M', 'N', 'L', 'F'};
inline constexpr std::size_t kFrameHeaderSize = 18;
inline constexpr std::uint8_t kFrameFormatRgba8Png = 0;

struct FrameHeader {
    std::uint16_t width = 0, height = 0;
    std::uint8_t format = kFrameFormatRgba8Png;
    std::uint8_t flags = 0;
    std::uint32_t frame_id = 0;
    std::uint32_t payload_len = 0;
};

/// magic, u16 width, u16 height, u8 format, u8 flags, u32 frame_id, u32 payload_len; little-endian.
inline std::vector<std::uint8_t> encode_frame_packet(const FrameHeader& h, std::span<const std::uint8_t> payload) {
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderSize + payload.size());
    out.insert(out.end(), kFrameMagic.begin(), kFrameMagic.end());
    le::put_u16(out, h.width);
    le::put_u16(out, h.height);
    out.push_back(h.format);
    out.push_back(h.flags);
    le::put_u32(out, h.frame_id);
    le::put_u32(out, std::uint32_t(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline FrameHeader decode_frame_header(std::span<const std::uint8_t> b) {
    if (b.size() < 4 || std::memcmp(b.data(), kFrameMagic.data(), 4) != 0)
        throw FormatError(FormatError::Kind::BadMagic, "expected MNLF frame");
    if (b.size() < kFrameHeaderSize) throw FormatError(FormatError::Kind::CorruptPayload, "truncated frame header");
    FrameHeader h;
    h.width = le::get_u16(b.data() + 4);
    h.height = le::get_u16(b.data() + 6);
    h.format = b[8];
    h.flags = b[9];
    h.frame_id = le::get_u32(b.data() + 10);
    h.payload_len = le::get_u32(b.data() + 14);
    if (b.size() != kFrameHeaderSize + h.payload_len)
        throw FormatError(FormatError::Kind::CorruptPayload, "frame payload length does not match header");
    return h;
}

// ---------------------------------------------------------------------------
// Backpressure

/// Tracks frames sent but not yet acknowledged by the client.
class FrameScheduler {
public:
    explicit FrameScheduler(std::size_t max_in_flight = 2) : max_(max_in_flight) {}

    bool can_send() const { return in_flight_.size() < max_; }
    void on_sent(std::uint32_t id) { in_flight_.insert(id); }
    /// Acknowledging a frame also retires every older one.
    void on_ack(std::uint32_t id) { in_flight_.erase(in_flight_.begin(), in_flight_.upper_bound(id)); }
    std::size_t in_flight() const { return in_flight_.size(); }
    void reset() { in_flight_.clear(); }

private:
    std::size_t max_;
    std::set<std::uint32_t> in_flight_;
};

// ---------------------------------------------------------------------------
// Session

enum class FuseMode { Tunnel, Merge, Occlude, NerfOnly };

inline std::string to_string(FuseMode m) {
    switch (m) {
        case FuseMode::Tunnel: return "tunnel";
        case FuseMode::Merge: return "merge";
        case FuseMode::Occlude: return "occlude";
        case FuseMode::NerfOnly: return "nerf";
    }
    return "tunnel";
}

inline FuseMode parse_fuse_mode(const std::string& s) {
    if (s == "tunnel") return FuseMode::Tunnel;
    if (s == "merge") return FuseMode::Merge;
    if (s == "occlude") return FuseMode::Occlude;
    if (s == "nerf") return FuseMode::NerfOnly;
    throw ValidationError("unknown fusion mode '" + s + "'");
}

struct SessionState {
    Camera camera{{0, 0, 0}, {}, 0.02, 100.0};
    LensConfig lens{};
    TunnelConfig tunnel{};
    FuseMode mode = FuseMode::Tunnel;
    RasterStyle style = RasterStyle::Wireframe;
    double periphery_fov_deg = 90.0;
    std::uint32_t view_px = 512;  // side of the peripheral frame
    MarchConfig march{};
    unsigned threads = 0;
};

struct FramePacket {
    std::uint32_t frame_id = 0;
    std::vector<std::uint8_t> bytes;  // MNLF header + PNG
    nlohmann::json stats;
    FrameStats frame_stats;
};

/// One client's view of the engine. Not thread-safe: a single render worker owns it and
/// feeds it control messages between frames.
class Session {
public:
    explicit Session(SessionState initial = {}) : state_(std::move(initial)) {}

    // -- scene management -------------------------------------------------
    void set_grid(RadianceFieldGrid grid, std::optional<OccupancyBitfield> mask = std::nullopt) {
        grid_ = std::make_unique<RadianceFieldGrid>(std::move(grid));
        OccupancyBitfield bits = rebuild_bitfield(*grid_);
        if (mask) {
            if (!(mask->dims() == grid_->dims()))
                throw FormatError(FormatError::Kind::ShapeMismatch,
                                  "mask shape " + mask->dims().str() + " does not match grid shape " + grid_->dims().str());
            bits &= *mask;
        }
        bits_ = std::move(bits);
        pending_.clear();
        log_ = {grid_->content_hash(), {}};
        rebuild_volume();
        frame_camera_to_grid();
        dirty_ = true;
    }
    void set_mesh(Mesh mesh) {
        mesh.validate();
        mesh_ = std::move(mesh);
        dirty_ = true;
    }
    void set_alignment(const FusionTransform& t) {
        alignment_.set(t);
        dirty_ = true;
    }
    bool has_scene() const { return grid_ != nullptr; }
    const RadianceFieldGrid* grid() const { return grid_.get(); }
    const OccupancyBitfield& mask() const { return bits_; }
    const SessionState& state() const { return state_; }
    const Alignment& alignment() const { return alignment_; }
    const EditLog& edit_log() const { return log_; }
    std::size_t pending_edits() const { return pending_.size(); }
    std::uint32_t last_frame_id() const { return frame_id_; }
    FrameScheduler& scheduler() { return scheduler_; }

    /// True when state changed since the last streamed frame.
    bool dirty() const { return dirty_; }
    void mark_dirty() { dirty_ = true; }

    // -- control messages -------------------------------------------------
    nlohmann::json handle_message(const nlohmann::json& msg) {
        nlohmann::json seq = nullptr;
        if (msg.is_object() && msg.contains("seq")) seq = msg["seq"];
        try {
            if (!msg.is_object()) schema::fail("$", "expected object");
            const std::string type = schema::string(msg, "type", "$");
            nlohmann::json extra = nlohmann::json::object();
            if (type == "pose") {
                on_pose(msg);
            } else if (type == "lens") {
                on_lens(msg);
            } else if (type == "fusion") {
                on_fusion(msg);
            } else if (type == "align") {
                set_alignment(parse_fusion_transform(msg));
            } else if (type == "edit") {
                EditCommand cmd = parse_edit_command(msg);
                require_scene();
                pending_.push_back(cmd);
                dirty_ = true;
            } else if (type == "save") {
                on_save(msg);
            } else if (type == "load") {
                on_load(msg);
            } else if (type == "frame_ack") {
                scheduler_.on_ack(std::uint32_t(schema::unsigned_int(schema::field(msg, "frame_id", "$"), "$.frame_id")));
            } else if (type == "render") {
                dirty_ = true;
            } else if (type == "get_state") {
                extra["state"] = state_json();
            } else {
                return {{"type", "err"}, {"seq", seq}, {"reason", "unknown_type"}};
            }
            nlohmann::json ack = {{"type", "ack"}, {"seq", seq}};
            ack.update(extra);
            return ack;
        } catch (const std::exception& e) {
            return {{"type", "err"}, {"seq", seq}, {"reason", e.what()}};
        }
    }

    nlohmann::json state_json() const {
        const Camera& c = state_.camera;
        nlohmann::json s = {
            {"pose", {{"pos", to_json(c.position)}, {"quat", to_json(c.orientation)}}},
            {"lens",
             {{"fov_deg", state_.lens.fov_deg},
              {"ppd", state_.lens.ppd},
              {"plane_w", state_.lens.plane_w},
              {"far_len", state_.lens.far_len}}},
            {"fusion",
             {{"mode", to_string(state_.mode)},
              {"feather_deg", state_.tunnel.feather_deg},
              {"merge_alpha", state_.tunnel.merge_alpha},
              {"periphery_fov_deg", state_.periphery_fov_deg},
              {"style", state_.style == RasterStyle::Solid ? "solid" : "wireframe"}}},
            {"align", fusion_transform_to_json(alignment_.get())},
            {"frame_id", frame_id_},
            {"pending_edits", pending_.size()},
            {"scene_loaded", has_scene()},
        };
        s["fusion"]["lens_radius_frac"] =
            state_.tunnel.lens_radius_frac ? nlohmann::json(*state_.tunnel.lens_radius_frac) : nlohmann::json(nullptr);
        if (grid_) s["mask_popcount"] = bits_.popcount();
        return s;
    }

    /// Applies queued edits; called at frame boundaries.
    void apply_pending_edits() {
        if (pending_.empty()) return;
        for (const EditCommand& cmd : pending_) {
            apply_edit(*grid_, bits_, cmd);
            log_.commands.push_back(cmd);
        }
        pending_.clear();
        rebuild_volume();
    }

    /// Renders the current state into a frame packet. Throws ValidationError without a scene.
    FramePacket stream_frame() {
        require_scene();
        apply_pending_edits();
        const Camera& cam = state_.camera;
        RenderScene scene{volume_.get(), default_scene_box(*grid_, alignment_.get().trs), alignment_.get().trs};
        RenderOptions opt;
        opt.threads = state_.threads;
        RenderedFrame nerf = render_frame(scene, cam, state_.lens, state_.march, opt);
        FrameStats stats = nerf.stats;
        Framebuffer out;
        switch (state_.mode) {
            case FuseMode::NerfOnly:
                out = nerf.color;
                break;
            case FuseMode::Tunnel:
            case FuseMode::Merge: {
                const RasterOutput raster = periphery(cam, {state_.periphery_fov_deg, state_.view_px});
                out = state_.mode == FuseMode::Tunnel ? composite_tunnel(nerf.color, raster, state_.tunnel)
                                                      : composite_merge(nerf.color, raster.color, state_.tunnel.merge_alpha);
                break;
            }
            case FuseMode::Occlude: {
                const RasterOutput raster = periphery(cam, nerf.color.view.intrinsics);
                RenderOptions limited = opt;
                limited.depth_limit = &raster.depth;
                RenderedFrame fog = render_frame(scene, cam, state_.lens, state_.march, limited);
                stats = fog.stats;
                out = depth_occlude(fog.color, fog.depth, raster);
                break;
            }
        }
        FramePacket p;
        p.frame_id = ++frame_id_;
        const auto png = encode_png(out);
        FrameHeader h;
        h.width = std::uint16_t(out.width);
        h.height = std::uint16_t(out.height);
        h.frame_id = p.frame_id;
        p.bytes = encode_frame_packet(h, png);
        p.frame_stats = stats;
        p.stats = {{"type", "stats"},
                   {"frame_id", p.frame_id},
                   {"rays_total", stats.rays_total},
                   {"rays_active", stats.rays_active},
                   {"samples_total", stats.samples_total},
                   {"wall_time_ms", stats.wall_time_ms},
                   {"skipped_voxel_spans", stats.skipped_voxel_spans},
                   {"resolution", lens_resolution(state_.lens.fov_deg, state_.lens.ppd)},
                   {"width", out.width},
                   {"height", out.height}};
        dirty_ = false;
        return p;
    }

private:
    void require_scene() const {
        if (!grid_) throw ValidationError("no scene loaded");
    }

    void rebuild_volume() { volume_ = std::make_unique<MarchVolume>(*grid_, bits_); }

    /// Default viewpoint: one and a half grid extents in front of the grid, looking along +z.
    void frame_camera_to_grid() {
        const GridGeometry& g = grid_->geometry();
        const Vec3 c = (g.lo() + g.hi()) * 0.5;
        const double extent = std::max({g.hi().x - g.lo().x, g.hi().y - g.lo().y, g.hi().z - g.lo().z});
        state_.camera.position = c - Vec3{0, 0, 1.5 * extent};
        state_.camera.orientation = {};
        state_.lens.far_len = std::max(state_.lens.far_len, 3.0 * extent);
        state_.lens.plane_w = std::max(state_.lens.plane_w, 2.0 * extent);
    }

    RasterOutput periphery(const Camera& cam, const Intrinsics& in) const {
        if (mesh_) return rasterize(*mesh_, cam, in, state_.style, state_.threads);
        RasterOutput r;
        r.color = Framebuffer(in.side, in.side);
        r.color.view = {cam, in};
        r.depth = DepthMap(in.side, in.side, kDepthSentinel);
        return r;
    }

    void on_pose(const nlohmann::json& msg) {
        Camera cam = state_.camera;
        cam.position = schema::vec3(msg, "pos", "$");
        cam.orientation = schema::quat(schema::field(msg, "quat", "$"), "$.quat");
        cam.validate();
        state_.camera = cam;
        dirty_ = true;
    }

    void on_lens(const nlohmann::json& msg) {
        LensConfig lens = state_.lens;
        lens.fov_deg = schema::number_or(msg, "fov_deg", "$", lens.fov_deg);
        lens.ppd = schema::number_or(msg, "ppd", "$", lens.ppd);
        lens.plane_w = schema::number_or(msg, "plane_w", "$", lens.plane_w);
        lens.far_len = schema::number_or(msg, "far_len", "$", lens.far_len);
        lens.validate(state_.camera);
        state_.lens = lens;
        dirty_ = true;
    }

    void on_fusion(const nlohmann::json& msg) {
        SessionState next = state_;
        if (const auto* m = schema::optional_field(msg, "mode")) {
            if (!m->is_string()) schema::fail("$.mode", "expected string");
            next.mode = parse_fuse_mode(m->get<std::string>());
        }
        if (const auto* s = schema::optional_field(msg, "style")) {
            if (!s->is_string() || (*s != "solid" && *s != "wireframe")) schema::fail("$.style", "expected solid|wireframe");
            next.style = *s == "solid" ? RasterStyle::Solid : RasterStyle::Wireframe;
        }
        next.tunnel.feather_deg = schema::number_or(msg, "feather_deg", "$", next.tunnel.feather_deg);
        next.tunnel.merge_alpha = schema::number_or(msg, "merge_alpha", "$", next.tunnel.merge_alpha);
        if (msg.contains("lens_radius_frac")) {
            const auto& v = msg["lens_radius_frac"];
            next.tunnel.lens_radius_frac =
                v.is_null() ? std::nullopt : std::optional<double>(schema::number(v, "$.lens_radius_frac"));
        }
        next.periphery_fov_deg = schema::number_or(msg, "periphery_fov_deg", "$", next.periphery_fov_deg);
        if (!(next.periphery_fov_deg > 0 && next.periphery_fov_deg < 180))
            throw ValidationError("periphery_fov_deg out of range");
        next.tunnel.validate();
        state_ = next;
        dirty_ = true;
    }

    void on_save(const nlohmann::json& msg) {
        const std::string kind = schema::string(msg, "kind", "$");
        const std::filesystem::path path = schema::string(msg, "path", "$");
        if (kind == "alignment") {
            write_fusion_transform(path, alignment_.get());
            return;
        }
        require_scene();
        apply_pending_edits();
        if (kind == "mask")
            save_mask(bits_, path);
        else if (kind == "edits")
            write_edit_log(path, log_);
        else
            schema::fail("$.kind", "expected mask|alignment|edits");
    }

    void on_load(const nlohmann::json& msg) {
        const std::string kind = schema::string(msg, "kind", "$");
        const std::filesystem::path path = schema::string(msg, "path", "$");
        if (kind == "scene") {
            set_grid(read_grid(path));
        } else if (kind == "mesh") {
            set_mesh(load_obj(path));
        } else if (kind == "alignment") {
            alignment_.set(read_fusion_transform(path));
            dirty_ = true;
        } else if (kind == "mask") {
            require_scene();
            apply_pending_edits();
            bits_ = load_mask(path, *grid_);
            rebuild_volume();
            dirty_ = true;
        } else {
            schema::fail("$.kind", "expected scene|mesh|mask|alignment");
        }
    }

    SessionState state_;
    Alignment alignment_;
    std::unique_ptr<RadianceFieldGrid> grid_;
    OccupancyBitfield bits_;
    std::unique_ptr<MarchVolume> volume_;
    std::optional<Mesh> mesh_;
    std::deque<EditCommand> pending_;
    EditLog log_;
    FrameScheduler scheduler_;
    std::uint32_t frame_id_ = 0;
    bool dirty_ = true;
};

}  // namespace magiclens
