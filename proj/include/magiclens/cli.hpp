#pragma once

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "magiclens/bench.hpp"
#include "magiclens/edit.hpp"
#include "magiclens/formats.hpp"
#include "magiclens/fusion.hpp"
#include "magiclens/raster.hpp"
#include "magiclens/raymarch.hpp"
#include "magiclens/server.hpp"
#include "magiclens/service.hpp"

namespace magiclens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

inline std::atomic<bool> g_interrupted{false};

inline Rgb parse_rgb(const std::vector<double>& v) {
    if (v.size() != 3) throw ValidationError("expected three color components");
    return {v[0], v[1], v[2]};
}

struct SceneInputs {
    RadianceFieldGrid grid;
    OccupancyBitfield mask;
};

inline SceneInputs load_scene(const std::string& scene, const std::string& mask) {
    SceneInputs in{read_grid(scene), {}};
    in.mask = mask.empty() ? rebuild_bitfield(in.grid) : load_mask(mask, in.grid);
    return in;
}

inline json stats_json(const FrameStats& s) {
    return {{"rays_total", s.rays_total},
            {"rays_active", s.rays_active},
            {"samples_total", s.samples_total},
            {"wall_time_ms", s.wall_time_ms},
            {"skipped_voxel_spans", s.skipped_voxel_spans}};
}

inline RasterOutput empty_raster(const Camera& cam, const Intrinsics& in) {
    RasterOutput r;
    r.color = Framebuffer(in.side, in.side);
    r.color.view = {cam, in};
    r.depth = DepthMap(in.side, in.side, kDepthSentinel);
    return r;
}

}  // namespace detail

/// Parses `args` (without the program name) and runs one subcommand. Human-readable
/// summaries go to `out`, diagnostics to `err`; machine outputs only to `-o` style paths.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Focus+context volumetric lens toolkit", "magiclens"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");

    // make-scene
    auto* make = app.add_subcommand("make-scene", "Voxelize a procedural scene into an MNLV grid");
    std::string spec_path, preset, make_out, targets_mask_out, traj_out;
    std::uint64_t seed = 0;
    std::uint32_t size = 128;
    make->add_option("--spec", spec_path, "Scene spec JSON");
    make->add_option("--preset", preset, "Built-in scene: benchmark | random | empty");
    make->add_option("--seed", seed, "Seed for randomized presets");
    make->add_option("--size", size, "Voxels per side for presets");
    make->add_option("-o,--out", make_out, "Output grid (.mnlv)")->required();
    make->add_option("--targets-mask", targets_mask_out, "benchmark preset: also write the targets-only mask");
    make->add_option("--traj", traj_out, "benchmark preset: also write the benchmark trajectory");

    // render
    auto* render = app.add_subcommand("render", "Render one lens frame, optionally fused with a mesh");
    std::string scene_path, mesh_path, style = "wireframe", mask_path, pose_path, fuse, render_out, depth_out,
                stats_out, raw_out, align_path;
    double fov = 30, ppd = 20, alpha = 1.0, feather = 2.0, plane_w = 2.0, far_len = 2.0, step = 0.0, term_eps = 1e-4,
           periphery_fov = 90.0;
    std::uint32_t view_px = 512;
    std::vector<double> background{0, 0, 0};
    render->add_option("--scene", scene_path, "Grid (.mnlv)")->required();
    render->add_option("--mesh", mesh_path, "Context mesh (.obj)");
    render->add_option("--style", style, "Mesh style: wireframe | solid");
    render->add_option("--mask", mask_path, "Occupancy mask (.mnlb)");
    render->add_option("--pose", pose_path, "Camera pose JSON")->required();
    render->add_option("--fov", fov, "Lens field of view, degrees");
    render->add_option("--ppd", ppd, "Pixels per degree");
    render->add_option("--plane-w", plane_w, "Lens box width W");
    render->add_option("--far-len", far_len, "Lens box depth L");
    render->add_option("--step", step, "March step in model units (0 = half a voxel)");
    render->add_option("--term-eps", term_eps, "Early termination threshold");
    render->add_option("--background", background, "Background RGB")->expected(3);
    render->add_option("--fuse", fuse, "Fusion with the mesh: tunnel | occlude | merge");
    render->add_option("--alpha", alpha, "NeRF opacity for tunnel/merge");
    render->add_option("--feather", feather, "Tunnel feather width, degrees");
    render->add_option("--periphery-fov", periphery_fov, "Peripheral frame field of view, degrees");
    render->add_option("--view-px", view_px, "Peripheral frame side, pixels");
    render->add_option("--align", align_path, "Fusion transform JSON");
    render->add_option("-o,--out", render_out, "Output PNG")->required();
    render->add_option("--depth", depth_out, "Depth output (raw f32 + .json sidecar)");
    render->add_option("--raw", raw_out, "Premultiplied RGBA f32 output");
    render->add_option("--stats", stats_out, "Frame statistics JSON");

    // edit
    auto* edit = app.add_subcommand("edit", "Replay an edit log into a mask");
    std::string edit_scene, edit_log, edit_out;
    double threshold = kDefaultDensityThreshold;
    edit->add_option("--scene", edit_scene, "Grid (.mnlv)")->required();
    edit->add_option("--log", edit_log, "Edit log (.jsonl)")->required();
    edit->add_option("--threshold", threshold, "Density threshold for occupancy");
    edit->add_option("-o,--out", edit_out, "Output mask (.mnlb)")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "Replay a trajectory over a FoV x PPD sweep");
    std::string bench_scene, bench_traj, bench_mask, bench_out;
    SweepConfig sweep_cfg;
    bool mono = false;
    double bench_plane_w = 2.0, bench_far_len = 2.0;
    bench->add_option("--scene", bench_scene, "Grid (.mnlv)")->required();
    bench->add_option("--traj", bench_traj, "Trajectory JSON")->required();
    bench->add_option("--mask", bench_mask, "Mask for the masked rows (.mnlb)");
    bench->add_option("--fov", sweep_cfg.fov_list, "FoV list, degrees")->delimiter(',');
    bench->add_option("--ppd", sweep_cfg.ppd_list, "PPD list")->delimiter(',');
    bench->add_option("--repeat", sweep_cfg.repeat, "Replays per config");
    bench->add_option("--plane-w", bench_plane_w, "Lens box width W");
    bench->add_option("--far-len", bench_far_len, "Lens box depth L");
    bench->add_flag("--mono", mono, "Render one eye instead of a stereo pair");
    bench->add_option("-o,--out", bench_out, "Output CSV")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the frame-streaming server");
    unsigned short port = kDefaultPort;
    std::string serve_scene, serve_mesh, serve_mask, serve_align, address = "127.0.0.1";
    serve->add_option("--port", port, "TCP port");
    serve->add_option("--address", address, "Listen address");
    serve->add_option("--scene", serve_scene, "Grid (.mnlv)");
    serve->add_option("--mesh", serve_mesh, "Context mesh (.obj)");
    serve->add_option("--mask", serve_mask, "Occupancy mask (.mnlb)");
    serve->add_option("--align", serve_align, "Fusion transform JSON");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        // top-level help expands every subcommand so all flags and defaults are listed
        out << (app.get_subcommands().empty() ? app.help("", CLI::AppFormatMode::All) : app.help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help("", CLI::AppFormatMode::All);
        return kExitUsage;
    }

    try {
        if (*make) {
            if (spec_path.empty() == preset.empty()) throw ValidationError("give exactly one of --spec or --preset");
            SceneSpec spec;
            std::optional<BenchmarkScene> bench_scene_def;
            if (!spec_path.empty()) {
                spec = read_scene_spec(spec_path);
            } else if (preset == "benchmark") {
                bench_scene_def = benchmark_scene(size);
                spec = bench_scene_def->spec;
            } else if (preset == "random") {
                spec.dims = {size, size, size};
                spec.voxel_size = 1.0 / size;
                spec.primitives.push_back({ScatterPrimitive{24, 0.04, 0.15, seed}, {1, 1, 1}, 8.0});
            } else if (preset == "empty") {
                spec.dims = {size, size, size};
                spec.voxel_size = 1.0 / size;
            } else {
                throw ValidationError("unknown preset '" + preset + "'");
            }
            if ((!targets_mask_out.empty() || !traj_out.empty()) && !bench_scene_def)
                throw ValidationError("--targets-mask and --traj need --preset benchmark");
            RadianceFieldGrid grid = make_procedural_grid(spec);
            write_grid(make_out, grid);
            if (!targets_mask_out.empty()) {
                RadianceFieldGrid scratch = grid;
                save_mask(targets_only_mask(scratch, *bench_scene_def), targets_mask_out);
            }
            if (!traj_out.empty()) write_trajectory(traj_out, benchmark_trajectory(*bench_scene_def));
            out << "wrote " << make_out << " (" << grid.dims().str() << ", "
                << rebuild_bitfield(grid).popcount() << " occupied voxels)\n";
            return kExitOk;
        }

        if (*render) {
            if (style != "wireframe" && style != "solid") throw ValidationError("--style must be wireframe or solid");
            if (!fuse.empty() && fuse != "tunnel" && fuse != "occlude" && fuse != "merge")
                throw ValidationError("--fuse must be tunnel, occlude or merge");
            const detail::SceneInputs in = detail::load_scene(scene_path, mask_path);
            const MarchVolume volume(in.grid, in.mask);
            Camera cam = read_pose(pose_path);
            LensConfig lens;
            lens.fov_deg = fov, lens.ppd = ppd, lens.plane_w = plane_w, lens.far_len = far_len;
            MarchConfig march;
            march.step = step, march.term_eps = term_eps, march.background = detail::parse_rgb(background);
            Trs align{};
            if (!align_path.empty()) align = read_fusion_transform(align_path).trs;
            RenderScene scene{&volume, default_scene_box(in.grid, align), align};
            RenderOptions opt;
            opt.threads = threads;
            RenderedFrame frame = render_frame(scene, cam, lens, march, opt);
            Framebuffer image = frame.color;
            FrameStats stats = frame.stats;
            if (!fuse.empty()) {
                const RasterStyle rs = style == "solid" ? RasterStyle::Solid : RasterStyle::Wireframe;
                std::optional<Mesh> mesh;
                if (!mesh_path.empty()) mesh = load_obj(mesh_path);
                auto raster_at = [&](const Intrinsics& ri) {
                    return mesh ? rasterize(*mesh, cam, ri, rs, threads) : detail::empty_raster(cam, ri);
                };
                TunnelConfig tc;
                tc.feather_deg = feather;
                tc.merge_alpha = alpha;
                if (fuse == "occlude") {
                    const RasterOutput raster = raster_at(frame.color.view.intrinsics);
                    RenderOptions limited = opt;
                    limited.depth_limit = &raster.depth;
                    frame = render_frame(scene, cam, lens, march, limited);
                    stats = frame.stats;
                    image = depth_occlude(frame.color, frame.depth, raster);
                } else {
                    const RasterOutput raster = raster_at({periphery_fov, view_px});
                    image = fuse == "tunnel" ? composite_tunnel(frame.color, raster, tc)
                                             : composite_merge(frame.color, raster.color, alpha);
                }
            }
            write_png(render_out, image);
            if (!depth_out.empty()) write_depth(depth_out, frame.depth);
            if (!raw_out.empty()) write_file_atomic(raw_out, encode_frame_f32(image));
            if (!stats_out.empty()) write_json(stats_out, detail::stats_json(stats));
            out << "rendered " << image.width << "x" << image.height << " (lens " << lens_resolution(fov, ppd)
                << " px/side), samples_total=" << stats.samples_total << ", " << stats.wall_time_ms << " ms\n";
            return kExitOk;
        }

        if (*edit) {
            RadianceFieldGrid grid = read_grid(edit_scene);
            const EditLog log = read_edit_log(edit_log);
            const OccupancyBitfield bits = replay_edits(grid, log, threshold);
            save_mask(bits, edit_out);
            out << "applied " << log.commands.size() << " edits, " << bits.popcount() << " voxels remain eligible\n";
            return kExitOk;
        }

        if (*bench) {
            const RadianceFieldGrid grid = read_grid(bench_scene);
            const Trajectory traj = read_trajectory(bench_traj);
            const MarchVolume full(grid, rebuild_bitfield(grid));
            std::optional<MarchVolume> masked;
            if (!bench_mask.empty()) masked.emplace(grid, load_mask(bench_mask, grid));
            sweep_cfg.replay.lens.plane_w = bench_plane_w;
            sweep_cfg.replay.lens.far_len = bench_far_len;
            sweep_cfg.replay.stereo = !mono;
            sweep_cfg.replay.threads = threads;
            const RenderScene a{&full, default_scene_box(grid), {}};
            std::optional<RenderScene> b;
            if (masked) b = RenderScene{&*masked, default_scene_box(grid), {}};
            const auto rows = sweep(traj, a, b ? &*b : nullptr, sweep_cfg);
            write_csv(bench_out, rows);
            out << "wrote " << rows.size() << " rows to " << bench_out << "\n";
            return kExitOk;
        }

        if (*serve) {
            SessionState st;
            st.threads = threads;
            Session session(st);
            if (!serve_scene.empty()) {
                RadianceFieldGrid grid = read_grid(serve_scene);
                std::optional<OccupancyBitfield> m;
                if (!serve_mask.empty()) m = load_mask(serve_mask, grid);
                session.set_grid(std::move(grid), m);
            } else if (!serve_mask.empty()) {
                throw ValidationError("--mask needs --scene");
            }
            if (!serve_mesh.empty()) session.set_mesh(load_obj(serve_mesh));
            if (!serve_align.empty())
                session.set_alignment(read_fusion_transform(serve_align));
            StreamServer server(session, port, address);
            server.start();
            out << "listening on ws://" << address << ":" << server.port() << kStreamPath << std::endl;
            detail::g_interrupted = false;
            std::signal(SIGINT, [](int) { detail::g_interrupted = true; });
            std::signal(SIGTERM, [](int) { detail::g_interrupted = true; });
            while (!detail::g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            return kExitOk;
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}

}  // namespace magiclens::cli
