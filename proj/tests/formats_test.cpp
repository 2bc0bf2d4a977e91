#include <gtest/gtest.h>

#include <random>

#include "magiclens/formats.hpp"
#include "test_util.hpp"

using namespace magiclens;

namespace {

RadianceFieldGrid random_float_grid(std::mt19937_64& rng, Dims d) {
    RadianceFieldGrid g(d, {float(gen::uniform(rng, -2, 2)), float(gen::uniform(rng, -2, 2)), float(gen::uniform(rng, -2, 2))},
                        float(gen::uniform(rng, 0.01, 0.2)));
    for (auto& v : g.voxels())
        v = {float(gen::uniform(rng, 0, 1)), float(gen::uniform(rng, 0, 1)), float(gen::uniform(rng, 0, 1)),
             float(gen::uniform(rng, 0, 50))};
    return g;
}

FormatError::Kind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const FormatError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no FormatError";
    return FormatError::Kind::Io;
}

Trajectory random_trajectory(std::mt19937_64& rng, std::size_t n) {
    Trajectory t;
    double time = gen::uniform(rng, 0, 10);
    for (std::size_t i = 0; i < n; ++i) {
        time += gen::uniform(rng, 0.1, 20);
        t.samples.push_back({time, gen::random_vec(rng, -5, 5), gen::random_quat(rng)});
    }
    return t;
}

}  // namespace

TEST(GridFormat, RoundTripIsBitExact) {
    const auto dir = gen::scratch_dir("formats_grid");
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 20; ++trial) {
        const Dims d{std::uint32_t(1 + rng() % 9), std::uint32_t(1 + rng() % 9), std::uint32_t(1 + rng() % 9)};
        const RadianceFieldGrid g = random_float_grid(rng, d);
        write_grid(dir / "g.mnlv", g);
        const RadianceFieldGrid back = read_grid(dir / "g.mnlv");
        EXPECT_TRUE(back == g);
        EXPECT_EQ(encode_grid(back), read_file(dir / "g.mnlv"));
        const Artifact any = read_any(dir / "g.mnlv");
        ASSERT_TRUE(std::holds_alternative<RadianceFieldGrid>(any));
        EXPECT_EQ(std::get<RadianceFieldGrid>(any).dims(), d);
    }
}

TEST(GridFormat, LittleEndianLayout) {
    RadianceFieldGrid g({2, 3, 4}, {0, 0, 0}, 0.5);
    g.at(0) = {1.0f, 0, 0, 2.0f};
    const auto b = encode_grid(g);
    ASSERT_EQ(b.size(), 36u + 24 * 16);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "MNLV");
    const std::vector<std::uint8_t> head{1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0};
    EXPECT_EQ(std::vector<std::uint8_t>(b.begin() + 4, b.begin() + 20), head);
    // 0.5f = 0x3f000000, 1.0f = 0x3f800000, 2.0f = 0x40000000
    EXPECT_EQ(std::vector<std::uint8_t>(b.begin() + 32, b.begin() + 36), (std::vector<std::uint8_t>{0, 0, 0, 0x3f}));
    EXPECT_EQ(std::vector<std::uint8_t>(b.begin() + 36, b.begin() + 40), (std::vector<std::uint8_t>{0, 0, 0x80, 0x3f}));
    EXPECT_EQ(std::vector<std::uint8_t>(b.begin() + 48, b.begin() + 52), (std::vector<std::uint8_t>{0, 0, 0, 0x40}));
}

TEST(GridFormat, TypedErrors) {
    std::mt19937_64 rng(72);
    const auto bytes = encode_grid(random_float_grid(rng, {3, 3, 3}));
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_EQ(kind_of([&] { decode_grid(truncated); }), FormatError::Kind::CorruptPayload);
    auto extended = bytes;
    extended.push_back(0);
    EXPECT_EQ(kind_of([&] { decode_grid(extended); }), FormatError::Kind::CorruptPayload);
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_EQ(kind_of([&] { decode_grid(magic); }), FormatError::Kind::BadMagic);
    auto version = bytes;
    version[4] = 2;
    EXPECT_EQ(kind_of([&] { decode_grid(version); }), FormatError::Kind::VersionUnsupported);
    EXPECT_EQ(kind_of([&] { decode_grid(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)); }),
              FormatError::Kind::CorruptPayload);
    const auto dir = gen::scratch_dir("formats_missing");
    EXPECT_EQ(kind_of([&] { read_grid(dir / "nope.mnlv"); }), FormatError::Kind::Io);
}

TEST(MaskFormat, RoundTripAndTruncation) {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 20; ++trial) {
        const Dims d{std::uint32_t(1 + rng() % 13), std::uint32_t(1 + rng() % 13), std::uint32_t(1 + rng() % 13)};
        OccupancyBitfield bits(d);
        for (std::size_t i = 0; i < d.count(); ++i) bits.set(i, rng() & 1);
        const auto bytes = encode_bitfield(bits);
        EXPECT_EQ(decode_bitfield(bytes).bytes(), bits.bytes());
        EXPECT_EQ(encode_bitfield(decode_bitfield(bytes)), bytes);
        auto cut = bytes;
        cut.pop_back();
        EXPECT_EQ(kind_of([&] { decode_bitfield(cut); }), FormatError::Kind::CorruptPayload);
    }
}

TEST(ReadAny, MagicWinsOverExtension) {
    const auto dir = gen::scratch_dir("formats_magic");
    OccupancyBitfield bits({4, 4, 4});
    bits.set(5, true);
    write_bitfield(dir / "mask_named_as_grid.mnlv", bits);
    const Artifact a = read_any(dir / "mask_named_as_grid.mnlv");
    ASSERT_TRUE(std::holds_alternative<OccupancyBitfield>(a));
    EXPECT_EQ(std::get<OccupancyBitfield>(a).bytes(), bits.bytes());

    write_file_atomic(dir / "text.mnlb", std::string_view("{\"dims\": [2, 2, 2]}"));
    EXPECT_EQ(kind_of([&] { read_any(dir / "text.mnlb"); }), FormatError::Kind::BadMagic);
    write_file_atomic(dir / "junk.bin", std::string_view("garbage"));
    EXPECT_EQ(kind_of([&] { read_any(dir / "junk.bin"); }), FormatError::Kind::BadMagic);
}

TEST(ReadAny, JsonDispatchByKeys) {
    const auto dir = gen::scratch_dir("formats_json");
    std::mt19937_64 rng(74);
    write_trajectory(dir / "t.json", random_trajectory(rng, 3));
    EXPECT_TRUE(std::holds_alternative<Trajectory>(read_any(dir / "t.json")));
    write_fusion_transform(dir / "f.json", FusionTransform{{{1, 2, 3}, {}, 2}});
    EXPECT_TRUE(std::holds_alternative<FusionTransform>(read_any(dir / "f.json")));
    write_json(dir / "s.json", scene_spec_to_json(SceneSpec{}));
    EXPECT_TRUE(std::holds_alternative<SceneSpec>(read_any(dir / "s.json")));
    write_json(dir / "other.json", json{{"hello", 1}});
    EXPECT_EQ(kind_of([&] { read_any(dir / "other.json"); }), FormatError::Kind::Schema);
}

TEST(SceneSpecJson, RoundTrip) {
    SceneSpec s;
    s.dims = {16, 8, 4};
    s.origin = {-1, 0.5, 2};
    s.voxel_size = 0.125;
    s.primitives = {{BoxPrimitive{{0, 0, 0}, {1, 1, 1}}, {1, 0, 0}, 5},
                    {SpherePrimitive{{0.5, 0.5, 0.5}, 0.3}, {0, 1, 0}, 2},
                    {SlabPrimitive{2, 0.1, 0.4}, {0, 0, 1}, 0.5},
                    {ScatterPrimitive{7, 0.02, 0.05, 99}, {1, 1, 1}, 3}};
    const SceneSpec back = parse_scene_spec(json::parse(scene_spec_to_json(s).dump()));
    EXPECT_EQ(scene_spec_to_json(back), scene_spec_to_json(s));
    EXPECT_TRUE(make_procedural_grid(back) == make_procedural_grid(s));
}

TEST(SceneSpecJson, SchemaErrorsNamePath) {
    try {
        parse_scene_spec(json::parse(R"({"dims": [4, 4, 4], "primitives": [{"type": "box", "min": [0, 0, 0], "max": [1, 1, 1]}, {"type": "cone"}]})"));
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.kind(), FormatError::Kind::Schema);
        EXPECT_NE(std::string(e.what()).find("$.primitives[1].type"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_scene_spec(json::parse(R"({"dims": [4, 4]})")), FormatError);
    EXPECT_THROW(parse_scene_spec(json::parse(R"({"dims": [4, 4, 0]})")), FormatError);
}

TEST(TrajectoryJson, RoundTripIsExact) {
    std::mt19937_64 rng(75);
    for (int trial = 0; trial < 20; ++trial) {
        const Trajectory t = random_trajectory(rng, 1 + rng() % 10);
        const Trajectory back = parse_trajectory(json::parse(trajectory_to_json(t).dump()));
        ASSERT_EQ(back.samples.size(), t.samples.size());
        for (std::size_t i = 0; i < t.samples.size(); ++i) {
            EXPECT_EQ(back.samples[i].t_ms, t.samples[i].t_ms);
            EXPECT_EQ(back.samples[i].position, t.samples[i].position);
            EXPECT_EQ(back.samples[i].orientation.w, t.samples[i].orientation.w);
        }
    }
    EXPECT_THROW(parse_trajectory(json::parse(R"([{"t_ms": 1, "pos": [0,0,0], "quat": [0,0,0,1]}, {"t_ms": 1, "pos": [0,0,0], "quat": [0,0,0,1]}])")),
                 FormatError);
    EXPECT_THROW(parse_trajectory(json::parse(R"([{"t_ms": 1, "pos": [0,0,0], "quat": [0,0,0,3]}])")), FormatError);
}

TEST(FusionTransformJson, RoundTripAndMatrixCheck) {
    std::mt19937_64 rng(76);
    for (int trial = 0; trial < 20; ++trial) {
        const FusionTransform t{{gen::random_vec(rng, -3, 3), gen::random_quat(rng), gen::uniform(rng, 0.1, 5)}};
        const FusionTransform back = parse_fusion_transform(json::parse(fusion_transform_to_json(t).dump()));
        EXPECT_NEAR(length(back.trs.translation - t.trs.translation), 0, 1e-6);
        EXPECT_NEAR(back.trs.scale, t.trs.scale, 1e-6);
        EXPECT_NEAR(back.trs.rotation.w, t.trs.rotation.w, 1e-6);
    }
    json j = fusion_transform_to_json(FusionTransform{{{1, 2, 3}, {}, 2}});
    j["matrix"][3] = 1.5;
    EXPECT_THROW(parse_fusion_transform(j), FormatError);
    j = fusion_transform_to_json(FusionTransform{{{1, 2, 3}, {}, 2}});
    j["scale"] = 0;
    EXPECT_THROW(parse_fusion_transform(j), FormatError);
    j.erase("matrix");
    j["scale"] = 2;
    EXPECT_NO_THROW(parse_fusion_transform(j));
}

TEST(EditLogJsonl, RoundTripWithHash) {
    EditLog log;
    log.grid_hash = 0x0123456789abcdefull;
    log.commands = {{EditMode::Erase, {0.1, 0.2, 0.3}, 0.25, false, 10}, {EditMode::Reveal, {0.5, 0.5, 0.5}, 0.1, false, 20},
                    {EditMode::Erase, {1, 1, 1}, 2, true, 30}};
    const std::string text = edit_log_to_jsonl(log);
    EXPECT_EQ(text.substr(0, text.find('\n')), R"({"grid_hash":"0123456789abcdef"})");
    const EditLog back = parse_edit_log(text);
    EXPECT_EQ(back.grid_hash, log.grid_hash);
    ASSERT_EQ(back.commands.size(), 3u);
    EXPECT_EQ(back.commands[2].hard, true);
    EXPECT_EQ(back.commands[1].mode, EditMode::Reveal);
    EXPECT_EQ(edit_log_to_jsonl(back), text);
}

TEST(EditLogJsonl, ErrorsCarryLineNumbers) {
    const std::string good = R"({"mode": "erase", "center": [0, 0, 0], "radius": 1})";
    for (const auto& [text, line] : std::vector<std::pair<std::string, std::size_t>>{
             {good + "\n\n{not json\n", 3},
             {good + "\n" + R"({"mode": "paint", "center": [0, 0, 0], "radius": 1})" + "\n", 2},
             {good + "\n" + R"({"mode": "erase", "center": [0, 0, 0], "radius": 0})" + "\n", 2},
             {good + "\n" + R"({"grid_hash": "00"})" + "\n", 2}}) {
        try {
            parse_edit_log(text);
            ADD_FAILURE() << text;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), line) << e.what();
        }
    }
}

TEST(DepthExport, RoundTripWithSidecar) {
    const auto dir = gen::scratch_dir("formats_depth");
    DepthMap d(5, 3, 1.0f);
    d.near = 0.02f;
    d.far = 100;
    d.sentinel = kDepthSentinel;
    for (std::size_t i = 0; i < d.depth.size(); ++i) d.depth[i] = float(i) * 0.25f;
    d.depth[4] = kDepthSentinel;
    write_depth(dir / "d.f32", d);
    const DepthMap back = read_depth(dir / "d.f32");
    EXPECT_EQ(back.width, 5u);
    EXPECT_EQ(back.height, 3u);
    EXPECT_EQ(back.depth, d.depth);
    EXPECT_EQ(back.sentinel, kDepthSentinel);
    EXPECT_EQ(read_json(dir / "d.f32.json").at("near").get<float>(), 0.02f);
    write_file_atomic(dir / "d.f32", std::string_view("abc"));
    EXPECT_EQ(kind_of([&] { read_depth(dir / "d.f32"); }), FormatError::Kind::CorruptPayload);
}

TEST(FrameExport, PngAndRawFloats) {
    const auto dir = gen::scratch_dir("formats_png");
    Framebuffer fb(3, 2);
    fb.at(1, 1) = {0.5f, 0.25f, 0, 0.5f};
    write_png(dir / "f.png", fb);
    const auto png = read_file(dir / "f.png");
    ASSERT_GT(png.size(), 8u);
    EXPECT_EQ(std::vector<std::uint8_t>(png.begin(), png.begin() + 4), (std::vector<std::uint8_t>{0x89, 'P', 'N', 'G'}));
    const auto raw = encode_frame_f32(fb);
    ASSERT_EQ(raw.size(), 6u * 16);
    EXPECT_EQ(le::get_f32(raw.data() + 4 * 4 * 4), 0.5f);
    EXPECT_EQ(le::get_f32(raw.data() + 4 * 4 * 4 + 4), 0.25f);
}

TEST(PoseJson, AcceptsPosAlias) {
    const Camera c = parse_pose(json::parse(R"({"pos": [1, 2, 3], "quat": [0, 0, 0, 1]})"));
    EXPECT_EQ(c.position, (Vec3{1, 2, 3}));
    const Camera back = parse_pose(pose_to_json(c));
    EXPECT_EQ(back.position, c.position);
    EXPECT_THROW(parse_pose(json::parse(R"({"pos": [1, 2, 3], "quat": [0, 0, 0, 1], "near": -1})")), FormatError);
}
