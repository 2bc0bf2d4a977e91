#include <gtest/gtest.h>

#include <random>

#include "magiclens/field.hpp"
#include "test_util.hpp"

using namespace magiclens;

namespace {

RadianceFieldGrid unit_grid(std::uint32_t n) { return RadianceFieldGrid({n, n, n}, {0, 0, 0}, 1.0 / n); }

}  // namespace

TEST(SampleField, ExactAtVoxelCenter) {
    RadianceFieldGrid g = unit_grid(4);
    g.at(1, 2, 3) = {1, 0, 0, 2};
    const FieldSample s = sample_field(g, g.geometry().center(1, 2, 3));
    EXPECT_DOUBLE_EQ(s.density, 2.0);
    EXPECT_DOUBLE_EQ(s.color.x, 1.0);
    EXPECT_DOUBLE_EQ(s.color.y, 0.0);
}

TEST(SampleField, OutsideIsEmpty) {
    RadianceFieldGrid g = unit_grid(4);
    for (auto& v : g.voxels()) v = {1, 1, 1, 5};
    const FieldSample s = sample_field(g, {1.5, 0.5, 0.5});
    EXPECT_EQ(s.density, 0.0);
    EXPECT_EQ(s.color, (Rgb{0, 0, 0}));
}

TEST(SampleField, MidpointBetweenCenters) {
    RadianceFieldGrid g = unit_grid(4);
    for (auto& v : g.voxels()) v = {0.5f, 0.5f, 0.5f, 0.0f};
    g.at(1, 1, 1).sigma = 0;
    g.at(2, 1, 1).sigma = 4;
    const Vec3 mid = (g.geometry().center(1, 1, 1) + g.geometry().center(2, 1, 1)) * 0.5;
    EXPECT_DOUBLE_EQ(sample_field(g, mid).density, 2.0);
}

TEST(SampleField, BoundedByCornerValues) {
    std::mt19937_64 rng(11);
    RadianceFieldGrid g = gen::random_grid(rng, {6, 6, 6}, 0.7);
    for (int i = 0; i < 2000; ++i) {
        const Vec3 p = gen::random_vec(rng, 0, 1);
        double lo = 1e30, hi = -1e30;
        for (auto& v : g.voxels()) lo = std::min<double>(lo, v.sigma), hi = std::max<double>(hi, v.sigma);
        const double d = sample_field(g, p).density;
        EXPECT_GE(d, lo - 1e-9);
        EXPECT_LE(d, hi + 1e-9);
    }
}

TEST(RadianceFieldGrid, RejectsBadShape) {
    EXPECT_THROW(RadianceFieldGrid({0, 1, 1}, {}, 1.0), ValidationError);
    EXPECT_THROW(RadianceFieldGrid({1, 1, 1}, {}, 0.0), ValidationError);
}

TEST(RebuildBitfield, AllZeroAndAllSet) {
    RadianceFieldGrid g = unit_grid(5);
    EXPECT_EQ(rebuild_bitfield(g, 0.01).popcount(), 0u);
    for (auto& v : g.voxels()) v.sigma = 5;
    EXPECT_EQ(rebuild_bitfield(g, 0.01).popcount(), 125u);
}

TEST(RebuildBitfield, CountsThresholdedVoxels) {
    RadianceFieldGrid g = unit_grid(8);
    g.at(0, 0, 0).sigma = 1;
    g.at(3, 4, 5).sigma = 1;
    g.at(7, 7, 7).sigma = 1;
    g.at(2, 2, 2).sigma = 0.4f;
    const OccupancyBitfield bits = rebuild_bitfield(g, 0.5);
    EXPECT_EQ(bits.popcount(), 3u);
    EXPECT_TRUE(bits.get(g.geometry().index(3, 4, 5)));
}

TEST(RebuildBitfield, IdempotentAndNoFalseSkips) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        RadianceFieldGrid g = gen::random_grid(rng, {7, 5, 9}, 0.3);
        const double tau = gen::uniform(rng, 0, 20);
        const OccupancyBitfield a = rebuild_bitfield(g, tau), b = rebuild_bitfield(g, tau);
        EXPECT_EQ(a, b);
        for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(a.get(i), g.at(i).sigma >= tau);
    }
}

TEST(OccupancyBitfield, LsbFirstPacking) {
    OccupancyBitfield bits({3, 3, 1});
    bits.set(0, true);
    bits.set(8, true);
    EXPECT_EQ(bits.bytes()[0], 0x01);
    EXPECT_EQ(bits.bytes()[1], 0x01);
    OccupancyBitfield full({3, 3, 1}, true);
    EXPECT_EQ(full.popcount(), 9u);
}

TEST(Dilate, MatchesNeighbourhoodOracle) {
    std::mt19937_64 rng(13);
    const Dims d{6, 7, 5};
    OccupancyBitfield src(d);
    for (std::size_t i = 0; i < d.count(); ++i) src.set(i, gen::uniform(rng, 0, 1) < 0.05);
    const OccupancyBitfield out = dilate(src);
    const GridGeometry g{d, {}, 1.0};
    for (int i = 0; i < int(d.h); ++i)
        for (int j = 0; j < int(d.w); ++j)
            for (int k = 0; k < int(d.l); ++k) {
                bool any = false;
                for (int di = -1; di <= 1; ++di)
                    for (int dj = -1; dj <= 1; ++dj)
                        for (int dk = -1; dk <= 1; ++dk) {
                            const int a = i + di, b = j + dj, c = k + dk;
                            if (a < 0 || b < 0 || c < 0 || a >= int(d.h) || b >= int(d.w) || c >= int(d.l)) continue;
                            any = any || src.get(g.index(a, b, c));
                        }
                EXPECT_EQ(out.get(g.index(i, j, k)), any);
            }
}

TEST(ApplyModelTransform, Examples) {
    CropBox box;
    EXPECT_EQ(apply_model_transform(box, {1, 2, 3}), (Vec3{1, 2, 3}));
    box.model_transform = {{1, 0, 0}, {}, 2.0};
    EXPECT_EQ(apply_model_transform(box, {1, 1, 1}), (Vec3{3, 2, 2}));
    box.model_transform = {{}, Quat::from_axis_angle({0, 0, 1}, deg_to_rad(90)), 1.0};
    const Vec3 r = apply_model_transform(box, {1, 0, 0});
    EXPECT_NEAR(r.x, 0, 1e-6);
    EXPECT_NEAR(r.y, 1, 1e-6);
    EXPECT_NEAR(r.z, 0, 1e-6);
}

TEST(CropBox, Validation) {
    CropBox box{{0, 0, 0}, {1, 0, 1}, {}};
    EXPECT_THROW(box.validate(), ValidationError);
    box = {{0, 0, 0}, {1, 1, 1}, {{}, {0, 0, 0, 2}, 1.0}};
    EXPECT_THROW(box.validate(), ValidationError);
    box = {{0, 0, 0}, {1, 1, 1}, {{}, {}, 0.0}};
    EXPECT_THROW(box.validate(), ValidationError);
}

TEST(ProceduralGrid, EmptySpecIsZero) {
    SceneSpec spec;
    spec.dims = {4, 4, 4};
    spec.voxel_size = 0.25;
    const RadianceFieldGrid g = make_procedural_grid(spec);
    for (const auto& v : g.voxels()) EXPECT_EQ(v, RadianceFieldGrid::Voxel{});
}

TEST(ProceduralGrid, SphereMatchesCenterTest) {
    SceneSpec spec;
    spec.dims = {16, 16, 16};
    spec.voxel_size = 1.0 / 16;
    spec.primitives.push_back({SpherePrimitive{{0.5, 0.5, 0.5}, 0.4}, {1, 0, 0}, 1.0});
    const RadianceFieldGrid g = make_procedural_grid(spec);
    for (std::uint32_t i = 0; i < 16; ++i)
        for (std::uint32_t j = 0; j < 16; ++j)
            for (std::uint32_t k = 0; k < 16; ++k) {
                const Vec3 d = g.geometry().center(i, j, k) - Vec3{0.5, 0.5, 0.5};
                EXPECT_EQ(g.at(i, j, k).sigma, dot(d, d) <= 0.16 ? 1.0f : 0.0f);
            }
}

TEST(ProceduralGrid, OverlapKeepsMaxRegardlessOfOrder) {
    SceneSpec a;
    a.dims = {8, 8, 8};
    a.voxel_size = 1.0 / 8;
    a.primitives.push_back({BoxPrimitive{{0, 0, 0}, {0.6, 0.6, 0.6}}, {0, 1, 0}, 2.0});
    a.primitives.push_back({SpherePrimitive{{0.5, 0.5, 0.5}, 0.3}, {1, 0, 0}, 5.0});
    a.primitives.push_back({SlabPrimitive{1, 0.0, 0.2}, {0, 0, 1}, 0.5});
    SceneSpec b = a;
    std::reverse(b.primitives.begin(), b.primitives.end());
    const RadianceFieldGrid ga = make_procedural_grid(a), gb = make_procedural_grid(b);
    EXPECT_EQ(ga, gb);
    const GridGeometry& geo = ga.geometry();
    for (std::uint32_t i = 0; i < 8; ++i)
        for (std::uint32_t j = 0; j < 8; ++j)
            for (std::uint32_t k = 0; k < 8; ++k) {
                double want = 0;
                for (const auto& p : a.primitives)
                    if (detail::inside(p, geo.center(i, j, k))) want = std::max(want, p.density);
                EXPECT_EQ(ga.at(i, j, k).sigma, float(want));
            }
}

TEST(ProceduralGrid, ScatterIsSeedDeterministic) {
    SceneSpec spec;
    spec.dims = {16, 16, 16};
    spec.voxel_size = 1.0 / 16;
    spec.primitives.push_back({ScatterPrimitive{10, 0.05, 0.1, 42}, {1, 1, 1}, 3.0});
    const RadianceFieldGrid a = make_procedural_grid(spec), b = make_procedural_grid(spec);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.content_hash(), b.content_hash());
    std::get<ScatterPrimitive>(spec.primitives[0].shape).seed = 43;
    EXPECT_NE(make_procedural_grid(spec).content_hash(), a.content_hash());
}
