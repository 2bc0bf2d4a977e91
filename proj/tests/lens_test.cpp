#include <gtest/gtest.h>

#include <random>

#include "magiclens/lens.hpp"
#include "test_util.hpp"

using namespace magiclens;

namespace {

Camera looking_z() { return Camera{{0, 0, 0}, {}, 0.1, 100.0}; }

CropBox huge_box() { return CropBox{{-1e6, -1e6, -1e6}, {1e6, 1e6, 1e6}, {}}; }

}  // namespace

TEST(LensResolution, PublishedConfigurations) {
    EXPECT_EQ(lens_resolution(30, 20), 1200u);
    EXPECT_EQ(lens_resolution(40, 15), 1200u);
    EXPECT_EQ(lens_resolution(0, 25), 0u);
}

TEST(LensResolution, DoublingPpdQuadruplesPixels) {
    for (double fov : {10.0, 25.0, 60.0, 90.0})
        for (double ppd : {5.0, 15.0, 20.0}) {
            const double r1 = lens_resolution(fov, ppd), r2 = lens_resolution(fov, 2 * ppd);
            EXPECT_EQ(r2 * r2, 4 * r1 * r1);
        }
}

TEST(LensConfig, RejectsOutOfRange) {
    const Camera cam = looking_z();
    LensConfig lens;
    lens.fov_deg = 200;
    EXPECT_THROW(lens.validate(cam), ValidationError);
    lens = {};
    lens.far_len = 0.05;
    EXPECT_THROW(lens.validate(cam), ValidationError);
    lens = {};
    lens.supersample_c = 0.5;
    EXPECT_THROW(lens.validate(cam), ValidationError);
}

TEST(LensBox, CameraFrameConstruction) {
    LensConfig lens;
    lens.plane_w = 1.0;
    lens.far_len = 2.0;
    const CropBox box = lens_box(looking_z(), lens);
    EXPECT_EQ(box.min, (Vec3{-0.5, -0.5, 0.1}));
    EXPECT_EQ(box.max, (Vec3{0.5, 0.5, 2.0}));
    EXPECT_DOUBLE_EQ(box.max.z - box.min.z, lens.far_len - 0.1);
}

TEST(LensBox, FollowsCameraRotation) {
    LensConfig lens;
    Camera cam = looking_z();
    // the right-hand rule carries +z to +x for +90 degrees about y and to -x for -90
    cam.orientation = Quat::from_axis_angle({0, 1, 0}, deg_to_rad(-90));
    const CropBox box = lens_box(cam, lens);
    const Vec3 axis = box.model_transform.apply({0, 0, 1}) - box.model_transform.apply({0, 0, 0});
    EXPECT_NEAR(axis.x, -1, 1e-12);
    EXPECT_NEAR(axis.y, 0, 1e-12);
    EXPECT_NEAR(axis.z, 0, 1e-12);
    cam.orientation = Quat::from_axis_angle({0, 1, 0}, deg_to_rad(90));
    EXPECT_NEAR(cam.forward().x, 1, 1e-12);
}

TEST(LensBox, DegenerateWidthDeactivatesAllRays) {
    LensConfig lens;
    lens.plane_w = 1e-9;
    lens.fov_deg = 10;
    lens.ppd = 5;
    const RayBundle b = generate_rays(looking_z(), lens, huge_box());
    EXPECT_EQ(b.active_count(), 0u);
}

TEST(GenerateRays, CenterRayIsForward) {
    Camera cam = looking_z();
    std::mt19937_64 rng(3);
    cam.orientation = gen::random_quat(rng);
    const Intrinsics in{30, 101};
    const Ray r = pixel_ray(cam, in, lens_box(cam, {}), huge_box(), 50, 50);
    EXPECT_NEAR(length(r.dir - cam.forward()), 0, 1e-6);
    EXPECT_NEAR(length(r.dir), 1, 1e-12);
}

TEST(GenerateRays, CornerAngleClosedForm) {
    const Intrinsics in{30, lens_resolution(30, 100)};
    const Camera cam = looking_z();
    const Ray r = pixel_ray(cam, in, lens_box(cam, {}), huge_box(), 0, 0);
    const double angle = std::acos(dot(r.dir, cam.forward()));
    EXPECT_NEAR(angle, std::atan(std::sqrt(2.0) * std::tan(deg_to_rad(15))), 1e-4);
    // the continuous image corner is exact
    EXPECT_NEAR(in.eccentricity(0, 0), std::atan(std::sqrt(2.0) * std::tan(deg_to_rad(15))), 1e-12);
}

TEST(GenerateRays, DisjointBoxesGiveNoActiveRays) {
    LensConfig lens;
    lens.fov_deg = 20;
    lens.ppd = 5;
    const CropBox scene{{10, 10, 10}, {11, 11, 11}, {}};
    const RayBundle b = generate_rays(looking_z(), lens, scene);
    EXPECT_EQ(b.rays.size(), 200u * 200u);
    EXPECT_EQ(b.active_count(), 0u);
}

TEST(GenerateRays, RangesStayWithinNearFar) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        Camera cam{gen::random_vec(rng, -1, 1), gen::random_quat(rng), 0.05, 3.0};
        LensConfig lens;
        lens.fov_deg = gen::uniform(rng, 5, 90);
        lens.ppd = 1;
        lens.plane_w = gen::uniform(rng, 0.1, 3);
        lens.far_len = gen::uniform(rng, 0.5, 4);
        const CropBox scene{{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}, {}};
        const RayBundle b = generate_rays(cam, lens, scene);
        const std::uint32_t r = lens_resolution(lens.fov_deg, lens.ppd);
        EXPECT_EQ(b.rays.size(), std::size_t(r) * r);
        EXPECT_LE(b.active_count(), b.rays.size());
        for (const Ray& ray : b.rays) {
            if (!ray.active) continue;
            EXPECT_GE(ray.t_range.lo, cam.near - 1e-12);
            EXPECT_LE(ray.t_range.lo, ray.t_range.hi);
            EXPECT_LE(ray.t_range.hi, cam.far + 1e-12);
            EXPECT_NEAR(length(ray.dir), 1, 1e-6);
        }
    }
}

TEST(Intrinsics, ProjectInvertsPixelDirection) {
    const Intrinsics in{47, 333};
    for (std::uint32_t y = 0; y < in.side; y += 37)
        for (std::uint32_t x = 0; x < in.side; x += 41) {
            const auto [u, v] = in.project(in.pixel_dir(x, y) * 3.0);
            EXPECT_NEAR(u, x + 0.5, 1e-9);
            EXPECT_NEAR(v, y + 0.5, 1e-9);
        }
}
