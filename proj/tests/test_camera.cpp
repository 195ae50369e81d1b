#include "core/camera.hpp"

#include <doctest.h>

using namespace dsplat;

namespace {

CameraT<double> test_camera() {
    CameraT<double> cam;
    cam.width = 64;
    cam.height = 48;
    cam.fx = 100;
    cam.fy = 100;
    cam.cx = 32;
    cam.cy = 24;
    cam.near_clip = 0.1;
    cam.far_clip = 100;
    return cam;
}

}  // namespace

TEST_SUITE_BEGIN("camera");

TEST_CASE("project_point: optical axis lands on the principal point") {
    const auto cam = test_camera();
    const auto uvz = project_point<double>({0, 0, 3.5}, cam);
    CHECK(uvz[0] == cam.cx);
    CHECK(uvz[1] == cam.cy);
    CHECK(uvz[2] == 3.5);
}

TEST_CASE("project_point: hand pinhole arithmetic") {
    auto cam = test_camera();
    cam.cx = cam.cy = 0;
    const auto uvz = project_point<double>({1, 0, 2}, cam);
    CHECK(uvz[0] == doctest::Approx(50.0).epsilon(1e-15));
    CHECK(uvz[1] == 0.0);
    CHECK(uvz[2] == 2.0);
}

TEST_CASE("project_point: rigid shift of world and camera leaves pixels unchanged") {
    auto rng = seeded_rng(21, 0);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        auto cam = test_camera();
        Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
        q.normalize();
        cam.rot = quat_to_rotation(q);
        cam.trans = Vec3<double>(n(rng), n(rng), n(rng));
        Vec3<double> p(n(rng), n(rng), 5.0 + n(rng));
        if (cam.world_to_cam(p)[2] <= 0) continue;
        const Vec3<double> shift(n(rng), n(rng), n(rng));
        auto cam2 = cam;
        cam2.trans = cam.trans - cam.rot * shift;
        const auto a = project_point(p, cam);
        const auto b = project_point<double>(p + shift, cam2);
        CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-9));
        CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-9));
    }
}

TEST_CASE("project_point: behind camera is an error") {
    const auto cam = test_camera();
    CHECK_THROWS_AS(project_point<double>({0, 0, -1}, cam), Error);
}

TEST_CASE("project_gaussian: on-axis closed form") {
    const auto cam = test_camera();
    const double z = 4.0;
    const auto cov = covariance_from_rotation_scale<double>({1, 0, 0, 0}, {1, 1, 1});
    const auto p = project_gaussian<double>({0, 0, z}, cov, cam);
    REQUIRE(p.has_value());
    const double expected = (cam.fx / z) * (cam.fx / z) + kCovDilation;
    CHECK(p->cov_a == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p->cov_d == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p->cov_b == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p->u == cam.cx);
    CHECK(p->v == cam.cy);
    CHECK(p->depth == z);
    CHECK(p->radius == doctest::Approx(3 * std::sqrt(expected)).epsilon(1e-12));
}

TEST_CASE("project_gaussian: culled outside the depth range") {
    const auto cam = test_camera();
    const auto cov = covariance_from_rotation_scale<double>({1, 0, 0, 0}, {0.1, 0.1, 0.1});
    CHECK_FALSE(project_gaussian<double>({0, 0, 0.05}, cov, cam).has_value());
    CHECK_FALSE(project_gaussian<double>({0, 0, 200}, cov, cam).has_value());
    CHECK_FALSE(project_gaussian<double>({50, 0, 2}, cov, cam).has_value());
}

TEST_CASE("project_gaussian: Jacobian matches central finite differences") {
    auto rng = seeded_rng(22, 0);
    std::normal_distribution<double> n(0, 1);
    const double h = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        auto cam = test_camera();
        Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
        q.normalize();
        cam.rot = quat_to_rotation(q);
        cam.trans = Vec3<double>(0.2 * n(rng), 0.2 * n(rng), 0.2 * n(rng));
        Vec3<double> mu = cam.rot.transpose() * (Vec3<double>(0.3 * n(rng), 0.3 * n(rng), 3 + 0.5 * n(rng)) - cam.trans);

        const Vec3<double> t = cam.world_to_cam(mu);
        if (t[2] < 0.5) continue;
        const Mat23<double> m = projection_jacobian(t, cam) * cam.rot;  // d(u,v)/d(mu_world)
        for (int c = 0; c < 3; ++c) {
            Vec3<double> mu_p = mu, mu_m = mu;
            mu_p[c] += h;
            mu_m[c] -= h;
            const auto up = project_point(mu_p, cam);
            const auto um = project_point(mu_m, cam);
            CHECK(m(0, c) == doctest::Approx((up[0] - um[0]) / (2 * h)).epsilon(1e-5));
            CHECK(m(1, c) == doctest::Approx((up[1] - um[1]) / (2 * h)).epsilon(1e-5));
        }
    }
}

TEST_CASE("project_gaussian: screen covariance rotates with in-plane camera roll") {
    auto rng = seeded_rng(23, 0);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 10; ++trial) {
        auto cam = test_camera();
        Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
        q.normalize();
        const Vec3<double> s(0.3 + 0.2 * std::abs(n(rng)), 0.5, 0.9);
        const auto cov = covariance_from_rotation_scale(q, s);
        const Vec3<double> mu(0.2, -0.1, 4.0);
        const auto base = project_gaussian(mu, cov, cam, 0.0);
        REQUIRE(base.has_value());

        const double theta = 0.3 + 0.1 * trial;
        Mat3<double> roll;
        roll << std::cos(theta), -std::sin(theta), 0, std::sin(theta), std::cos(theta), 0, 0, 0, 1;
        auto cam_rolled = cam;
        cam_rolled.rot = roll * cam.rot;
        cam_rolled.trans = roll * cam.trans;
        const auto rolled = project_gaussian(mu, cov, cam_rolled, 0.0);
        REQUIRE(rolled.has_value());

        Mat2<double> r2;
        r2 << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
        Mat2<double> sigma;
        sigma << base->cov_a, base->cov_b, base->cov_b, base->cov_d;
        const Mat2<double> expected = r2 * sigma * r2.transpose();
        CHECK(rolled->cov_a == doctest::Approx(expected(0, 0)).epsilon(1e-9));
        CHECK(rolled->cov_b == doctest::Approx(expected(0, 1)).epsilon(1e-9));
        CHECK(rolled->cov_d == doctest::Approx(expected(1, 1)).epsilon(1e-9));
    }
}

TEST_CASE("projection depth is strictly increasing along the ray") {
    const auto cam = test_camera();
    double prev = 0;
    for (double tz = 1; tz < 10; tz += 0.5) {
        const auto uvz = project_point<double>({0.4 * tz, -0.2 * tz, tz}, cam);
        CHECK(uvz[2] > prev);
        prev = uvz[2];
    }
}

TEST_CASE("camera validation rejects bad rotations and clip planes") {
    auto cam = test_camera();
    cam.rot(0, 0) = 2.0;
    CHECK_THROWS_AS(cam.validate(), Error);
    auto cam2 = test_camera();
    cam2.near_clip = 5;
    cam2.far_clip = 1;
    CHECK_THROWS_AS(cam2.validate(), Error);
}

TEST_SUITE_END();
