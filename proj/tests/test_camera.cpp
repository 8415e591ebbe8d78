#include <array>
#include <cmath>

#include "camfit/camera.hpp"
#include "doctest.h"
#include "random_geometry.hpp"

using namespace camfit;
using camfit::testing::random_pose;
using camfit::testing::random_rotation;
using camfit::testing::random_trajectory;

namespace {

using Arr3 = std::array<std::array<double, 3>, 3>;

Arr3 to_arr(const Mat3& m) {
    Arr3 a{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a[i][j] = m(i, j);
    return a;
}

// Adjugate / determinant inverse, deliberately not the transpose shortcut.
Arr3 inverse_oracle(const Arr3& m) {
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    Arr3 inv{};
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
}

Arr3 multiply_oracle(const Arr3& a, const Arr3& b) {
    Arr3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

double max_diff(const Mat3& a, const Mat3& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("pose validation") {
    CameraPose p;
    CHECK_NOTHROW(validate_pose(p));
    p.R(0, 0) = 1.0 + 1e-6;
    CHECK_THROWS_AS(validate_pose(p), ValidationError);
    p.R = Mat3::Identity();
    p.R(2, 2) = -1.0;  // reflection: orthonormal but det = -1
    CHECK_THROWS_AS(validate_pose(p), ValidationError);
    p.R = Mat3::Identity();
    p.K(0, 1) = 0.1;
    CHECK_THROWS_AS(validate_pose(p), ValidationError);
    p.K = make_intrinsics(0.0, 1.0, 0.0, 0.0);
    CHECK_THROWS_AS(validate_pose(p), ValidationError);
}

TEST_CASE("normalize_trajectory") {
    SUBCASE("identical frames map to identity poses") {
        Rng rng(1);
        const CameraPose p = random_pose(rng);
        CameraTrajectory traj{{p, p, p}, false};
        const auto n = normalize_trajectory(traj);
        CHECK(n.normalized);
        for (const auto& q : n.poses) {
            CHECK(max_diff(q.R, Mat3::Identity()) < 1e-12);
            CHECK(q.t.norm() == 0.0);
            CHECK(q.K == p.K);
        }
    }
    SUBCASE("single frame becomes the identity pose") {
        Rng rng(2);
        const auto n = normalize_trajectory(CameraTrajectory{{random_pose(rng)}, false});
        CHECK(max_diff(n.poses[0].R, Mat3::Identity()) < 1e-12);
        CHECK(n.poses[0].t.norm() == 0.0);
    }
    SUBCASE("matches an independent matrix-arithmetic oracle") {
        Rng rng(3);
        const auto traj = random_trajectory(rng, 4);
        const auto n = normalize_trajectory(traj);
        const Arr3 r0_inv = inverse_oracle(to_arr(traj.poses[0].R));
        for (std::size_t f = 0; f < 4; ++f) {
            const Arr3 expect = multiply_oracle(r0_inv, to_arr(traj.poses[f].R));
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) CHECK(std::abs(n.poses[f].R(i, j) - expect[i][j]) < 1e-12);
                CHECK(std::abs(n.poses[f].t[i] - (traj.poses[f].t[i] - traj.poses[0].t[i])) < 1e-12);
            }
        }
    }
    SUBCASE("idempotent in both translation modes") {
        Rng rng(4);
        const auto traj = random_trajectory(rng, 5);
        for (auto mode : {TranslationMode::Difference, TranslationMode::Rigid}) {
            const auto once = normalize_trajectory(traj, mode);
            const auto twice = normalize_trajectory(once, mode);
            for (std::size_t f = 0; f < 5; ++f) {
                CHECK(max_diff(once.poses[f].R, twice.poses[f].R) < 1e-12);
                CHECK((once.poses[f].t - twice.poses[f].t).norm() < 1e-12);
            }
        }
    }
    SUBCASE("shared left rotation and shared shift cancel") {
        Rng rng(5);
        const auto traj = random_trajectory(rng, 4);
        const Mat3 r_pre = random_rotation(rng);
        const Vec3 shift(0.3, -1.2, 2.0);
        CameraTrajectory moved = traj;
        for (auto& p : moved.poses) {
            p.R = r_pre * p.R;
            p.t += shift;
        }
        const auto a = normalize_trajectory(traj);
        const auto b = normalize_trajectory(moved);
        for (std::size_t f = 0; f < 4; ++f) {
            CHECK(max_diff(a.poses[f].R, b.poses[f].R) < 1e-12);
            CHECK((a.poses[f].t - b.poses[f].t).norm() < 1e-12);
        }
    }
    SUBCASE("rigid mode expresses translations in the first camera frame") {
        Rng rng(6);
        const auto traj = random_trajectory(rng, 3);
        const auto n = normalize_trajectory(traj, TranslationMode::Rigid);
        const Vec3 expect = traj.poses[0].R.transpose() * (traj.poses[2].t - traj.poses[0].t);
        CHECK((n.poses[2].t - expect).norm() < 1e-12);
    }
    SUBCASE("non-orthonormal rotation is rejected") {
        Rng rng(7);
        auto traj = random_trajectory(rng, 2);
        traj.poses[1].R *= 1.001;
        CHECK_THROWS_AS(normalize_trajectory(traj), ValidationError);
        CHECK_THROWS_AS(normalize_trajectory(CameraTrajectory{}), ContractError);
    }
}

TEST_CASE("pixel_ray") {
    SUBCASE("on-axis ray of an identity camera") {
        CameraPose p;
        p.K = make_intrinsics(10.0, 10.0, 7.5, 7.5);  // pixel (7, 7) centre sits on the axis
        const auto ray = pixel_ray(p, 7, 7, RayMode::Geometric);
        CHECK((ray.direction - Vec3(0, 0, 1)).norm() < 1e-15);
        CHECK(ray.moment.norm() == 0.0);
    }
    SUBCASE("moment of a translated camera") {
        CameraPose p;
        p.t = Vec3(1, 0, 0);
        p.K = make_intrinsics(10.0, 10.0, 7.5, 7.5);
        const auto ray = pixel_ray(p, 7, 7, RayMode::Geometric);
        CHECK((ray.moment - Vec3(0, -1, 0)).norm() < 1e-15);
    }
    SUBCASE("forward-K mode uses R K [w, h, 1] + t") {
        CameraPose p;
        p.t = Vec3(0.5, -0.25, 1.0);
        p.K = make_intrinsics(2.0, 3.0, 1.0, 1.0);
        const auto ray = pixel_ray(p, 2, 1, RayMode::ForwardK);
        const Vec3 d = p.K * Vec3(1, 2, 1) + p.t;
        CHECK((ray.direction - d.normalized()).norm() < 1e-15);
        CHECK((ray.moment - p.t.cross(d.normalized())).norm() < 1e-15);
    }
    SUBCASE("unit direction and orthogonal moment in both modes") {
        Rng rng(8);
        std::uniform_int_distribution<int> px(0, 15);
        for (int i = 0; i < 2000; ++i) {
            const auto pose = random_pose(rng);
            for (auto mode : {RayMode::Geometric, RayMode::ForwardK}) {
                const auto ray = pixel_ray(pose, px(rng), px(rng), mode);
                CHECK(std::abs(ray.direction.norm() - 1.0) < 1e-12);
                CHECK(std::abs(ray.moment.dot(ray.direction)) < 1e-12);
            }
        }
    }
    SUBCASE("singular intrinsics are rejected") {
        CameraPose p;
        p.K = make_intrinsics(0.0, 1.0, 0.0, 0.0);
        CHECK_THROWS_AS(pixel_ray(p, 0, 0), ValidationError);
    }
}

TEST_CASE("plucker_volume") {
    Rng rng(9);
    const auto traj = normalize_trajectory(random_trajectory(rng, 2));
    SUBCASE("shape contract") {
        const auto vol = plucker_volume(traj, 4, 4);
        CHECK(vol.data.shape() == Shape{6, 2, 4, 4});
    }
    SUBCASE("first normalized frame has zero moments everywhere") {
        for (auto mode : {RayMode::Geometric, RayMode::ForwardK}) {
            const auto vol = plucker_volume(traj, 4, 4, mode);
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t i = 0; i < 16; ++i) CHECK(vol.data[c * 32 + i] == 0.0);
        }
    }
    SUBCASE("elementwise equal to scalar pixel_ray calls") {
        const auto vol = plucker_volume(traj, 3, 5, RayMode::Geometric);
        for (std::size_t f = 0; f < 2; ++f)
            for (std::size_t h = 0; h < 3; ++h)
                for (std::size_t w = 0; w < 5; ++w) {
                    const auto ray = pixel_ray(traj.poses[f], h, w);
                    const std::size_t base = f * 15 + h * 5 + w;
                    for (int c = 0; c < 3; ++c) {
                        CHECK(vol.data[c * 30 + base] == ray.moment[c]);
                        CHECK(vol.data[(3 + c) * 30 + base] == ray.direction[c]);
                    }
                }
    }
    SUBCASE("unnormalized trajectory is a contract error") {
        CHECK_THROWS_AS(plucker_volume(random_trajectory(rng, 2), 4, 4), ContractError);
    }
}

TEST_CASE("raw camera volume repeats 21 values per frame") {
    Rng rng(10);
    const auto traj = random_trajectory(rng, 3);
    const Tensor vol = raw_camera_volume(traj, 2, 2);
    CHECK(vol.shape() == Shape{21, 3, 2, 2});
    const auto flat = flatten_camera(traj.poses[1]);
    for (std::size_t c = 0; c < 21; ++c)
        for (std::size_t i = 0; i < 4; ++i) CHECK(vol[(c * 3 + 1) * 4 + i] == flat[c]);
    CHECK(flat[9] == traj.poses[1].t[0]);
    CHECK(flat[20] == 1.0);
}
