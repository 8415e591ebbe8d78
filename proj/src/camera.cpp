#include "camfit/camera.hpp"

#include <cmath>
#include <string>

namespace camfit {

Mat3 make_intrinsics(double fx, double fy, double cx, double cy) {
    Mat3 K;
    K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return K;
}

Mat3 intrinsics_from_fov(std::size_t height, std::size_t width, double horizontal_fov_deg) {
    const double f = 0.5 * static_cast<double>(width) /
                     std::tan(0.5 * horizontal_fov_deg * M_PI / 180.0);
    return make_intrinsics(f, f, 0.5 * static_cast<double>(width), 0.5 * static_cast<double>(height));
}

Mat3 rescale_intrinsics(const Mat3& K, double sx, double sy) {
    return make_intrinsics(K(0, 0) * sx, K(1, 1) * sy, K(0, 2) * sx, K(1, 2) * sy);
}

void validate_rotation(const Mat3& R, double tol) {
    if (!R.allFinite()) throw ValidationError("rotation has non-finite entries");
    const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > tol)
        throw ValidationError("rotation not orthonormal (max |R^T R - I| = " + std::to_string(ortho) + ")");
    const double det = R.determinant();
    if (std::abs(det - 1.0) > tol)
        throw ValidationError("rotation determinant " + std::to_string(det) + " != +1");
}

void validate_intrinsics(const Mat3& K) {
    if (!K.allFinite()) throw ValidationError("intrinsics have non-finite entries");
    if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0)
        throw ValidationError("intrinsics must be upper triangular");
    if (K(0, 1) != 0.0) throw ValidationError("intrinsics skew must be zero");
    if (K(2, 2) != 1.0) throw ValidationError("intrinsics K[2][2] must be 1");
    if (K(0, 0) == 0.0 || K(1, 1) == 0.0) throw ValidationError("intrinsics are singular");
}

void validate_pose(const CameraPose& pose, double tol) {
    validate_rotation(pose.R, tol);
    if (!pose.t.allFinite()) throw ValidationError("translation has non-finite entries");
    validate_intrinsics(pose.K);
}

CameraTrajectory normalize_trajectory(const CameraTrajectory& traj, TranslationMode mode) {
    if (traj.poses.empty()) throw ContractError("cannot normalize an empty trajectory");
    for (const auto& p : traj.poses) validate_pose(p);
    const Mat3 r0_inv = traj.poses.front().R.transpose();
    const Vec3 t0 = traj.poses.front().t;
    CameraTrajectory out;
    out.normalized = true;
    out.poses.reserve(traj.poses.size());
    for (const auto& p : traj.poses) {
        CameraPose q;
        q.R = r0_inv * p.R;
        q.t = mode == TranslationMode::Difference ? Vec3(p.t - t0) : Vec3(r0_inv * (p.t - t0));
        q.K = p.K;
        out.poses.push_back(q);
    }
    return out;
}

PluckerRay pixel_ray(const CameraPose& pose, std::size_t row, std::size_t col, RayMode mode) {
    validate_intrinsics(pose.K);
    const double w = static_cast<double>(col);
    const double h = static_cast<double>(row);
    Vec3 d;
    if (mode == RayMode::Geometric) {
        const Mat3& K = pose.K;
        // K^-1 for a skew-free upper-triangular K.
        const Vec3 cam((w + 0.5 - K(0, 2)) / K(0, 0), (h + 0.5 - K(1, 2)) / K(1, 1), 1.0);
        d = pose.R * cam;
    } else {
        d = pose.R * (pose.K * Vec3(w, h, 1.0)) + pose.t;
    }
    const double n = d.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("degenerate ray direction");
    PluckerRay ray;
    ray.direction = d / n;
    ray.moment = pose.t.cross(ray.direction);
    return ray;
}

PluckerVolume plucker_volume(const CameraTrajectory& traj, std::size_t height, std::size_t width,
                             RayMode mode) {
    if (!traj.normalized) throw ContractError("plucker_volume needs a normalized trajectory");
    if (traj.poses.empty() || height == 0 || width == 0)
        throw ShapeError("plucker_volume: empty trajectory or image");
    const std::size_t F = traj.poses.size();
    const std::size_t plane = height * width;
    const std::size_t stride = F * plane;
    std::vector<double> v(6 * stride);
    for (std::size_t f = 0; f < F; ++f) {
        const auto& pose = traj.poses[f];
        for (std::size_t h = 0; h < height; ++h)
            for (std::size_t w = 0; w < width; ++w) {
                const PluckerRay ray = pixel_ray(pose, h, w, mode);
                const std::size_t base = f * plane + h * width + w;
                for (int c = 0; c < 3; ++c) {
                    v[c * stride + base] = ray.moment[c];
                    v[(3 + c) * stride + base] = ray.direction[c];
                }
            }
    }
    return PluckerVolume{Tensor({6, F, height, width}, std::move(v))};
}

std::vector<double> flatten_camera(const CameraPose& pose) {
    std::vector<double> out;
    out.reserve(kRawCameraValues);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.push_back(pose.R(r, c));
    for (int r = 0; r < 3; ++r) out.push_back(pose.t[r]);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out.push_back(pose.K(r, c));
    return out;
}

Tensor raw_camera_volume(const CameraTrajectory& traj, std::size_t height, std::size_t width) {
    if (traj.poses.empty() || height == 0 || width == 0)
        throw ShapeError("raw_camera_volume: empty trajectory or image");
    const std::size_t F = traj.poses.size();
    const std::size_t plane = height * width;
    std::vector<double> v(kRawCameraValues * F * plane);
    for (std::size_t f = 0; f < F; ++f) {
        const auto flat = flatten_camera(traj.poses[f]);
        for (std::size_t c = 0; c < kRawCameraValues; ++c)
            std::fill_n(v.begin() + static_cast<long>((c * F + f) * plane), plane, flat[c]);
    }
    return Tensor({kRawCameraValues, F, height, width}, std::move(v));
}

}  // namespace camfit
