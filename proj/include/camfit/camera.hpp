#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "camfit/tensor.hpp"

namespace camfit {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

// Pinhole camera. R and t map camera coordinates to world coordinates
// (x_world = R x_cam + t), so t is the camera centre. K has zero skew.
struct CameraPose {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    Mat3 K = Mat3::Identity();
};

struct CameraTrajectory {
    std::vector<CameraPose> poses;
    bool normalized = false;

    std::size_t frames() const { return poses.size(); }
};

// Direction formula for per-pixel rays.
//  Geometric: d = R K^-1 [w + 0.5, h + 0.5, 1]^T
//  ForwardK:  d = R K [w, h, 1]^T + t
enum class RayMode { Geometric, ForwardK };

// Translation rule used when re-expressing poses relative to frame 0.
//  Difference: t'_f = t_f - t_0
//  Rigid:      t'_f = R_0^T (t_f - t_0), the exact change of world frame
enum class TranslationMode { Difference, Rigid };

inline constexpr double kRotationTolerance = 1e-9;

Mat3 make_intrinsics(double fx, double fy, double cx, double cy);
// Symmetric pinhole with the given horizontal field of view and a centred principal point.
Mat3 intrinsics_from_fov(std::size_t height, std::size_t width, double horizontal_fov_deg);
// Rescales pixel-unit intrinsics to a new resolution.
Mat3 rescale_intrinsics(const Mat3& K, double sx, double sy);

// Throws ValidationError unless R^T R = I and det R = +1 within `tol`.
void validate_rotation(const Mat3& R, double tol = kRotationTolerance);
// Throws ValidationError unless K is upper triangular, skew-free, K22 = 1 and invertible.
void validate_intrinsics(const Mat3& K);
void validate_pose(const CameraPose& pose, double tol = kRotationTolerance);

// R'_f = R_0^-1 R_f and t'_f per `mode`; intrinsics untouched.
CameraTrajectory normalize_trajectory(const CameraTrajectory& traj,
                                      TranslationMode mode = TranslationMode::Difference);

struct PluckerRay {
    Vec3 direction;  // unit
    Vec3 moment;     // t x direction
};

PluckerRay pixel_ray(const CameraPose& pose, std::size_t row, std::size_t col,
                     RayMode mode = RayMode::Geometric);

// 6 x F x H x W volume; channels 0..2 moment, 3..5 direction.
struct PluckerVolume {
    Tensor data;

    std::size_t frames() const { return data.dim(1); }
    std::size_t height() const { return data.dim(2); }
    std::size_t width() const { return data.dim(3); }
};

PluckerVolume plucker_volume(const CameraTrajectory& traj, std::size_t height, std::size_t width,
                             RayMode mode = RayMode::Geometric);

// Per frame: R row-major (9), t (3), K row-major (9).
inline constexpr std::size_t kRawCameraValues = 21;
std::vector<double> flatten_camera(const CameraPose& pose);
// kRawCameraValues x F x H x W, each frame's flattened matrices repeated over the grid.
Tensor raw_camera_volume(const CameraTrajectory& traj, std::size_t height, std::size_t width);

}  // namespace camfit
