#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "camfit/camera.hpp"
#include "camfit/tensor.hpp"

namespace camfit {

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    Vec3 albedo = Vec3::Constant(0.8);
    Vec3 velocity = Vec3::Zero();  // scene units per frame
};

// Infinite plane normal . x = offset with a checkerboard laid out along u, v.
struct CheckerPlane {
    Vec3 normal = Vec3(0, -1, 0);
    double offset = -1.0;  // y = 1 in the default y-down world
    Vec3 u = Vec3(1, 0, 0), v = Vec3(0, 0, 1);
    Vec3 origin = Vec3(0, 1, 0);
    double cell = 0.5;
    Vec3 albedo_a = Vec3(0.85, 0.85, 0.85);
    Vec3 albedo_b = Vec3(0.25, 0.25, 0.25);
};

struct SceneSpec {
    std::uint32_t descriptor = 0;
    std::vector<Sphere> spheres;
    bool has_plane = true;
    CheckerPlane plane;
    Vec3 background = Vec3(0.55, 0.7, 0.9);
    Vec3 light = Vec3(-0.3, -1.0, -0.5).normalized();  // towards the light
    double ambient = 0.25;

    void validate(std::size_t vocab) const;
};

// Scene re-expressed in the coordinates of a camera with pose (R, t).
SceneSpec to_camera_frame(const SceneSpec& scene, const Mat3& R, const Vec3& t);

// Colour in [0, 1] seen along a ray at a given frame time.
Vec3 shade_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& direction, double time = 0.0);

// H x W x 3 in [0, 1], rays cast through pixel centres.
Tensor render_frame(const SceneSpec& scene, const CameraPose& pose, std::size_t height, std::size_t width,
                    double time = 0.0);
// F x H x W x 3 in [0, 1].
Tensor render_video(const SceneSpec& scene, const CameraTrajectory& traj, std::size_t height, std::size_t width);

enum class TrajectoryKind { ZoomIn, ZoomOut, PanH, PanV, Orbit, RotateOnly, RandomSmooth };

std::string_view trajectory_kind_name(TrajectoryKind k);
TrajectoryKind parse_trajectory_kind(std::string_view name);
const std::vector<TrajectoryKind>& all_trajectory_kinds();

struct TrajectorySpec {
    TrajectoryKind kind = TrajectoryKind::ZoomIn;
    double angle_deg = 20.0;
    double translation = 1.0;
    std::size_t frames = 8;
    std::size_t height = 16, width = 16;
    double fov_deg = 60.0;
};

// Starts at the identity pose. `rng` is only used by rotate_only (axis choice)
// and random_smooth.
CameraTrajectory make_trajectory(const TrajectorySpec& spec, Rng& rng);

// Random scene for a descriptor class; the class fixes sphere count, palette and
// floor cell size, so only the spheres vary within a class.
SceneSpec random_scene(std::uint32_t descriptor, Rng& rng);

struct SynthConfig {
    std::size_t frames = 8, height = 16, width = 16;
    std::size_t vocab = 16;
    double fov_deg = 60.0;
    double max_angle_deg = 40.0;
    double min_translation = 0.5, max_translation = 1.5;
    double observed_first_prob = 0.75;
    std::vector<TrajectoryKind> kinds = all_trajectory_kinds();
};

struct Sample {
    std::uint64_t scene_id = 0;
    std::uint32_t descriptor = 0;
    TrajectoryKind kind = TrajectoryKind::ZoomIn;
    Tensor video;                 // F x H x W x 3 in [-1, 1]
    CameraTrajectory trajectory;  // normalized
    std::vector<bool> mask;
};

Rng sample_rng(std::uint64_t seed, std::uint64_t scene_id);

// Scene, trajectory and mask drawn from sample_rng(seed, scene_id); video in [-1, 1].
Sample synthesize_sample(std::uint64_t scene_id, const SynthConfig& cfg, std::uint64_t seed);
// The scene behind synthesize_sample(scene_id, cfg, seed).
SceneSpec scene_for(std::uint64_t scene_id, const SynthConfig& cfg, std::uint64_t seed);
// [0, 1] render mapped to the model range [-1, 1].
Tensor to_signed_range(const Tensor& unit);

struct DatasetSplit {
    std::vector<Sample> train, test;
};

// Scene ids [0, n_train) train, [n_train, n_train + n_test) test. Each sample
// is generated from its own RNG stream seeded by (seed, scene id), so splits
// never share a scene or a trajectory.
DatasetSplit build_dataset(std::size_t n_train, std::size_t n_test, const SynthConfig& cfg, std::uint64_t seed);

}  // namespace camfit
