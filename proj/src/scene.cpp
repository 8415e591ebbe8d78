#include "camfit/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace camfit {

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat3 axis_rotation(int axis, double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, Vec3::Unit(axis)).toRotationMatrix();
}

Vec3 hsv(double hue_deg, double s, double v) {
    const double h = std::fmod(std::fmod(hue_deg, 360.0) + 360.0, 360.0) / 60.0;
    const double c = v * s, x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0)), m = v - c;
    Vec3 rgb;
    switch (static_cast<int>(h)) {
        case 0: rgb = {c, x, 0}; break;
        case 1: rgb = {x, c, 0}; break;
        case 2: rgb = {0, c, x}; break;
        case 3: rgb = {0, x, c}; break;
        case 4: rgb = {x, 0, c}; break;
        default: rgb = {c, 0, x}; break;
    }
    return rgb + Vec3::Constant(m);
}

double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }

constexpr std::array<std::pair<TrajectoryKind, std::string_view>, 7> kKindNames{{
    {TrajectoryKind::ZoomIn, "zoom_in"},
    {TrajectoryKind::ZoomOut, "zoom_out"},
    {TrajectoryKind::PanH, "pan_h"},
    {TrajectoryKind::PanV, "pan_v"},
    {TrajectoryKind::Orbit, "orbit"},
    {TrajectoryKind::RotateOnly, "rotate_only"},
    {TrajectoryKind::RandomSmooth, "random_smooth"},
}};

constexpr double kOrbitDistance = 4.0;

}  // namespace

void SceneSpec::validate(std::size_t vocab) const {
    if (descriptor >= vocab)
        throw ValidationError("scene descriptor " + std::to_string(descriptor) + " outside vocabulary");
    for (const auto& s : spheres)
        if (!(s.radius > 0.0)) throw ValidationError("sphere radius must be positive");
    if (has_plane && !(plane.cell > 0.0)) throw ValidationError("checker cell size must be positive");
}

SceneSpec to_camera_frame(const SceneSpec& scene, const Mat3& R, const Vec3& t) {
    const Mat3 Rt = R.transpose();
    SceneSpec out = scene;
    for (auto& s : out.spheres) {
        s.center = Rt * (s.center - t);
        s.velocity = Rt * s.velocity;
    }
    auto& p = out.plane;
    p.normal = Rt * scene.plane.normal;
    p.u = Rt * scene.plane.u;
    p.v = Rt * scene.plane.v;
    p.origin = Rt * (scene.plane.origin - t);
    p.offset = p.normal.dot(p.origin);
    out.light = Rt * scene.light;
    return out;
}

Vec3 shade_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& direction, double time) {
    double best = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::Zero(), albedo = scene.background;
    bool hit = false;
    for (const auto& s : scene.spheres) {
        const Vec3 c = s.center + time * s.velocity;
        const Vec3 oc = origin - c;
        const double b = oc.dot(direction);
        const double disc = b * b - (oc.squaredNorm() - s.radius * s.radius);
        if (disc < 0.0) continue;
        const double root = std::sqrt(disc);
        double d = -b - root;
        if (d <= 1e-9) d = -b + root;
        if (d <= 1e-9 || d >= best) continue;
        best = d;
        normal = (origin + d * direction - c) / s.radius;
        albedo = s.albedo;
        hit = true;
    }
    if (scene.has_plane) {
        const auto& p = scene.plane;
        const double denom = p.normal.dot(direction);
        if (std::abs(denom) > 1e-12) {
            const double d = (p.offset - p.normal.dot(origin)) / denom;
            if (d > 1e-9 && d < best) {
                best = d;
                const Vec3 rel = origin + d * direction - p.origin;
                const auto iu = static_cast<long long>(std::floor(rel.dot(p.u) / p.cell));
                const auto iv = static_cast<long long>(std::floor(rel.dot(p.v) / p.cell));
                albedo = ((iu + iv) % 2 == 0) ? p.albedo_a : p.albedo_b;
                normal = denom < 0.0 ? p.normal : Vec3(-p.normal);
                hit = true;
            }
        }
    }
    if (!hit) return scene.background;
    const double lambert = std::max(0.0, normal.dot(scene.light));
    return (albedo * (scene.ambient + (1.0 - scene.ambient) * lambert)).cwiseMin(1.0);
}

Tensor render_frame(const SceneSpec& scene, const CameraPose& pose, std::size_t height, std::size_t width,
                    double time) {
    validate_pose(pose);
    std::vector<double> out(height * width * 3);
    for (std::size_t h = 0; h < height; ++h)
        for (std::size_t w = 0; w < width; ++w) {
            const Vec3 d = pixel_ray(pose, h, w, RayMode::Geometric).direction;
            const Vec3 c = shade_ray(scene, pose.t, d, time);
            for (int k = 0; k < 3; ++k) out[(h * width + w) * 3 + k] = c[k];
        }
    return Tensor({height, width, 3}, std::move(out));
}

Tensor render_video(const SceneSpec& scene, const CameraTrajectory& traj, std::size_t height, std::size_t width) {
    const std::size_t F = traj.frames();
    const std::size_t frame = height * width * 3;
    std::vector<double> out(F * frame);
#pragma omp parallel for schedule(static)
    for (std::size_t f = 0; f < F; ++f) {
        const Tensor img = render_frame(scene, traj.poses[f], height, width, static_cast<double>(f));
        std::copy(img.data().begin(), img.data().end(), out.begin() + static_cast<std::ptrdiff_t>(f * frame));
    }
    return Tensor({F, height, width, 3}, std::move(out));
}

std::string_view trajectory_kind_name(TrajectoryKind k) {
    for (const auto& [value, name] : kKindNames)
        if (value == k) return name;
    throw ValidationError("unknown trajectory kind");
}

TrajectoryKind parse_trajectory_kind(std::string_view name) {
    for (const auto& [value, n] : kKindNames)
        if (n == name) return value;
    throw ValidationError("unknown trajectory kind '" + std::string(name) + "'");
}

const std::vector<TrajectoryKind>& all_trajectory_kinds() {
    static const std::vector<TrajectoryKind> kinds{
        TrajectoryKind::ZoomIn, TrajectoryKind::ZoomOut,    TrajectoryKind::PanH,        TrajectoryKind::PanV,
        TrajectoryKind::Orbit,  TrajectoryKind::RotateOnly, TrajectoryKind::RandomSmooth};
    return kinds;
}

CameraTrajectory make_trajectory(const TrajectorySpec& spec, Rng& rng) {
    if (spec.frames == 0) throw ValidationError("trajectory needs at least one frame");
    if (spec.frames < 2 && spec.kind != TrajectoryKind::RotateOnly)
        throw ValidationError("motion trajectories need at least two frames");
    const double angle = spec.angle_deg * kPi / 180.0;
    const double s = spec.translation;
    const Mat3 K = intrinsics_from_fov(spec.height, spec.width, spec.fov_deg);

    int axis = 1;
    Vec3 move_dir = Vec3::UnitZ(), rot_axis = Vec3::UnitY();
    if (spec.kind == TrajectoryKind::RotateOnly) {
        axis = std::uniform_int_distribution<int>(0, 2)(rng);
    } else if (spec.kind == TrajectoryKind::RandomSmooth) {
        std::normal_distribution<double> n(0.0, 1.0);
        move_dir = Vec3(n(rng), 0.3 * n(rng), n(rng)).normalized();
        rot_axis = Vec3(0.3 * n(rng), n(rng), 0.2 * n(rng)).normalized();
    }

    CameraTrajectory traj;
    const double denom = spec.frames > 1 ? static_cast<double>(spec.frames - 1) : 1.0;
    for (std::size_t f = 0; f < spec.frames; ++f) {
        const double a = static_cast<double>(f) / denom;
        CameraPose p;
        p.K = K;
        switch (spec.kind) {
            case TrajectoryKind::ZoomIn: p.t = Vec3(0, 0, s * a); break;
            case TrajectoryKind::ZoomOut: p.t = Vec3(0, 0, -s * a); break;
            case TrajectoryKind::PanH: p.t = Vec3(s * a, 0, 0); break;
            case TrajectoryKind::PanV: p.t = Vec3(0, -s * a, 0); break;
            case TrajectoryKind::Orbit: {
                p.R = axis_rotation(1, angle * a);
                const Vec3 target(0, 0, kOrbitDistance);
                p.t = target - p.R * target;
                break;
            }
            case TrajectoryKind::RotateOnly: p.R = axis_rotation(axis, angle * a); break;
            case TrajectoryKind::RandomSmooth: {
                const double e = smoothstep(a);
                p.R = Eigen::AngleAxisd(angle * e, rot_axis).toRotationMatrix();
                p.t = s * e * move_dir;
                break;
            }
        }
        traj.poses.push_back(p);
    }
    // Frame 0 is the identity pose for every kind, so this only sets the flag.
    return normalize_trajectory(traj);
}

SceneSpec random_scene(std::uint32_t descriptor, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SceneSpec scene;
    scene.descriptor = descriptor;
    const std::size_t count = 1 + descriptor % 3;
    const double hue = 360.0 * static_cast<double>(descriptor) / 16.0;
    for (std::size_t i = 0; i < count; ++i) {
        Sphere s;
        s.radius = 0.35 + 0.45 * u(rng);
        s.center = Vec3(-1.4 + 2.8 * u(rng), 1.0 - s.radius, 2.5 + 2.5 * u(rng));
        s.albedo = hsv(hue + 40.0 * (u(rng) - 0.5) + 120.0 * static_cast<double>(i), 0.75, 0.95);
        scene.spheres.push_back(s);
    }
    if (descriptor % 2 == 1) {
        scene.plane.albedo_a = Vec3(0.9, 0.8, 0.65);
        scene.plane.albedo_b = Vec3(0.35, 0.25, 0.2);
    }
    scene.plane.cell = 0.5 + 0.25 * static_cast<double>((descriptor / 2) % 3);
    return scene;
}

Rng sample_rng(std::uint64_t seed, std::uint64_t scene_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(scene_id), static_cast<std::uint32_t>(scene_id >> 32)};
    return Rng(seq);
}

namespace {

struct Draw {
    SceneSpec scene;
    TrajectorySpec traj;
};

Draw draw_scene(const SynthConfig& cfg, Rng& rng) {
    const auto descriptor = std::uniform_int_distribution<std::uint32_t>(
        0, static_cast<std::uint32_t>(cfg.vocab - 1))(rng);
    Draw d;
    d.scene = random_scene(descriptor, rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    d.traj.kind = cfg.kinds[std::uniform_int_distribution<std::size_t>(0, cfg.kinds.size() - 1)(rng)];
    d.traj.angle_deg = cfg.max_angle_deg * (0.25 + 0.75 * u(rng)) * (u(rng) < 0.5 ? -1.0 : 1.0);
    d.traj.translation = (cfg.min_translation + (cfg.max_translation - cfg.min_translation) * u(rng));
    if (d.traj.kind == TrajectoryKind::PanH || d.traj.kind == TrajectoryKind::PanV)
        d.traj.translation *= u(rng) < 0.5 ? -1.0 : 1.0;
    d.traj.frames = cfg.frames;
    d.traj.height = cfg.height;
    d.traj.width = cfg.width;
    d.traj.fov_deg = cfg.fov_deg;
    return d;
}

}  // namespace

SceneSpec scene_for(std::uint64_t scene_id, const SynthConfig& cfg, std::uint64_t seed) {
    Rng rng = sample_rng(seed, scene_id);
    return draw_scene(cfg, rng).scene;
}

Tensor to_signed_range(const Tensor& unit) {
    std::vector<double> out(unit.data().begin(), unit.data().end());
    for (double& v : out) v = 2.0 * v - 1.0;
    return Tensor(unit.shape(), std::move(out));
}

Sample synthesize_sample(std::uint64_t scene_id, const SynthConfig& cfg, std::uint64_t seed) {
    Rng rng = sample_rng(seed, scene_id);
    const Draw d = draw_scene(cfg, rng);
    Sample s;
    s.scene_id = scene_id;
    s.descriptor = d.scene.descriptor;
    s.kind = d.traj.kind;
    s.trajectory = make_trajectory(d.traj, rng);
    s.video = to_signed_range(render_video(d.scene, s.trajectory, cfg.height, cfg.width));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    s.mask.assign(cfg.frames, false);
    if (cfg.frames > 1 && u(rng) < cfg.observed_first_prob) {
        s.mask[0] = true;
        for (std::size_t f = 1; f + 1 < cfg.frames; ++f) s.mask[f] = u(rng) < 0.1;
    }
    return s;
}

DatasetSplit build_dataset(std::size_t n_train, std::size_t n_test, const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.kinds.empty()) throw ValidationError("no trajectory kinds configured");
    DatasetSplit split;
    split.train.resize(n_train);
    split.test.resize(n_test);
    const std::size_t total = n_train + n_test;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < total; ++i) {
        Sample s = synthesize_sample(i, cfg, seed);
        if (i < n_train)
            split.train[i] = std::move(s);
        else
            split.test[i - n_train] = std::move(s);
    }
    return split;
}

}  // namespace camfit
