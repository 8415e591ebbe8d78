#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "camfit/harness.hpp"
#include "json.hpp"

using namespace camfit;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string variant;
    std::string out;
    std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "flat key = value run config");
    app->add_option("--seed", c.seed, "run seed");
    app->add_option("--variant", c.variant, "base, full, no_plucker, no_controlnet, no_weight_copy, add_context, "
                                            "plucker_context");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--set", c.sets, "override a config key, KEY=VALUE")->take_all();
}

RunConfig resolve(const Common& c, const std::string& command) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
        set_run_option(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.seed = *c.seed;
    if (!c.variant.empty()) cfg.model.variant = parse_variant(c.variant);
    if (!c.out.empty()) cfg.out_dir = c.out;
    if (cfg.out_dir.empty()) {
        fs::path p = fs::path(default_out_root()) / command;
        if (command == "train") p /= std::string(variant_name(cfg.model.variant));
        cfg.out_dir = p.string();
    }
    if (cfg.data_dir.empty()) cfg.data_dir = (fs::path(default_out_root()) / "data").string();
    return cfg;
}

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw IoError("cannot write " + p.string());
    os << s;
}

void write_raw(const fs::path& p, const Tensor& t) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + p.string());
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) write_u64(os, d);
    write_f64s(os, t.data());
}

CameraTrajectory pick_frames(const CameraTrajectory& all, std::size_t frames) {
    if (all.frames() < frames)
        throw ValidationError("trajectory has " + std::to_string(all.frames()) + " poses, the model needs " +
                              std::to_string(frames));
    CameraTrajectory out;
    const std::size_t n = all.frames();
    for (std::size_t i = 0; i < frames; ++i) {
        const std::size_t idx = frames == 1 ? 0 : (i * (n - 1) + (frames - 1) / 2) / (frames - 1);
        out.poses.push_back(all.poses[idx]);
    }
    return out;
}

int cmd_gen_data(const RunConfig& cfg) {
    const GenDataSummary s = generate_data(cfg);
    std::cout << "train  " << s.n_train << " samples -> " << s.train_path << "\n";
    std::cout << "test   " << s.n_test << " samples -> " << s.test_path << "\n";
    std::cout << "video  " << shape_str(s.video_shape) << "  (frames, height, width, rgb)\n";
    return 0;
}

int cmd_train(RunConfig cfg, const std::string& base, const std::string& resume) {
    if (!base.empty()) cfg.base_checkpoint = base;
    const std::vector<Sample> train = read_dataset(train_data_path(cfg));
    std::cout << "training " << variant_name(cfg.model.variant) << " on " << train.size() << " samples for "
              << cfg.steps << " steps -> " << cfg.out_dir << "\n";
    TrainResult r = run_training(cfg, train, cfg.out_dir, resume);
    if (!r.log.empty())
        std::cout << "loss: first " << r.log.front().loss << ", last " << r.log.back().loss << "\n";
    if (cfg.model.variant != Variant::Base) {
        ModelConfig base_cfg = cfg.model;
        base_cfg.variant = Variant::Base;
        const Checkpoint b = load_checkpoint(cfg.base_checkpoint, base_cfg);
        const FrozenAudit a = audit_frozen(b.params, r.params);
        write_file(fs::path(cfg.out_dir) / "audit.txt", a.ok ? "frozen base: ok\n" : "frozen base: FAILED\n");
        std::cout << "frozen-base audit: " << (a.ok ? "ok" : "FAILED") << "\n";
        if (!a.ok) return 3;
    }
    std::cout << "checkpoint " << r.checkpoint << "\n";
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& checkpoint, const std::string& trajectory,
               const std::string& kind, std::uint64_t scene, const std::string& mask) {
    if (mask != "none" && mask != "first") throw ValidationError("--mask expects none or first");
    Checkpoint ck = load_checkpoint(checkpoint);
    const ModelConfig& m = ck.params.config;
    CameraTrajectory traj;
    if (trajectory.rfind("re10k:", 0) == 0) {
        const Re10kFile file = read_re10k(trajectory.substr(6));
        traj = pick_frames(re10k_trajectory(file, m.height, m.width), m.frames);
    } else if (trajectory == "spec") {
        TrajectorySpec spec;
        spec.kind = parse_trajectory_kind(kind);
        spec.frames = m.frames;
        spec.height = m.height;
        spec.width = m.width;
        spec.fov_deg = cfg.synth.fov_deg;
        Rng rng(cfg.seed);
        traj = make_trajectory(spec, rng);
    } else {
        throw ValidationError("--trajectory expects spec or re10k:PATH");
    }
    if (!traj.normalized) {
        std::cerr << "notice: trajectory was not normalized; re-expressed relative to its first camera\n";
        traj = normalize_trajectory(traj);
    }
    SynthConfig synth = cfg.synth_config();
    synth.frames = m.frames;
    synth.height = m.height;
    synth.width = m.width;
    const SceneSpec world = scene_for(scene, synth, cfg.seed);
    const Tensor truth = to_signed_range(render_video(world, traj, m.height, m.width));
    const Tensor gen = generate(ck.params, world.descriptor, traj, cfg.seed, cfg.diffusion,
                                mask == "first" ? truth : Tensor());
    fs::create_directories(cfg.out_dir);
    write_png((fs::path(cfg.out_dir) / "strip.png").string(), frame_strip({truth, gen}));
    write_raw(fs::path(cfg.out_dir) / "sample.f64", gen);
    nlohmann::json j{{"checkpoint", checkpoint},
                     {"variant", std::string(variant_name(m.variant))},
                     {"trajectory", trajectory},
                     {"scene", scene},
                     {"descriptor", world.descriptor},
                     {"mask", mask},
                     {"seed", cfg.seed},
                     {"psnr_frames_1_on", video_psnr(gen, truth, 1)}};
    write_file(fs::path(cfg.out_dir) / "sample.json", j.dump(2) + "\n");
    std::cout << "wrote " << (fs::path(cfg.out_dir) / "strip.png").string() << " (top: render, bottom: sample)\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
    Checkpoint ck = load_checkpoint(checkpoint);
    const std::vector<Sample> test = read_dataset(test_data_path(cfg));
    const EvalReport r = evaluate(ck.params, test, scene_ids(train_data_path(cfg)), cfg);
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "eval.json", eval_json(r));
    std::cout << eval_table(r);
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds, bool summary_only) {
    AblationReport rep;
    if (summary_only) {
        std::ifstream is(fs::path(cfg.out_dir) / "ablation.json");
        if (!is) throw IoError("no ablation.json in " + cfg.out_dir);
        std::stringstream ss;
        ss << is.rdbuf();
        rep = ablation_from_json(ss.str());
    } else {
        rep = run_ablation(cfg, seeds);
    }
    std::cout << ablation_markdown(rep);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"camera-controlled video diffusion at desk scale"};
    app.require_subcommand(1);

    Common gen_c, train_c, sample_c, eval_c, ablate_c;
    auto* gen = app.add_subcommand("gen-data", "render the synthetic train and test sets");
    add_common(gen, gen_c);

    std::string base, resume;
    auto* train = app.add_subcommand("train", "train the base network or fine-tune a variant");
    add_common(train, train_c);
    train->add_option("--base", base, "base checkpoint for fine-tuning variants");
    train->add_option("--resume", resume, "checkpoint to continue from");

    std::string checkpoint, trajectory = "spec", kind = "zoom_in", mask = "first";
    std::uint64_t scene = 0;
    auto* sample = app.add_subcommand("sample", "generate a video along a trajectory");
    add_common(sample, sample_c);
    sample->add_option("--checkpoint", checkpoint)->required();
    sample->add_option("--trajectory", trajectory, "spec or re10k:PATH");
    sample->add_option("--kind", kind, "trajectory kind for --trajectory spec");
    sample->add_option("--scene", scene, "synthetic scene id providing the frame-0 anchor and reference");
    sample->add_option("--mask", mask, "first (condition on frame 0) or none");

    std::string eval_ckpt;
    auto* eval = app.add_subcommand("eval", "conditional PSNR and trajectory-swap divergence on the test set");
    add_common(eval, eval_c);
    eval->add_option("--checkpoint", eval_ckpt)->required();

    std::vector<std::uint64_t> seeds{0, 1, 2};
    bool summary_only = false;
    auto* ablate = app.add_subcommand("ablate", "train and compare the six camera-conditioning variants");
    add_common(ablate, ablate_c);
    ablate->add_option("--seeds", seeds, "fine-tune seeds")->delimiter(',');
    ablate->add_flag("--summary", summary_only, "print the stored report without training");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen_data(resolve(gen_c, "data"));
        if (*train) return cmd_train(resolve(train_c, "train"), base, resume);
        if (*sample) return cmd_sample(resolve(sample_c, "sample"), checkpoint, trajectory, kind, scene, mask);
        if (*eval) return cmd_eval(resolve(eval_c, "eval"), eval_ckpt);
        if (*ablate) return cmd_ablate(resolve(ablate_c, "ablation"), seeds, summary_only);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
