#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "camfit/diffusion.hpp"
#include "camfit/io.hpp"
#include "camfit/model.hpp"
#include "camfit/optim.hpp"
#include "camfit/scene.hpp"

namespace camfit {

// Everything a run needs; stored as flat `key = value` text next to its outputs.
struct RunConfig {
    ModelConfig model;
    DiffusionConfig diffusion;
    OptimizerConfig optimizer;
    SynthConfig synth;  // frames / height / width follow the model

    std::string data_dir;
    std::size_t n_train = 2048, n_test = 256;

    std::string base_checkpoint;
    std::size_t batch = 16;
    std::size_t steps = 3000;
    std::size_t finetune_steps = 2000;  // ablation fine-tunes; `steps` covers the base
    double warmup_fraction = 0.1;
    double peak_lr = 5e-3, final_lr = 1.5e-3;
    std::size_t checkpoint_every = 500;

    std::size_t eval_samples = 64;
    std::size_t swap_samples = 8;

    std::uint64_t seed = 0;
    std::string out_dir;

    RunConfig();
    void validate() const;
    LrSchedule schedule() const;
    SynthConfig synth_config() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);
// Sets one key; throws ValidationError for unknown keys or bad values.
void set_run_option(RunConfig& cfg, const std::string& key, const std::string& value);

// Default output root: $CAMFIT_OUT_ROOT or ./runs.
std::string default_out_root();

std::string train_data_path(const RunConfig& cfg);
std::string test_data_path(const RunConfig& cfg);

struct GenDataSummary {
    std::string train_path, test_path;
    std::size_t n_train = 0, n_test = 0;
    Shape video_shape;
};

GenDataSummary generate_data(const RunConfig& cfg);

// Model inputs for a sample; the camera tensor depends on the variant.
ModelInput model_input(const ModelConfig& cfg, const Sample& sample);

struct LossRow {
    std::size_t step;
    double lr;
    double loss;
};

struct TrainResult {
    ModelParams params;
    std::vector<LossRow> log;
    std::string checkpoint;
};

// Base variant trains every parameter from scratch; other variants load
// cfg.base_checkpoint and fine-tune only their camera parameters. Writes
// config.txt, loss.csv, periodic ckpt_<step>.bin and final.bin into out_dir.
// A non-empty `resume` continues from that checkpoint.
TrainResult run_training(const RunConfig& cfg, const std::vector<Sample>& train, const std::string& out_dir,
                         const std::string& resume = "");

struct FrozenAudit {
    bool ok = true;
    std::vector<std::string> changed;      // base tensors that differ
    std::vector<std::string> missing;      // base tensors absent from the tuned model
    std::vector<std::string> wrong_trainable;  // trainable set differs from the new-parameter set
};

FrozenAudit audit_frozen(const ModelParams& base, ModelParams& tuned);

// 10 log10(1 / mse) on the [0, 1] range, capped at 99 dB.
inline constexpr double kPsnrCap = 99.0;
double psnr_from_mse(double mse);
// Videos in [-1, 1]; frames [first, F).
double video_psnr(const Tensor& a, const Tensor& b, std::size_t first_frame = 0);

// Samples a video for `descriptor` along a normalized trajectory. With
// `anchor`, frame 0 of anchor is the observed frame.
Tensor generate(const ModelParams& params, std::uint32_t descriptor, const CameraTrajectory& traj,
                std::uint64_t seed, const DiffusionConfig& dcfg, const Tensor& anchor = Tensor());

// Mean |gen(T1) - gen(T2)| over frames 1..F-1 with the same seed and anchor.
double swap_divergence(const ModelParams& params, const Sample& sample, const CameraTrajectory& t1,
                       const CameraTrajectory& t2, std::uint64_t seed, const DiffusionConfig& dcfg);

struct EvalReport {
    std::string variant;
    std::size_t samples = 0;
    double psnr_mean = 0.0, psnr_std = 0.0;
    std::map<std::string, double> psnr_by_kind;
    double swap_divergence = 0.0;
    std::size_t train_steps = 0, batch = 0;
};

// Conditional PSNR on held-out samples given frame 0, plus zoom-in vs pan
// trajectory-swap divergence. Throws ValidationError if a test scene id is in
// `train_ids`.
EvalReport evaluate(const ModelParams& params, const std::vector<Sample>& test,
                    const std::set<std::uint64_t>& train_ids, const RunConfig& cfg);
std::string eval_json(const EvalReport& r);
EvalReport eval_from_json(const std::string& text);
std::string eval_table(const EvalReport& r);

std::set<std::uint64_t> scene_ids(const std::string& dataset_path);

struct AblationRow {
    Variant variant;
    std::vector<double> psnr;  // one per seed
    double mean = 0.0, stddev = 0.0;
    double gap_to_full = 0.0;  // full mean minus this mean
    double t_stat = 0.0;       // Welch t of full vs this row
};

struct AblationReport {
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> rows;  // fixed order: ablation_variants()
    std::optional<double> base_psnr;
    std::size_t steps = 0, batch = 0;
    bool parity_ok = false;      // full - no_weight_copy <= 0.5 dB
    bool separation_ok = false;  // full beats the other four by >= 1 dB
};

// Refuses (ValidationError) unless every run used the same steps and batch.
AblationReport summarize_ablation(const std::map<Variant, std::vector<EvalReport>>& runs,
                                  const std::vector<std::uint64_t>& seeds,
                                  std::optional<double> base_psnr = std::nullopt);
std::string ablation_markdown(const AblationReport& r);
std::string ablation_json(const AblationReport& r);
AblationReport ablation_from_json(const std::string& text);

// Full study: data, base, six fine-tunes per seed, eval, report. Completed
// stages (final.bin / eval.json present) are reused.
AblationReport run_ablation(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds);

}  // namespace camfit
