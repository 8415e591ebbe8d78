#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "camfit/camera.hpp"
#include "camfit/layers.hpp"
#include "camfit/tokenizer.hpp"

namespace camfit {

enum class Variant { Full, NoPlucker, NoControlNet, NoWeightCopy, AddContext, PluckerContext, Base };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
const std::vector<Variant>& ablation_variants();

struct ModelConfig {
    std::size_t blocks = 2;
    std::size_t latents = 32;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t patch_h = 4, patch_w = 4;
    std::size_t frames = 8, height = 16, width = 16, channels = 3;
    std::size_t self_attn_per_block = 4;
    std::size_t ff_mult = 4;
    std::size_t conv_kernel = 3;
    std::size_t vocab = 16;
    std::size_t sigma_features = 32;
    Variant variant = Variant::Base;
    RayMode ray_mode = RayMode::Geometric;

    void validate() const;
    PatchGeometry geometry() const;
    // Model input carries one extra channel holding the frame mask.
    std::size_t input_patch_dim() const { return patch_h * patch_w * (channels + 1); }
    std::size_t output_patch_dim() const { return patch_h * patch_w * channels; }
    // Same architecture (everything except the variant).
    bool same_shape(const ModelConfig& o) const;
};

struct CoreLayerParams {
    AttentionParams attn;
    FeedForwardParams ff;
};

// Zero-gated read branch attending over camera-augmented tokens.
struct CameraBranchParams {
    AttentionParams attn;
    FeedForwardParams ff;
    Conv1dParams conv;
    // Keys come from camera + video tokens; otherwise from the camera tokens alone.
    bool over_patches = true;

    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct FitBlockParams {
    AttentionParams read_attn;
    FeedForwardParams read_ff;
    std::optional<CameraBranchParams> cam;
    std::vector<CoreLayerParams> core;
    AttentionParams write_attn;
    FeedForwardParams write_ff;

    static FitBlockParams init(const ModelConfig& cfg, Rng& rng);
    void visit_base(const std::string& prefix, const ParamVisitor& fn);
    void visit_camera(const std::string& prefix, const ParamVisitor& fn);
};

struct ModelParams {
    ModelConfig config;
    Linear patch_embed;
    Linear sigma_first, sigma_second;
    Tensor latent_init;    // [M, d]
    Tensor context_table;  // [vocab, d]
    std::vector<FitBlockParams> blocks;
    LayerNormParams out_norm;
    Linear out_proj;

    // Camera pathway; which members exist depends on the variant.
    std::optional<PluckerMlpParams> plucker_mlp;
    std::optional<Linear> token_inject;    // no_controlnet
    std::optional<Linear> context_inject;  // add_context
    std::optional<Linear> plucker_to_context;  // plucker_context

    void visit(const ParamVisitor& fn);
    void visit_base(const ParamVisitor& fn);
    // Parameters introduced by the variant on top of the base network.
    void visit_camera(const ParamVisitor& fn);
    std::vector<std::pair<std::string, Tensor>> named_parameters();
    std::size_t parameter_count();
    ModelParams clone() const;
};

// Camera tensor consumed by a variant: Plücker [6, F, H, W] or raw [21, F, H, W].
// Empty for the base variant.
Tensor camera_features(const ModelConfig& cfg, const CameraTrajectory& normalized);

struct ModelInput {
    Tensor video;               // [F, H, W, C], already scaled by c_in
    std::vector<bool> mask;     // per frame; empty means no frame is observed
    Tensor camera;              // from camera_features
    std::size_t condition = 0;  // scene descriptor id
    double sigma = 1.0;
};

Tensor read_standard(const FitBlockParams& p, const Tensor& latents, const Tensor& video_tokens);
Tensor read_camera(const FitBlockParams& p, const Tensor& latents, const Tensor& video_tokens,
                   const Tensor& camera_tokens);

struct BlockOutput {
    Tensor video_tokens;
    Tensor latents;
};

// camera_tokens may be undefined; it is only read when the block has a camera branch.
BlockOutput fit_block_forward(const FitBlockParams& p, const Tensor& video_tokens,
                              const Tensor& camera_tokens, const Tensor& latents);

Tensor sigma_features(double sigma, std::size_t count);

// Raw network output F_theta, shaped [F, H, W, C].
Tensor model_forward(const ModelParams& params, const ModelInput& input);

// Fresh base network with a zero output projection.
ModelParams init_base(const ModelConfig& cfg, Rng& rng);
// Adds the camera branch to a block: weight copy or fresh draw, zero Conv_res.
void init_camera_branch(FitBlockParams& block, const ModelConfig& cfg, Variant variant, Rng& rng);
// Deep copy of `base` extended with the camera pathway of `variant`.
ModelParams attach_variant(const ModelParams& base, Variant variant, Rng& rng);
// init_base followed by attach_variant for cfg.variant.
ModelParams build_variant(const ModelConfig& cfg, Rng& rng);

// Marks only the variant's new parameters trainable (everything for base).
void set_trainable(ModelParams& params);

}  // namespace camfit
