#include "camfit/model.hpp"

#include <array>
#include <cmath>

namespace camfit {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 7> kVariantNames{{
    {Variant::Full, "full"},
    {Variant::NoPlucker, "no_plucker"},
    {Variant::NoControlNet, "no_controlnet"},
    {Variant::NoWeightCopy, "no_weight_copy"},
    {Variant::AddContext, "add_context"},
    {Variant::PluckerContext, "plucker_context"},
    {Variant::Base, "base"},
}};

bool uses_camera_branch(Variant v) {
    return v == Variant::Full || v == Variant::NoPlucker || v == Variant::NoWeightCopy ||
           v == Variant::PluckerContext;
}

bool uses_patch_mlp(Variant v) {
    return v == Variant::Full || v == Variant::NoPlucker || v == Variant::NoWeightCopy ||
           v == Variant::NoControlNet;
}

std::size_t camera_channels(Variant v) { return v == Variant::NoPlucker ? kRawCameraValues : 6; }

}  // namespace

std::string_view variant_name(Variant v) {
    for (const auto& [value, name] : kVariantNames)
        if (value == v) return name;
    throw ValidationError("unknown variant");
}

Variant parse_variant(std::string_view name) {
    for (const auto& [value, n] : kVariantNames)
        if (n == name) return value;
    throw ValidationError("unknown variant '" + std::string(name) + "'");
}

const std::vector<Variant>& ablation_variants() {
    static const std::vector<Variant> v{Variant::Full,         Variant::NoPlucker,  Variant::NoControlNet,
                                        Variant::NoWeightCopy, Variant::AddContext, Variant::PluckerContext};
    return v;
}

void ModelConfig::validate() const {
    if (blocks == 0 || latents == 0 || dim == 0 || heads == 0 || vocab == 0)
        throw ValidationError("model config: blocks, latents, dim, heads and vocab must be positive");
    if (dim % heads != 0)
        throw ValidationError("model config: dim " + std::to_string(dim) + " not divisible by heads " +
                              std::to_string(heads));
    if (conv_kernel % 2 == 0) throw ValidationError("model config: conv kernel must be odd");
    if (sigma_features == 0 || sigma_features % 2 != 0)
        throw ValidationError("model config: sigma features must be even and positive");
    geometry().validate();
}

PatchGeometry ModelConfig::geometry() const {
    return PatchGeometry{frames, height, width, channels, patch_h, patch_w};
}

bool ModelConfig::same_shape(const ModelConfig& o) const {
    return blocks == o.blocks && latents == o.latents && dim == o.dim && heads == o.heads &&
           patch_h == o.patch_h && patch_w == o.patch_w && frames == o.frames && height == o.height &&
           width == o.width && channels == o.channels && self_attn_per_block == o.self_attn_per_block &&
           ff_mult == o.ff_mult && conv_kernel == o.conv_kernel && vocab == o.vocab &&
           sigma_features == o.sigma_features && ray_mode == o.ray_mode;
}

void CameraBranchParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    attn.visit(prefix + ".attn", fn);
    ff.visit(prefix + ".ff", fn);
    conv.visit(prefix + ".conv", fn);
}

FitBlockParams FitBlockParams::init(const ModelConfig& cfg, Rng& rng) {
    const std::size_t d = cfg.dim, hidden = cfg.dim * cfg.ff_mult;
    FitBlockParams b;
    b.read_attn = AttentionParams::init(d, cfg.heads, rng);
    b.read_ff = FeedForwardParams::init(d, hidden, rng);
    for (std::size_t i = 0; i < cfg.self_attn_per_block; ++i)
        b.core.push_back({AttentionParams::init(d, cfg.heads, rng), FeedForwardParams::init(d, hidden, rng)});
    b.write_attn = AttentionParams::init(d, cfg.heads, rng);
    b.write_ff = FeedForwardParams::init(d, hidden, rng);
    return b;
}

void FitBlockParams::visit_base(const std::string& prefix, const ParamVisitor& fn) {
    read_attn.visit(prefix + ".read.attn", fn);
    read_ff.visit(prefix + ".read.ff", fn);
    for (std::size_t i = 0; i < core.size(); ++i) {
        core[i].attn.visit(prefix + ".core." + std::to_string(i) + ".attn", fn);
        core[i].ff.visit(prefix + ".core." + std::to_string(i) + ".ff", fn);
    }
    write_attn.visit(prefix + ".write.attn", fn);
    write_ff.visit(prefix + ".write.ff", fn);
}

void FitBlockParams::visit_camera(const std::string& prefix, const ParamVisitor& fn) {
    if (cam) cam->visit(prefix + ".cam", fn);
}

void ModelParams::visit_base(const ParamVisitor& fn) {
    patch_embed.visit("patch_embed", fn);
    sigma_first.visit("sigma.first", fn);
    sigma_second.visit("sigma.second", fn);
    fn("latent_init", latent_init);
    fn("context_table", context_table);
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].visit_base("blocks." + std::to_string(b), fn);
    out_norm.visit("out_norm", fn);
    out_proj.visit("out_proj", fn);
}

void ModelParams::visit_camera(const ParamVisitor& fn) {
    if (plucker_mlp) plucker_mlp->visit("plucker_mlp", fn);
    if (token_inject) token_inject->visit("token_inject", fn);
    if (context_inject) context_inject->visit("context_inject", fn);
    if (plucker_to_context) plucker_to_context->visit("plucker_to_context", fn);
    for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].visit_camera("blocks." + std::to_string(b), fn);
}

void ModelParams::visit(const ParamVisitor& fn) {
    visit_base(fn);
    visit_camera(fn);
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
    return out;
}

std::size_t ModelParams::parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
}

ModelParams ModelParams::clone() const {
    ModelParams out = *this;
    out.visit([](const std::string&, Tensor& t) {
        const bool rg = t.requires_grad();
        t = t.detach_copy();
        t.set_requires_grad(rg);
    });
    return out;
}

Tensor camera_features(const ModelConfig& cfg, const CameraTrajectory& normalized) {
    if (normalized.frames() != cfg.frames)
        throw ShapeError("trajectory has " + std::to_string(normalized.frames()) + " frames, model expects " +
                         std::to_string(cfg.frames));
    switch (cfg.variant) {
        case Variant::Base:
            return Tensor();
        case Variant::NoPlucker:
            return raw_camera_volume(normalized, cfg.height, cfg.width);
        case Variant::AddContext: {
            std::vector<double> flat;
            flat.reserve(cfg.frames * kRawCameraValues);
            for (const auto& pose : normalized.poses) {
                const auto v = flatten_camera(pose);
                flat.insert(flat.end(), v.begin(), v.end());
            }
            return Tensor({cfg.frames * kRawCameraValues}, std::move(flat));
        }
        default:
            return plucker_volume(normalized, cfg.height, cfg.width, cfg.ray_mode).data;
    }
}

Tensor read_standard(const FitBlockParams& p, const Tensor& latents, const Tensor& video_tokens) {
    return feed_forward(p.read_ff, cross_attention(p.read_attn, latents, video_tokens));
}

Tensor read_camera(const FitBlockParams& p, const Tensor& latents, const Tensor& video_tokens,
                   const Tensor& camera_tokens) {
    if (!p.cam) throw ContractError("read_camera on a block without a camera branch");
    if (p.cam->over_patches && camera_tokens.shape() != video_tokens.shape())
        throw ShapeError("camera tokens " + shape_str(camera_tokens.shape()) + " vs video tokens " +
                         shape_str(video_tokens.shape()));
    const Tensor standard = read_standard(p, latents, video_tokens);
    const Tensor keys = p.cam->over_patches ? add(camera_tokens, video_tokens) : camera_tokens;
    const Tensor branch = feed_forward(p.cam->ff, cross_attention(p.cam->attn, latents, keys));
    return add(standard, p.cam->conv(branch));
}

BlockOutput fit_block_forward(const FitBlockParams& p, const Tensor& video_tokens, const Tensor& camera_tokens,
                              const Tensor& latents) {
    Tensor z = p.cam ? read_camera(p, latents, video_tokens, camera_tokens)
                     : read_standard(p, latents, video_tokens);
    for (const auto& layer : p.core) z = feed_forward(layer.ff, self_attention(layer.attn, z));
    Tensor v = feed_forward(p.write_ff, cross_attention(p.write_attn, video_tokens, z));
    return {v, z};
}

Tensor sigma_features(double sigma, std::size_t count) {
    if (!(sigma > 0.0)) throw ContractError("sigma must be positive");
    const double c_noise = std::log(sigma) / 4.0;
    const std::size_t half = count / 2;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = half > 1 ? std::exp(std::log(100.0) * static_cast<double>(i) / static_cast<double>(half - 1))
                                     : 1.0;
        out[i] = std::cos(freq * c_noise);
        out[half + i] = std::sin(freq * c_noise);
    }
    return Tensor({1, count}, std::move(out));
}

Tensor model_forward(const ModelParams& params, const ModelInput& input) {
    const ModelConfig& cfg = params.config;
    const std::size_t F = cfg.frames, H = cfg.height, W = cfg.width, C = cfg.channels;
    if (input.video.shape() != Shape{F, H, W, C})
        throw ShapeError("model input " + shape_str(input.video.shape()) + " does not match config");
    if (!input.mask.empty() && input.mask.size() != F) throw ShapeError("frame mask length mismatch");
    if (input.condition >= cfg.vocab) throw ValidationError("condition id outside vocabulary");

    std::vector<double> packed(F * H * W * (C + 1));
    const auto src = input.video.data();
    for (std::size_t f = 0; f < F; ++f) {
        const double m = (!input.mask.empty() && input.mask[f]) ? 1.0 : 0.0;
        for (std::size_t px = 0; px < H * W; ++px) {
            const std::size_t i = f * H * W + px;
            for (std::size_t c = 0; c < C; ++c) packed[i * (C + 1) + c] = src[i * C + c];
            packed[i * (C + 1) + C] = m;
        }
    }
    const Tensor patches = patchify(Tensor({F, H, W, C + 1}, std::move(packed)), cfg.patch_h, cfg.patch_w);
    const PatchGeometry geometry = cfg.geometry();
    Tensor v = add(params.patch_embed(patches), positional_embedding(geometry, cfg.dim));

    Tensor ctx = gather_row(params.context_table, input.condition);
    Tensor camera_tokens;
    const Variant variant = cfg.variant;
    if (variant != Variant::Base && !input.camera.defined())
        throw ContractError("variant " + std::string(variant_name(variant)) + " needs camera input");
    if (uses_patch_mlp(variant)) {
        const Tensor cam = plucker_tokens(input.camera, *params.plucker_mlp, cfg.patch_h, cfg.patch_w).tokens;
        if (variant == Variant::NoControlNet)
            v = add(v, (*params.token_inject)(cam));
        else
            camera_tokens = cam;
    } else if (variant == Variant::AddContext) {
        ctx = add(ctx, (*params.context_inject)(reshape(input.camera, {1, input.camera.numel()})));
    } else if (variant == Variant::PluckerContext) {
        camera_tokens = add(ctx, (*params.plucker_to_context)(reshape(input.camera, {1, input.camera.numel()})));
    }

    const Tensor s = params.sigma_second(gelu(params.sigma_first(sigma_features(input.sigma, cfg.sigma_features))));
    Tensor z = concat_rows({add_row(params.latent_init, reshape(s, {cfg.dim})), ctx});

    for (const auto& block : params.blocks) {
        auto out = fit_block_forward(block, v, camera_tokens, z);
        v = out.video_tokens;
        z = out.latents;
    }
    return unpatchify(params.out_proj(params.out_norm(v)), geometry);
}

ModelParams init_base(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.config.variant = Variant::Base;
    p.patch_embed = Linear::init(cfg.input_patch_dim(), cfg.dim, rng);
    p.sigma_first = Linear::init(cfg.sigma_features, cfg.dim, rng);
    p.sigma_second = Linear::init(cfg.dim, cfg.dim, rng);
    p.latent_init = Tensor::randn({cfg.latents, cfg.dim}, rng, 0.02);
    p.context_table = Tensor::randn({cfg.vocab, cfg.dim}, rng, 0.02);
    for (std::size_t b = 0; b < cfg.blocks; ++b) p.blocks.push_back(FitBlockParams::init(cfg, rng));
    p.out_norm = LayerNormParams::init(cfg.dim);
    p.out_proj = Linear::zeros(cfg.dim, cfg.output_patch_dim());
    return p;
}

void init_camera_branch(FitBlockParams& block, const ModelConfig& cfg, Variant variant, Rng& rng) {
    CameraBranchParams cam;
    if (variant == Variant::NoWeightCopy) {
        cam.attn = AttentionParams::init(cfg.dim, cfg.heads, rng);
        cam.ff = FeedForwardParams::init(cfg.dim, cfg.dim * cfg.ff_mult, rng);
    } else {
        cam.attn = deep_copy(block.read_attn);
        cam.ff = deep_copy(block.read_ff);
    }
    cam.conv = Conv1dParams::zeros(cfg.dim, cfg.conv_kernel);
    cam.over_patches = variant != Variant::PluckerContext;
    block.cam = std::move(cam);
}

ModelParams attach_variant(const ModelParams& base, Variant variant, Rng& rng) {
    if (base.config.variant != Variant::Base) throw ContractError("attach_variant expects a base network");
    ModelParams p = base.clone();
    const ModelConfig& cfg = base.config;
    p.config.variant = variant;
    if (variant == Variant::Base) return p;

    const std::size_t patch_cells = cfg.patch_h * cfg.patch_w;
    if (uses_patch_mlp(variant))
        p.plucker_mlp = PluckerMlpParams::init(camera_channels(variant) * patch_cells, cfg.dim, cfg.dim, rng);
    if (variant == Variant::NoControlNet) p.token_inject = Linear::zeros(cfg.dim, cfg.dim);
    if (variant == Variant::AddContext) p.context_inject = Linear::zeros(kRawCameraValues * cfg.frames, cfg.dim);
    if (variant == Variant::PluckerContext)
        p.plucker_to_context = Linear::init(6 * cfg.frames * cfg.height * cfg.width, cfg.dim, rng);
    if (uses_camera_branch(variant))
        for (auto& block : p.blocks) init_camera_branch(block, cfg, variant, rng);
    return p;
}

ModelParams build_variant(const ModelConfig& cfg, Rng& rng) {
    return attach_variant(init_base(cfg, rng), cfg.variant, rng);
}

void set_trainable(ModelParams& params) {
    const bool base = params.config.variant == Variant::Base;
    params.visit_base([&](const std::string&, Tensor& t) { t.set_requires_grad(base); });
    params.visit_camera([](const std::string&, Tensor& t) { t.set_requires_grad(true); });
}

}  // namespace camfit
