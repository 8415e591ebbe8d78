#pragma once

#include <cstddef>

#include "camfit/camera.hpp"
#include "camfit/layers.hpp"
#include "camfit/tensor.hpp"

namespace camfit {

// Patch grid of a video: F frames of (H / patch_h) x (W / patch_w) patches.
struct PatchGeometry {
    std::size_t frames = 0, height = 0, width = 0, channels = 0;
    std::size_t patch_h = 1, patch_w = 1;

    std::size_t grid_h() const { return height / patch_h; }
    std::size_t grid_w() const { return width / patch_w; }
    std::size_t tokens() const { return frames * grid_h() * grid_w(); }
    std::size_t patch_dim() const { return patch_h * patch_w * channels; }
    void validate() const;
};

enum class Provenance { Video, Plucker, Latent };

// L x d tokens. Order is frame-major, then row-major over the patch grid.
struct TokenSequence {
    Tensor tokens;
    Provenance provenance = Provenance::Video;
    PatchGeometry geometry;

    std::size_t length() const { return tokens.dim(0); }
    std::size_t width() const { return tokens.dim(1); }
};

// video[F, H, W, C] -> [L, patch_h * patch_w * C]; inside a patch values are
// ordered (row, col, channel). Differentiable.
Tensor patchify(const Tensor& video, std::size_t patch_h, std::size_t patch_w);
// Exact inverse of patchify. Differentiable.
Tensor unpatchify(const Tensor& patches, const PatchGeometry& geometry);

TokenSequence embed_video_patches(const Tensor& patches, const Linear& proj,
                                  const PatchGeometry& geometry);

// Two affine layers with a GELU between: patch_dim -> hidden -> d.
struct PluckerMlpParams {
    Linear first;
    Linear second;

    static PluckerMlpParams init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
    Tensor operator()(const Tensor& x) const { return second(gelu(first(x))); }
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// [C, F, H, W] camera volume -> channels-last [F, H, W, C].
Tensor channels_last(const Tensor& volume);

// Patchifies a channel-first camera volume (Plücker or raw matrices) and maps
// each patch through the MLP to the video token width.
TokenSequence plucker_tokens(const Tensor& volume, const PluckerMlpParams& mlp, std::size_t patch_h,
                             std::size_t patch_w);
TokenSequence plucker_tokens(const PluckerVolume& volume, const PluckerMlpParams& mlp,
                             std::size_t patch_h, std::size_t patch_w);

// Fixed sinusoidal (frame, row, col) embedding, L x d.
Tensor positional_embedding(const PatchGeometry& geometry, std::size_t d);

}  // namespace camfit
