#include "camfit/tokenizer.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace camfit {

using autodiff::grad_ptr;
using autodiff::make_output;
using autodiff::recording_tape;

void PatchGeometry::validate() const {
    if (frames == 0 || height == 0 || width == 0 || channels == 0 || patch_h == 0 || patch_w == 0)
        throw ShapeError("patch geometry has a zero extent");
    if (height % patch_h != 0 || width % patch_w != 0)
        throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible into " + std::to_string(patch_h) + "x" +
                         std::to_string(patch_w) + " patches");
}

namespace {

// Flat index in the video for each element of the patch matrix.
std::vector<std::size_t> patch_index_map(const PatchGeometry& g) {
    std::vector<std::size_t> map(g.tokens() * g.patch_dim());
    std::size_t n = 0;
    for (std::size_t f = 0; f < g.frames; ++f)
        for (std::size_t gh = 0; gh < g.grid_h(); ++gh)
            for (std::size_t gw = 0; gw < g.grid_w(); ++gw)
                for (std::size_t ph = 0; ph < g.patch_h; ++ph)
                    for (std::size_t pw = 0; pw < g.patch_w; ++pw) {
                        const std::size_t h = gh * g.patch_h + ph;
                        const std::size_t w = gw * g.patch_w + pw;
                        const std::size_t base = ((f * g.height + h) * g.width + w) * g.channels;
                        for (std::size_t c = 0; c < g.channels; ++c) map[n++] = base + c;
                    }
    return map;
}

}  // namespace

Tensor patchify(const Tensor& video, std::size_t patch_h, std::size_t patch_w) {
    if (video.rank() != 4) throw ShapeError("patchify expects [F, H, W, C], got " + shape_str(video.shape()));
    PatchGeometry g{video.dim(0), video.dim(1), video.dim(2), video.dim(3), patch_h, patch_w};
    g.validate();
    const auto map = patch_index_map(g);
    const auto src = video.data();
    std::vector<double> out(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = src[map[i]];
    Tape* tape = recording_tape({&video});
    Tensor result = make_output({g.tokens(), g.patch_dim()}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), vn = video.node(), map] {
            double* gv = grad_ptr(vn);
            if (!gv || on->grad.empty()) return;
            for (std::size_t i = 0; i < map.size(); ++i) gv[map[i]] += on->grad[i];
        });
    }
    return result;
}

Tensor unpatchify(const Tensor& patches, const PatchGeometry& g) {
    g.validate();
    if (patches.rank() != 2 || patches.dim(0) != g.tokens() || patches.dim(1) != g.patch_dim())
        throw ShapeError("unpatchify: patches " + shape_str(patches.shape()) + " do not match geometry");
    const auto map = patch_index_map(g);
    const auto src = patches.data();
    std::vector<double> out(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] = src[i];
    Tape* tape = recording_tape({&patches});
    Tensor result = make_output({g.frames, g.height, g.width, g.channels}, std::move(out), tape != nullptr);
    if (tape) {
        tape->record([on = result.node(), pn = patches.node(), map] {
            double* gp = grad_ptr(pn);
            if (!gp || on->grad.empty()) return;
            for (std::size_t i = 0; i < map.size(); ++i) gp[i] += on->grad[map[i]];
        });
    }
    return result;
}

TokenSequence embed_video_patches(const Tensor& patches, const Linear& proj,
                                  const PatchGeometry& geometry) {
    if (patches.rank() != 2 || patches.dim(1) != proj.in_dim())
        throw ShapeError("embed_video_patches: patches " + shape_str(patches.shape()) +
                         " vs projection input " + std::to_string(proj.in_dim()));
    return TokenSequence{proj(patches), Provenance::Video, geometry};
}

PluckerMlpParams PluckerMlpParams::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    return PluckerMlpParams{Linear::init(in, hidden, rng), Linear::init(hidden, out, rng)};
}

void PluckerMlpParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    first.visit(prefix + ".first", fn);
    second.visit(prefix + ".second", fn);
}

Tensor channels_last(const Tensor& volume) {
    if (volume.rank() != 4) throw ShapeError("camera volume must be [C, F, H, W]");
    const std::size_t C = volume.dim(0), F = volume.dim(1), H = volume.dim(2), W = volume.dim(3);
    const std::size_t plane = F * H * W;
    const auto src = volume.data();
    std::vector<double> out(volume.numel());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[i * C + c] = src[c * plane + i];
    return Tensor({F, H, W, C}, std::move(out));
}

TokenSequence plucker_tokens(const Tensor& volume, const PluckerMlpParams& mlp, std::size_t patch_h,
                             std::size_t patch_w) {
    const Tensor patches = patchify(channels_last(volume), patch_h, patch_w);
    if (patches.dim(1) != mlp.first.in_dim())
        throw ShapeError("plucker_tokens: patch width " + std::to_string(patches.dim(1)) +
                         " does not match MLP input " + std::to_string(mlp.first.in_dim()));
    PatchGeometry g{volume.dim(1), volume.dim(2), volume.dim(3), volume.dim(0), patch_h, patch_w};
    return TokenSequence{mlp(patches), Provenance::Plucker, g};
}

TokenSequence plucker_tokens(const PluckerVolume& volume, const PluckerMlpParams& mlp,
                             std::size_t patch_h, std::size_t patch_w) {
    return plucker_tokens(volume.data, mlp, patch_h, patch_w);
}

Tensor positional_embedding(const PatchGeometry& g, std::size_t d) {
    const std::size_t pairs = d / 6;  // sin/cos pairs per axis
    std::vector<double> out(g.tokens() * d, 0.0);
    std::size_t token = 0;
    for (std::size_t f = 0; f < g.frames; ++f)
        for (std::size_t r = 0; r < g.grid_h(); ++r)
            for (std::size_t c = 0; c < g.grid_w(); ++c, ++token) {
                const double pos[3] = {static_cast<double>(f), static_cast<double>(r), static_cast<double>(c)};
                for (std::size_t axis = 0; axis < 3; ++axis)
                    for (std::size_t i = 0; i < pairs; ++i) {
                        const double freq = std::pow(100.0, -static_cast<double>(i) / static_cast<double>(pairs));
                        const std::size_t col = axis * 2 * pairs + 2 * i;
                        out[token * d + col] = std::sin(pos[axis] * freq);
                        out[token * d + col + 1] = std::cos(pos[axis] * freq);
                    }
            }
    return Tensor({g.tokens(), d}, std::move(out));
}

}  // namespace camfit
