#include <cmath>

#include "camfit/tokenizer.hpp"
#include "doctest.h"
#include "gradcheck.hpp"
#include "random_geometry.hpp"

using namespace camfit;
using camfit::testing::grad_check;
using camfit::testing::random_projection;

TEST_CASE("patchify token count at the reference resolution") {
    Tensor video = Tensor::zeros({16, 36, 64, 3});
    const Tensor p = patchify(video, 4, 4);
    CHECK(p.dim(0) == 2304);
    CHECK(p.dim(1) == 48);
}

TEST_CASE("patchify enumerates pixels in canonical order") {
    Tensor video({1, 2, 2, 1}, {10, 11, 12, 13});
    const Tensor p = patchify(video, 1, 1);
    CHECK(p.shape() == Shape{4, 1});
    for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == 10.0 + static_cast<double>(i));
}

TEST_CASE("patchify layout matches an explicit index oracle") {
    Rng rng(3);
    const std::size_t F = 2, H = 4, W = 6, C = 3, ph = 2, pw = 3;
    Tensor video = Tensor::randn({F, H, W, C}, rng);
    const Tensor p = patchify(video, ph, pw);
    const std::size_t gh = H / ph, gw = W / pw;
    CHECK(p.shape() == Shape{F * gh * gw, ph * pw * C});
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t token = (f * gh + h / ph) * gw + w / pw;
                    const std::size_t inner = ((h % ph) * pw + w % pw) * C + c;
                    CHECK(p[token * p.dim(1) + inner] == video[((f * H + h) * W + w) * C + c]);
                }
}

TEST_CASE("unpatchify inverts patchify exactly") {
    Rng rng(4);
    Tensor video = Tensor::randn({2, 8, 4, 3}, rng);
    const Tensor p = patchify(video, 4, 2);
    const PatchGeometry g{2, 8, 4, 3, 4, 2};
    const Tensor back = unpatchify(p, g);
    CHECK(back.shape() == video.shape());
    for (std::size_t i = 0; i < video.numel(); ++i) CHECK(back[i] == video[i]);

    const Tensor z = unpatchify(Tensor::zeros({g.tokens(), g.patch_dim()}), g);
    for (double v : z.data()) CHECK(v == 0.0);

    const Tensor p2 = patchify(video, 4, 2);
    for (std::size_t i = 0; i < p.numel(); ++i) CHECK(p[i] == p2[i]);
}

TEST_CASE("patchify rejects indivisible sizes") {
    CHECK_THROWS_AS(patchify(Tensor::zeros({1, 5, 4, 1}), 2, 2), ShapeError);
    CHECK_THROWS_AS(patchify(Tensor::zeros({5, 4, 1}), 2, 2), ShapeError);
    CHECK_THROWS_AS(unpatchify(Tensor::zeros({3, 4}), PatchGeometry{1, 4, 4, 1, 2, 2}), ShapeError);
}

TEST_CASE("embed_video_patches") {
    Rng rng(5);
    const PatchGeometry g{1, 4, 4, 3, 2, 2};
    const Tensor patches = Tensor::randn({g.tokens(), g.patch_dim()}, rng);
    SUBCASE("zero projection gives zero tokens") {
        const auto seq = embed_video_patches(patches, Linear::zeros(12, 8), g);
        CHECK(seq.provenance == Provenance::Video);
        CHECK(seq.length() == 4);
        for (double v : seq.tokens.data()) CHECK(v == 0.0);
    }
    SUBCASE("identity projection preserves values") {
        Linear eye = Linear::zeros(12, 12);
        for (std::size_t i = 0; i < 12; ++i) eye.weight.mutable_data()[i * 12 + i] = 1.0;
        const auto seq = embed_video_patches(patches, eye, g);
        for (std::size_t i = 0; i < patches.numel(); ++i) CHECK(seq.tokens[i] == patches[i]);
    }
    SUBCASE("matches a direct product") {
        const Linear proj = Linear::init(12, 5, rng);
        Linear biased = proj;
        biased.bias = Tensor::randn({5}, rng);
        const auto seq = embed_video_patches(patches, biased, g);
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 5; ++c) {
                double acc = biased.bias[c];
                for (std::size_t k = 0; k < 12; ++k) acc += patches[r * 12 + k] * biased.weight[k * 5 + c];
                CHECK(std::abs(seq.tokens[r * 5 + c] - acc) < 1e-12);
            }
    }
    SUBCASE("width mismatch") {
        CHECK_THROWS_AS(embed_video_patches(patches, Linear::zeros(10, 5), g), ShapeError);
    }
}

TEST_CASE("plucker_tokens") {
    Rng rng(6);
    const auto traj = normalize_trajectory(camfit::testing::random_trajectory(rng, 2));
    const auto vol = plucker_volume(traj, 8, 8);
    const std::size_t d = 16;

    SUBCASE("same length and width as the video tokens") {
        const auto mlp = PluckerMlpParams::init(6 * 16, d, d, rng);
        const auto seq = plucker_tokens(vol, mlp, 4, 4);
        Tensor video = Tensor::zeros({2, 8, 8, 3});
        const PatchGeometry g{2, 8, 8, 3, 4, 4};
        const auto vseq = embed_video_patches(patchify(video, 4, 4), Linear::init(48, d, rng), g);
        CHECK(seq.length() == vseq.length());
        CHECK(seq.width() == vseq.width());
        CHECK(seq.provenance == Provenance::Plucker);
    }
    SUBCASE("zero MLP gives zero tokens") {
        PluckerMlpParams mlp{Linear::zeros(96, d), Linear::zeros(d, d)};
        const auto seq = plucker_tokens(vol, mlp, 4, 4);
        for (double v : seq.tokens.data()) CHECK(v == 0.0);
    }
    SUBCASE("composition oracle") {
        const auto mlp = PluckerMlpParams::init(6 * 4, 5, 3, rng);
        const auto small = plucker_volume(traj, 2, 4);
        const auto seq = plucker_tokens(small, mlp, 2, 2);
        CHECK(seq.tokens.shape() == Shape{4, 3});
        for (std::size_t token = 0; token < 4; ++token) {
            const std::size_t f = token / 2, gw = token % 2;
            std::vector<double> in;
            for (std::size_t ph = 0; ph < 2; ++ph)
                for (std::size_t pw = 0; pw < 2; ++pw)
                    for (std::size_t c = 0; c < 6; ++c)
                        in.push_back(small.data[((c * 2 + f) * 2 + ph) * 4 + gw * 2 + pw]);
            std::vector<double> hidden(5);
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = mlp.first.bias[j];
                for (std::size_t k = 0; k < 24; ++k) acc += in[k] * mlp.first.weight[k * 5 + j];
                hidden[j] = 0.5 * acc * (1.0 + std::erf(acc / std::sqrt(2.0)));
            }
            for (std::size_t j = 0; j < 3; ++j) {
                double acc = mlp.second.bias[j];
                for (std::size_t k = 0; k < 5; ++k) acc += hidden[k] * mlp.second.weight[k * 3 + j];
                CHECK(std::abs(seq.tokens[token * 3 + j] - acc) < 1e-12);
            }
        }
    }
    SUBCASE("mismatched MLP input") {
        const auto mlp = PluckerMlpParams::init(50, d, d, rng);
        CHECK_THROWS_AS(plucker_tokens(vol, mlp, 4, 4), ShapeError);
    }
}

TEST_CASE("plucker_tokens gradient matches finite differences") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        const auto traj = normalize_trajectory(camfit::testing::random_trajectory(rng, 2));
        const auto vol = plucker_volume(traj, 2, 2);
        auto mlp = PluckerMlpParams::init(12, 4, 3, rng);
        mlp.first.bias = Tensor::randn({4}, rng, 0.3);
        for (Tensor* t : {&mlp.first.weight, &mlp.first.bias, &mlp.second.weight, &mlp.second.bias})
            t->set_requires_grad(true);
        const Tensor w = Tensor::randn({4, 3}, rng);
        const auto r = grad_check([&] { return random_projection(plucker_tokens(vol, mlp, 2, 1).tokens, w); },
                                  {mlp.first.weight, mlp.first.bias, mlp.second.weight, mlp.second.bias});
        CHECK(r.worst_rel_error < 1e-4);
    }
}

TEST_CASE("patchify and unpatchify are differentiable") {
    Rng rng(7);
    Tensor video = Tensor::randn({2, 2, 4, 2}, rng).set_requires_grad(true);
    const Tensor w = Tensor::randn({4, 8}, rng);
    const PatchGeometry g{2, 2, 4, 2, 1, 2};
    const auto r = grad_check(
        [&] {
            const Tensor p = patchify(video, 1, 2);
            return random_projection(patchify(unpatchify(mul(p, p), g), 2, 2), w);
        },
        {video});
    CHECK(r.worst_rel_error < 1e-6);
}

TEST_CASE("positional embedding") {
    const PatchGeometry g{2, 4, 4, 3, 2, 2};
    const Tensor pe = positional_embedding(g, 14);
    CHECK(pe.shape() == Shape{8, 14});
    // token 0 is (0, 0, 0): sin terms 0, cos terms 1, pad columns 0
    for (std::size_t c = 0; c < 12; ++c) CHECK(pe[c] == (c % 2 == 0 ? 0.0 : 1.0));
    CHECK(pe[12] == 0.0);
    CHECK(pe[13] == 0.0);
    // token 5 is frame 1, row 0, col 1
    CHECK(pe[5 * 14 + 0] == doctest::Approx(std::sin(1.0)));
    CHECK(pe[5 * 14 + 4] == 0.0);
    CHECK(pe[5 * 14 + 8] == doctest::Approx(std::sin(1.0)));
}
