#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "camfit/model.hpp"
#include "camfit/tensor.hpp"

namespace camfit {

struct DiffusionConfig {
    double sigma_data = 0.5;
    double p_mean = -1.2;
    double p_std = 1.2;
    std::size_t sampler_steps = 32;
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;

    void validate() const;
};

struct Scalings {
    double c_skip, c_out, c_in, c_noise;
};

Scalings edm_scalings(double sigma, const DiffusionConfig& cfg);
// 1 / c_out^2
double loss_weight(double sigma, const DiffusionConfig& cfg);

// D = c_out * raw + c_skip * noisy. Differentiable in raw.
Tensor precondition(const Tensor& raw, const Tensor& noisy, double sigma, const DiffusionConfig& cfg);

// ln(sigma) ~ N(p_mean, p_std^2)
double sample_sigma(Rng& rng, const DiffusionConfig& cfg);

// sampler_steps decreasing noise levels followed by a terminal 0.
std::vector<double> karras_schedule(const DiffusionConfig& cfg);

using FrameMask = std::vector<bool>;

// Observed frames become observed + sigma * fresh noise; others are copied.
Tensor apply_frame_mask(const Tensor& noisy, const Tensor& observed, const FrameMask& mask, double sigma,
                        Rng& rng);

// Denoised estimate for a noisy video at a noise level.
using Denoiser = std::function<Tensor(const Tensor& noisy, double sigma)>;

// Wraps the network with EDM preconditioning. `base_input` supplies the camera,
// condition and mask; its video and sigma are overwritten per call.
Denoiser model_denoiser(const ModelParams& params, ModelInput base_input, const DiffusionConfig& cfg);

struct LossSample {
    Tensor loss;
    double sigma;
};

// lambda(sigma) * mean((D(x + sigma eps) - x)^2) for one sampled sigma.
LossSample denoising_loss(const Denoiser& denoiser, const Tensor& clean, Rng& rng, const DiffusionConfig& cfg,
                          const FrameMask& mask = {});

// Deterministic Heun sampler without churn. With a mask, observed frames are
// re-noised at every step and restored exactly at the end; output is clamped
// to [-1, 1].
Tensor sample_video(const Denoiser& denoiser, const Shape& shape, Rng& rng, const DiffusionConfig& cfg,
                    const FrameMask& mask = {}, const Tensor& observed = Tensor());

}  // namespace camfit
