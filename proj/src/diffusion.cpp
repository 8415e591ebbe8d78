#include "camfit/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "camfit/ops.hpp"

namespace camfit {

void DiffusionConfig::validate() const {
    if (!(sigma_data > 0.0)) throw ValidationError("sigma_data must be positive");
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max)) throw ValidationError("need 0 < sigma_min < sigma_max");
    if (sampler_steps < 1) throw ValidationError("sampler_steps must be at least 1");
    if (p_std < 0.0) throw ValidationError("p_std must be non-negative");
    if (!(rho > 0.0)) throw ValidationError("rho must be positive");
}

Scalings edm_scalings(double sigma, const DiffusionConfig& cfg) {
    if (!(sigma > 0.0)) throw ContractError("sigma must be positive");
    const double sd = cfg.sigma_data;
    const double total = sigma * sigma + sd * sd;
    return Scalings{sd * sd / total, sigma * sd / std::sqrt(total), 1.0 / std::sqrt(total), std::log(sigma) / 4.0};
}

double loss_weight(double sigma, const DiffusionConfig& cfg) {
    const double c_out = edm_scalings(sigma, cfg).c_out;
    return 1.0 / (c_out * c_out);
}

Tensor precondition(const Tensor& raw, const Tensor& noisy, double sigma, const DiffusionConfig& cfg) {
    const Scalings s = edm_scalings(sigma, cfg);
    return add(scale(raw, s.c_out), scale(noisy, s.c_skip));
}

double sample_sigma(Rng& rng, const DiffusionConfig& cfg) {
    std::normal_distribution<double> n(0.0, 1.0);
    return std::exp(cfg.p_mean + cfg.p_std * n(rng));
}

std::vector<double> karras_schedule(const DiffusionConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.sampler_steps;
    std::vector<double> s;
    s.reserve(n + 1);
    if (n == 1) {
        s.push_back(cfg.sigma_max);
    } else {
        const double hi = std::pow(cfg.sigma_max, 1.0 / cfg.rho);
        const double lo = std::pow(cfg.sigma_min, 1.0 / cfg.rho);
        for (std::size_t i = 0; i < n; ++i) {
            const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
            s.push_back(std::pow(hi + frac * (lo - hi), cfg.rho));
        }
    }
    s.push_back(0.0);
    return s;
}

Tensor apply_frame_mask(const Tensor& noisy, const Tensor& observed, const FrameMask& mask, double sigma,
                        Rng& rng) {
    if (mask.empty()) return noisy;
    if (noisy.rank() == 0 || mask.size() != noisy.dim(0)) throw ShapeError("frame mask length mismatch");
    if (!observed.defined() || observed.shape() != noisy.shape())
        throw ShapeError("observed frames must match the noisy video shape");
    const std::size_t frame = noisy.numel() / noisy.dim(0);
    std::vector<double> out(noisy.data().begin(), noisy.data().end());
    const auto obs = observed.data();
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t f = 0; f < mask.size(); ++f) {
        if (!mask[f]) continue;
        for (std::size_t i = f * frame; i < (f + 1) * frame; ++i) out[i] = obs[i] + sigma * n(rng);
    }
    return Tensor(noisy.shape(), std::move(out));
}

Denoiser model_denoiser(const ModelParams& params, ModelInput base_input, const DiffusionConfig& cfg) {
    return [&params, base_input = std::move(base_input), cfg](const Tensor& noisy, double sigma) {
        ModelInput in = base_input;
        const Scalings s = edm_scalings(sigma, cfg);
        in.video = scale(noisy, s.c_in);
        in.sigma = sigma;
        return precondition(model_forward(params, in), noisy, sigma, cfg);
    };
}

LossSample denoising_loss(const Denoiser& denoiser, const Tensor& clean, Rng& rng, const DiffusionConfig& cfg,
                          const FrameMask& mask) {
    const double sigma = sample_sigma(rng, cfg);
    const Tensor eps = Tensor::randn(clean.shape(), rng);
    Tensor noisy = add(clean, scale(eps, sigma));
    noisy = apply_frame_mask(noisy, clean, mask, sigma, rng);
    const Tensor denoised = denoiser(noisy, sigma);
    const double n = static_cast<double>(clean.numel());
    return {scale(weighted_sq_error(denoised, clean, {}, n), loss_weight(sigma, cfg)), sigma};
}

Tensor sample_video(const Denoiser& denoiser, const Shape& shape, Rng& rng, const DiffusionConfig& cfg,
                    const FrameMask& mask, const Tensor& observed) {
    if (!mask.empty() && (!observed.defined() || observed.shape() != shape))
        throw ShapeError("observed frames must be supplied with the mask");
    const auto sigmas = karras_schedule(cfg);
    Tensor x = scale(Tensor::randn(shape, rng), sigmas[0]);
    for (std::size_t i = 0; i + 1 < sigmas.size(); ++i) {
        const double t = sigmas[i], next = sigmas[i + 1];
        x = apply_frame_mask(x, observed, mask, t, rng);
        const Tensor denoised = denoiser(x, t);
        if (next == 0.0) {
            // Euler step to sigma = 0 lands exactly on the denoised estimate.
            x = denoised;
            break;
        }
        const Tensor d = scale(sub(x, denoised), 1.0 / t);
        const Tensor euler = add(x, scale(d, next - t));
        const Tensor d2 = scale(sub(euler, denoiser(euler, next)), 1.0 / next);
        x = add(x, scale(add(d, d2), 0.5 * (next - t)));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    if (!mask.empty()) {
        const std::size_t frame = x.numel() / shape[0];
        const auto obs = observed.data();
        for (std::size_t f = 0; f < mask.size(); ++f)
            if (mask[f]) std::copy(obs.begin() + f * frame, obs.begin() + (f + 1) * frame, out.begin() + f * frame);
    }
    for (double& v : out) v = std::clamp(v, -1.0, 1.0);
    return Tensor(shape, std::move(out));
}

}  // namespace camfit
