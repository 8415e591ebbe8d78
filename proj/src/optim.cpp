#include "camfit/optim.hpp"

#include <algorithm>
#include <cmath>

namespace camfit {

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<NamedTensor> params)
    : cfg_(cfg), params_(std::move(params)) {
    for (const auto& p : params_) {
        if (!p.tensor.is_leaf()) throw ContractError("optimizer parameter '" + p.name + "' is not a leaf");
        state_.m.emplace_back(p.tensor.numel(), 0.0);
        state_.v.emplace_back(p.tensor.numel(), 0.0);
        const auto d = p.tensor.data();
        const bool zero = std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; });
        state_.adapt.push_back(p.tensor.rank() >= 2 && !zero);
    }
}

double trust_ratio(double weight_norm, double update_norm, const OptimizerConfig& cfg) {
    if (weight_norm == 0.0 || update_norm == 0.0) return 1.0;
    return std::clamp(weight_norm / update_norm, cfg.trust_min, cfg.trust_max);
}

void Optimizer::step(double lr) {
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    std::vector<double> update;
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& param = params_[p].tensor;
        if (!param.has_grad()) continue;
        const auto g = param.grad();
        auto w = param.mutable_data();
        auto& m = state_.m[p];
        auto& v = state_.v[p];
        // Decay matrices only; gains, biases and other vectors are left alone.
        const double wd = param.rank() >= 2 ? cfg_.weight_decay : 0.0;
        update.resize(w.size());
        double wn = 0.0, un = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mh = m[i] / bc1, vh = v[i] / bc2;
            update[i] = mh / (std::sqrt(vh) + cfg_.eps);
            if (cfg_.kind == OptimizerKind::Lamb) update[i] += wd * w[i];
            wn += w[i] * w[i];
            un += update[i] * update[i];
        }
        if (cfg_.kind == OptimizerKind::Lamb) {
            const double ratio = state_.adapt[p] ? trust_ratio(std::sqrt(wn), std::sqrt(un), cfg_) : 1.0;
            const double step = lr * ratio;
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * update[i];
        } else {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (update[i] + wd * w[i]);
        }
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::load_state(OptimizerState state) {
    if (state.m.size() != params_.size() || state.v.size() != params_.size() || state.adapt.size() != params_.size())
        throw ConfigMismatch("optimizer state has " + std::to_string(state.m.size()) + " buffers, expected " +
                             std::to_string(params_.size()));
    for (std::size_t p = 0; p < params_.size(); ++p)
        if (state.m[p].size() != params_[p].tensor.numel() || state.v[p].size() != params_[p].tensor.numel())
            throw ConfigMismatch("optimizer state size mismatch for '" + params_[p].name + "'");
    state_ = std::move(state);
}

double LrSchedule::at(std::size_t step) const {
    if (step < warmup_steps) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps + 1) return peak;
    const double frac = std::min(1.0, static_cast<double>(step - warmup_steps) /
                                          static_cast<double>(total_steps - warmup_steps - 1));
    return peak + frac * (final_lr - peak);
}

}  // namespace camfit
