#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "camfit/tensor.hpp"

namespace camfit {

enum class OptimizerKind { Lamb, AdamW };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Lamb;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-6;
    double weight_decay = 0.01;
    double trust_min = 1e-3;
    double trust_max = 10.0;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Per-parameter first/second moment buffers plus the step counter. `adapt`
// marks tensors that get the LAMB trust ratio; it is fixed when the optimizer
// is built (rank >= 2 and not all zero) and travels with checkpoints.
struct OptimizerState {
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;
    std::vector<bool> adapt;
};

class Optimizer {
public:
    Optimizer(OptimizerConfig cfg, std::vector<NamedTensor> params);

    // One update from the accumulated grads; parameters without a grad are skipped.
    void step(double lr);
    void zero_grad();

    const OptimizerConfig& config() const { return cfg_; }
    const std::vector<NamedTensor>& params() const { return params_; }
    const OptimizerState& state() const { return state_; }
    void load_state(OptimizerState state);

private:
    OptimizerConfig cfg_;
    std::vector<NamedTensor> params_;
    OptimizerState state_;
};

// LAMB layer-wise scaling: ||w|| / ||u|| clamped, or 1 when either norm is zero.
double trust_ratio(double weight_norm, double update_norm, const OptimizerConfig& cfg);

// Linear warmup from 0 to peak, then linear decay to final at total_steps.
struct LrSchedule {
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;
    double peak = 5e-3;
    double final_lr = 1.5e-3;

    double at(std::size_t step) const;
};

}  // namespace camfit
