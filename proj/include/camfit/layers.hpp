#pragma once

#include <functional>
#include <string>

#include "camfit/ops.hpp"
#include "camfit/tensor.hpp"

namespace camfit {

using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

// Weight stored [in, out] so that y = x W + b.
struct Linear {
    Tensor weight;
    Tensor bias;

    static Linear init(std::size_t in, std::size_t out, Rng& rng);
    static Linear zeros(std::size_t in, std::size_t out);
    std::size_t in_dim() const { return weight.dim(0); }
    std::size_t out_dim() const { return weight.dim(1); }
    Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;

    static LayerNormParams init(std::size_t d);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, x.rank() - 1); }
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Pre-norm multi-head attention with residual:
//   out = queries + O(attn(Q(LN_q(queries)), K(LN_kv(context)), V(LN_kv(context))))
struct AttentionParams {
    LayerNormParams norm_q;
    LayerNormParams norm_kv;
    Linear q, k, v, o;
    std::size_t heads = 1;

    static AttentionParams init(std::size_t d, std::size_t heads, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

Tensor cross_attention(const AttentionParams& p, const Tensor& queries, const Tensor& context);
// Same as cross_attention over the queries themselves; only norm_q is used.
Tensor self_attention(const AttentionParams& p, const Tensor& x);

// Pre-norm residual MLP: x + down(gelu(up(LN(x)))).
struct FeedForwardParams {
    LayerNormParams norm;
    Linear up, down;

    static FeedForwardParams init(std::size_t d, std::size_t hidden, Rng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

Tensor feed_forward(const FeedForwardParams& p, const Tensor& x);

// Same-padded 1-D convolution over the token axis.
struct Conv1dParams {
    Tensor weight;  // [c_out, c_in, k]
    Tensor bias;

    static Conv1dParams zeros(std::size_t channels, std::size_t kernel);
    Tensor operator()(const Tensor& x) const { return conv1d(x, weight, bias); }
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Deep copy of every tensor reachable through `visit`.
template <typename Params>
Params deep_copy(const Params& src) {
    Params out = src;
    out.visit("", [](const std::string&, Tensor& t) {
        const bool rg = t.requires_grad();
        t = t.detach_copy();
        t.set_requires_grad(rg);
    });
    return out;
}

}  // namespace camfit
