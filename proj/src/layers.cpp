#include "camfit/layers.hpp"

#include <cmath>

namespace camfit {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
    return Linear{Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))),
                  Tensor::zeros({out})};
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
    return Linear{Tensor::zeros({in, out}), Tensor::zeros({out})};
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
}

LayerNormParams LayerNormParams::init(std::size_t d) {
    return LayerNormParams{Tensor::full({d}, 1.0), Tensor::zeros({d})};
}

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".gain", gain);
    fn(prefix + ".bias", bias);
}

AttentionParams AttentionParams::init(std::size_t d, std::size_t heads, Rng& rng) {
    AttentionParams p;
    p.norm_q = LayerNormParams::init(d);
    p.norm_kv = LayerNormParams::init(d);
    p.q = Linear::init(d, d, rng);
    p.k = Linear::init(d, d, rng);
    p.v = Linear::init(d, d, rng);
    p.o = Linear::init(d, d, rng);
    p.heads = heads;
    return p;
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    norm_q.visit(prefix + ".norm_q", fn);
    norm_kv.visit(prefix + ".norm_kv", fn);
    q.visit(prefix + ".q", fn);
    k.visit(prefix + ".k", fn);
    v.visit(prefix + ".v", fn);
    o.visit(prefix + ".o", fn);
}

Tensor cross_attention(const AttentionParams& p, const Tensor& queries, const Tensor& context) {
    const Tensor qn = p.norm_q(queries);
    const Tensor cn = p.norm_kv(context);
    const Tensor mixed = attention(p.q(qn), p.k(cn), p.v(cn), p.heads);
    return add(queries, p.o(mixed));
}

Tensor self_attention(const AttentionParams& p, const Tensor& x) {
    const Tensor xn = p.norm_q(x);
    const Tensor mixed = attention(p.q(xn), p.k(xn), p.v(xn), p.heads);
    return add(x, p.o(mixed));
}

FeedForwardParams FeedForwardParams::init(std::size_t d, std::size_t hidden, Rng& rng) {
    return FeedForwardParams{LayerNormParams::init(d), Linear::init(d, hidden, rng),
                             Linear::init(hidden, d, rng)};
}

void FeedForwardParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    norm.visit(prefix + ".norm", fn);
    up.visit(prefix + ".up", fn);
    down.visit(prefix + ".down", fn);
}

Tensor feed_forward(const FeedForwardParams& p, const Tensor& x) {
    return add(x, p.down(gelu(p.up(p.norm(x)))));
}

Conv1dParams Conv1dParams::zeros(std::size_t channels, std::size_t kernel) {
    return Conv1dParams{Tensor::zeros({channels, channels, kernel}), Tensor::zeros({channels})};
}

void Conv1dParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".weight", weight);
    fn(prefix + ".bias", bias);
}

}  // namespace camfit
