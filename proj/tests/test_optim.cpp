#include <cmath>

#include "camfit/ops.hpp"
#include "camfit/optim.hpp"
#include "doctest.h"

using namespace camfit;

TEST_CASE("trust ratio") {
    const OptimizerConfig cfg;
    CHECK(trust_ratio(0.0, 3.0, cfg) == 1.0);
    CHECK(trust_ratio(2.0, 0.0, cfg) == 1.0);
    CHECK(trust_ratio(2.0, 4.0, cfg) == 0.5);
    CHECK(trust_ratio(1e6, 1.0, cfg) == 10.0);
    CHECK(trust_ratio(1e-9, 1.0, cfg) == 1e-3);
}

TEST_CASE("LAMB first step matches a hand computation") {
    OptimizerConfig cfg;
    cfg.weight_decay = 0.1;
    Tensor w = Tensor({2, 2}, {1.0, -2.0, 0.5, 3.0}).set_requires_grad(true);
    auto g = w.mutable_grad();
    const double grads[4] = {0.1, -0.4, 0.0, 2.0};
    for (int i = 0; i < 4; ++i) g[i] = grads[i];
    Optimizer opt(cfg, {{"w", w}});
    opt.step(0.01);
    // first step: m_hat = g, v_hat = g^2, so the Adam direction is g / (|g| + eps)
    double u[4], un = 0.0, wn = 0.0;
    const double w0[4] = {1.0, -2.0, 0.5, 3.0};
    for (int i = 0; i < 4; ++i) {
        u[i] = grads[i] / (std::abs(grads[i]) + cfg.eps) + 0.1 * w0[i];
        un += u[i] * u[i];
        wn += w0[i] * w0[i];
    }
    const double r = std::sqrt(wn) / std::sqrt(un);
    for (int i = 0; i < 4; ++i) CHECK(w[i] == doctest::Approx(w0[i] - 0.01 * r * u[i]).epsilon(1e-14));
}

TEST_CASE("zero-initialized tensors still move") {
    Tensor w = Tensor::zeros({3, 3}).set_requires_grad(true);
    auto g = w.mutable_grad();
    for (auto& v : g) v = 0.5;
    Optimizer opt(OptimizerConfig{}, {{"w", w}});
    opt.step(0.1);
    for (double v : w.data()) CHECK(v == doctest::Approx(-0.1 * 0.5 / (0.5 + 1e-6)));
}

TEST_CASE("zero-initialized and vector tensors skip the trust ratio") {
    // Once a zero-init gate has moved, ||w|| / ||u|| would be ~lr and pin it near zero.
    Tensor gate = Tensor::zeros({2, 2}).set_requires_grad(true);
    Tensor bias = Tensor({2}, {4.0, -4.0}).set_requires_grad(true);
    OptimizerConfig cfg;
    cfg.weight_decay = 0.0;
    Optimizer opt(cfg, {{"gate", gate}, {"bias", bias}});
    CHECK(opt.state().adapt == std::vector<bool>{false, false});
    for (int step = 0; step < 3; ++step) {
        for (auto& v : gate.mutable_grad()) v = 1.0;
        for (auto& v : bias.mutable_grad()) v = 1.0;
        opt.step(0.01);
    }
    // constant unit grads: m_hat = v_hat = 1, so each step is lr / (1 + eps)
    for (double v : gate.data()) CHECK(v == doctest::Approx(-3 * 0.01 / (1.0 + 1e-6)).epsilon(1e-12));
    CHECK(bias[0] == doctest::Approx(4.0 - 3 * 0.01 / (1.0 + 1e-6)).epsilon(1e-12));

    Rng rng(3);
    Tensor w = Tensor::randn({3, 3}, rng).set_requires_grad(true);
    Optimizer adapted(cfg, {{"w", w}});
    CHECK(adapted.state().adapt == std::vector<bool>{true});
}

TEST_CASE("optimizers minimize a quadratic") {
    for (auto kind : {OptimizerKind::Lamb, OptimizerKind::AdamW}) {
        Rng rng(1);
        Tensor w = Tensor::randn({4, 4}, rng).set_requires_grad(true);
        const Tensor target = Tensor::randn({4, 4}, rng);
        OptimizerConfig cfg;
        cfg.kind = kind;
        cfg.weight_decay = 0.0;
        Optimizer opt(cfg, {{"w", w}});
        double first = 0.0, last = 0.0;
        for (int step = 0; step < 300; ++step) {
            opt.zero_grad();
            Tape tape;
            TapeScope scope(tape);
            const Tensor diff = sub(w, target);
            const Tensor loss = sum(mul(diff, diff));
            if (step == 0) first = loss.item();
            last = loss.item();
            tape.backward(loss);
            opt.step(0.02);
        }
        CHECK(last < 0.01 * first);
    }
}

TEST_CASE("state reload") {
    Tensor w = Tensor::zeros({2}).set_requires_grad(true);
    Optimizer opt(OptimizerConfig{}, {{"w", w}});
    OptimizerState bad;
    bad.m = {{0.0}};
    bad.v = {{0.0}};
    CHECK_THROWS_AS(opt.load_state(bad), ConfigMismatch);
    bad = OptimizerState{7, {{1.0, 2.0}}, {{3.0, 4.0}}, {}};
    CHECK_THROWS_AS(opt.load_state(bad), ConfigMismatch);
    OptimizerState good{7, {{1.0, 2.0}}, {{3.0, 4.0}}, {false}};
    opt.load_state(good);
    CHECK(opt.state().step == 7);
}

TEST_CASE("learning rate schedule") {
    const LrSchedule s{10, 110, 5e-3, 1.5e-3};
    CHECK(s.at(0) == doctest::Approx(5e-4));
    CHECK(s.at(9) == doctest::Approx(5e-3));
    CHECK(s.at(10) == doctest::Approx(5e-3));
    CHECK(s.at(109) == doctest::Approx(1.5e-3));
    CHECK(s.at(500) == doctest::Approx(1.5e-3));
    for (std::size_t i = 10; i < 109; ++i) CHECK(s.at(i + 1) <= s.at(i));
    for (std::size_t i = 0; i < 9; ++i) CHECK(s.at(i + 1) > s.at(i));
}
