#include <doctest.h>

#include <cmath>
#include <vector>

#include "spikefuse/gradcheck.hpp"
#include "spikefuse/neuron.hpp"
#include "spikefuse/ops.hpp"
#include "test_support.hpp"

using namespace spikefuse;
using testsup::all_binary;
using testsup::bit_equal;
using testsup::near;

namespace {

LifConfig default_cfg(bool relaxed = false) {
    LifConfig c;
    c.tau = 2.0;
    c.v_th = 1.0;
    c.v_reset = 0.0;
    c.surrogate_slope = 4.0;
    c.relaxed = relaxed;
    return c;
}

/// Scalar reference recurrence: v' = v + (I - v)/tau, spike at threshold,
/// multiplicative reset. Returns (spike, post-reset v).
std::pair<double, double> step_oracle(double v, double I, const LifConfig& c) {
    const double v1 = v + (I - v) / c.tau;
    double s;
    if (c.relaxed) {
        s = 1.0 / (1.0 + std::exp(-c.surrogate_slope * (v1 - c.v_th)));
    } else {
        s = v1 - c.v_th >= 0.0 ? 1.0 : 0.0;
    }
    return {s, v1 * (1.0 - s)};
}

}  // namespace

TEST_CASE("a step driven to exactly threshold spikes and resets") {
    LifLayer<double> lif(default_cfg());
    TensorD s = lif.step(TensorD::from({2.0}, {1}));
    CHECK(s.values() == std::vector<double>{1.0});
    CHECK(lif.membrane().values() == std::vector<double>{0.0});
}

TEST_CASE("a subthreshold step integrates without spiking") {
    LifLayer<double> lif(default_cfg());
    TensorD s = lif.step(TensorD::from({0.6}, {1}));
    CHECK(s.values() == std::vector<double>{0.0});
    CHECK(near(lif.membrane().values()[0], 0.3, 1e-15));
    // A second identical step leaks toward the input.
    TensorD s2 = lif.step(TensorD::from({0.6}, {1}));
    CHECK(s2.values() == std::vector<double>{0.0});
    CHECK(near(lif.membrane().values()[0], 0.45, 1e-15));
}

TEST_CASE("zero input is a fixed point") {
    LifLayer<double> lif(default_cfg());
    for (int t = 0; t < 5; ++t) {
        TensorD s = lif.step(TensorD::zeros({4}));
        for (double v : s.values()) CHECK(v == 0.0);
        for (double v : lif.membrane().values()) CHECK(v == 0.0);
    }
}

TEST_CASE("constant subthreshold drive follows the closed form") {
    // With tau = 2 and constant input c, the potential is c * (1 - 2^-t);
    // the step-by-step simulation must match to 1e-12 for t <= 10.
    const double c = 0.5;
    LifLayer<double> lif(default_cfg());
    for (int t = 1; t <= 10; ++t) {
        TensorD s = lif.step(TensorD::from({c}, {1}));
        CHECK(s.values()[0] == 0.0);
        const double want = c * (1.0 - std::pow(2.0, -t));
        CHECK(near(lif.membrane().values()[0], want, 1e-12));
    }
}

TEST_CASE("constant drive of twice the threshold spikes every step") {
    LifLayer<double> lif(default_cfg());
    for (int t = 0; t < 6; ++t) {
        TensorD s = lif.step(TensorD::from({2.0}, {1}));
        CHECK(s.values()[0] == 1.0);
        CHECK(lif.membrane().values()[0] == 0.0);
    }
}

TEST_CASE("post-step potentials stay strictly below threshold") {
    Rng rng(5);
    LifLayer<double> lif(default_cfg());
    for (int t = 0; t < 50; ++t) {
        lif.step(TensorD::randn(rng, {32}, 2.0));
        for (double v : lif.membrane().values()) CHECK(v < 1.0);
    }
}

TEST_CASE("a single step is monotone in the input current") {
    LifLayer<double> lif(default_cfg());
    double prev = 0.0;
    for (double I = -1.0; I <= 4.0; I += 0.125) {
        lif.reset_state();
        TensorD s = lif.step(TensorD::from({I}, {1}));
        CHECK(s.values()[0] >= prev);
        prev = s.values()[0];
    }
}

TEST_CASE("reset clears the membrane and is idempotent") {
    LifLayer<double> lif(default_cfg());
    lif.step(TensorD::from({0.6, 0.8}, {2}));
    lif.reset_state();
    lif.step(TensorD::zeros({2}));
    for (double v : lif.membrane().values()) CHECK(v == 0.0);
    lif.reset_state();
    lif.reset_state();
    TensorD s = lif.step(TensorD::zeros({2}));
    for (double v : s.values()) CHECK(v == 0.0);
}

TEST_CASE("forward starts from a fresh state every call") {
    Rng rng(9);
    TensorD x = TensorD::randn(rng, {3, 8}, 1.5);
    LifLayer<double> lif(default_cfg());
    TensorD a = lif.forward(x);
    TensorD b = lif.forward(x);
    CHECK(bit_equal(a.values(), b.values()));
}

TEST_CASE("relaxed mode approaches spiking outputs at extreme slope") {
    // Away from the threshold (margin > 0.01) a slope of 1000 pushes the
    // soft spike within 1e-3 of the hard one.
    LifConfig relaxed = default_cfg(true);
    relaxed.surrogate_slope = 1000.0;
    LifConfig spiking = default_cfg(false);
    Rng rng(13);
    std::size_t tested = 0;
    while (tested < 200) {
        const double v = rng.uniform(-2.0, 2.0);
        const double I = rng.uniform(-2.0, 3.0);
        const double v1 = v + (I - v) / 2.0;
        if (std::fabs(v1 - 1.0) <= 0.01) continue;  // too close to call
        auto [ss, sv] = step_oracle(v, I, spiking);
        auto [rs, rv] = step_oracle(v, I, relaxed);
        CHECK(near(rs, ss, 1e-3));
        CHECK(near(rv, sv, 1e-2));
        ++tested;
    }
}

TEST_CASE("layer steps match the scalar recurrence oracle") {
    for (bool relaxed : {false, true}) {
        CAPTURE(relaxed);
        LifConfig cfg = default_cfg(relaxed);
        LifLayer<double> lif(cfg);
        Rng rng(21);
        std::vector<double> v(16, 0.0);
        for (int t = 0; t < 8; ++t) {
            TensorD x = TensorD::randn(rng, {16}, 1.5);
            TensorD s = lif.step(x);
            for (std::size_t i = 0; i < 16; ++i) {
                auto [so, vo] = step_oracle(v[i], x.values()[i], cfg);
                CHECK(near(s.values()[i], so, 1e-12));
                v[i] = vo;
            }
        }
    }
}

TEST_CASE("episode forward equals the composed per-step graph") {
    // The whole-episode forward must reproduce the step-by-step composite
    // bit for bit, in both scalar widths and both modes.
    auto run = [](auto tag, bool relaxed) {
        using S = decltype(tag);
        LifConfig cfg = default_cfg(relaxed);
        Rng rng(31);
        const std::size_t T = 5, R = 24;
        Tensor<S> x = Tensor<S>::randn(rng, {T, R}, 1.5);
        Tensor<S> fused = lif_forward(x, cfg);

        LifLayer<S> lif(cfg);
        std::vector<Tensor<S>> parts;
        for (std::size_t t = 0; t < T; ++t) parts.push_back(lif.step(slice0(x, t)));
        Tensor<S> composite = stack0(parts);
        CHECK(bit_equal(fused.values(), composite.values()));
    };
    run(double{}, false);
    run(double{}, true);
    run(float{}, false);
    run(float{}, true);
}

TEST_CASE("episode backward matches the composed graph gradients") {
    // Same recurrence, two graph constructions; gradients agree to rounding.
    for (bool relaxed : {false, true}) {
        CAPTURE(relaxed);
        LifConfig cfg = default_cfg(relaxed);
        Rng rng(37);
        const std::size_t T = 4, R = 12;
        TensorD x = TensorD::randn(rng, {T, R}, 1.5).set_requires_grad(true);
        TensorD w = TensorD::randn(rng, {T, R});

        TensorD fused = lif_forward(x, cfg);
        sum_all(mul(fused, w)).backward();
        std::vector<double> got = x.grad();
        x.zero_grad();

        LifLayer<double> lif(cfg);
        std::vector<TensorD> parts;
        for (std::size_t t = 0; t < T; ++t) parts.push_back(lif.step(slice0(x, t)));
        sum_all(mul(stack0(parts), w)).backward();
        CHECK(testsup::max_abs_diff(got, x.grad()) <= 1e-12);
    }
}

TEST_CASE("float spiking backward tracks the double path closely") {
    // The 32-bit surrogate uses a polynomial exponential; it may differ from
    // the 64-bit gradients only at single-precision rounding level.
    LifConfig cfg = default_cfg(false);
    Rng rng(41);
    const std::size_t T = 4, R = 64;
    TensorD xd = TensorD::randn(rng, {T, R}, 1.5).set_requires_grad(true);
    std::vector<float> xf_vals(xd.values().begin(), xd.values().end());
    TensorF xf = TensorF::from(std::move(xf_vals), {T, R}).set_requires_grad(true);

    sum_all(lif_forward(xd, cfg)).backward();
    sum_all(lif_forward(xf, cfg)).backward();
    for (std::size_t i = 0; i < xd.grad().size(); ++i) {
        CHECK(near(static_cast<double>(xf.grad()[i]), xd.grad()[i], 1e-5));
    }
}

TEST_CASE("spike trains are binary for any input") {
    Rng rng(43);
    LifConfig cfg = default_cfg(false);
    for (int i = 0; i < 200; ++i) {
        TensorD x = TensorD::randn(rng, {3, 1 + rng.uniform_int(32)}, 3.0);
        TensorD s = lif_forward(x, cfg);
        REQUIRE(all_binary(s.values()));
    }
}

TEST_CASE("episode forward validates its time axis") {
    LifConfig cfg = default_cfg();
    TensorD x = TensorD::zeros({6});
    CHECK_THROWS_AS(lif_forward(x, cfg, 4), std::invalid_argument);  // 6 % 4 != 0
    CHECK_THROWS_AS(lif_forward(TensorD::zeros({0}), cfg, 0), std::invalid_argument);
}

TEST_CASE("config validation rejects a non-leaking or inverted neuron") {
    LifConfig bad = default_cfg();
    bad.tau = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = default_cfg();
    bad.v_th = -0.5;
    bad.v_reset = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("relaxed episode gradients pass finite differences") {
    LifConfig cfg = default_cfg(true);
    Rng rng(47);
    TensorD x = TensorD::randn(rng, {3, 10}, 1.2).set_requires_grad(true);
    TensorD w = TensorD::randn(rng, {3, 10});
    std::vector<std::pair<std::string, TensorD>> params = {{"x", x}};
    GradCheckReport rep =
        gradcheck(params, [&]() { return sum_all(mul(lif_forward(x, cfg), w)); }, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}
