#include <doctest.h>

#include <cstddef>
#include <vector>

#include "spikefuse/attention.hpp"
#include "spikefuse/ops.hpp"
#include "spikefuse/tensor.hpp"
#include "test_support.hpp"

using namespace spikefuse;

namespace {

AttentionConfig attn_cfg(std::size_t dim, double scale = 0.125, std::size_t heads = 1) {
    AttentionConfig cfg;
    cfg.embed_dim = dim;
    cfg.scale = scale;
    cfg.heads = heads;
    return cfg;
}

// Explicit-loop contraction for the raw attend() product, one head slice at a
// time. Spatial: out[t,b,n,d] = s * sum_m (sum_e q[t,b,n,e] k[t,b,m,e]) v[t,b,m,d].
// Temporal swaps the m-sum over patches for a sum over source time steps.
TensorD attend_oracle(const TensorD& q, const TensorD& k, const TensorD& v, double scale,
                      std::size_t heads, bool over_time) {
    const std::size_t T = q.dim(0), B = q.dim(1), N = q.dim(2), D = q.dim(3);
    const std::size_t dh = D / heads;
    TensorD out = TensorD::zeros({T, B, N, D});
    std::vector<double>& o = out.values_mut();
    const auto strides = row_major_strides(out.shape());
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t h = 0; h < heads; ++h)
                    for (std::size_t d = h * dh; d < (h + 1) * dh; ++d) {
                        double acc = 0.0;
                        if (!over_time) {
                            for (std::size_t m = 0; m < N; ++m) {
                                double qk = 0.0;
                                for (std::size_t e = h * dh; e < (h + 1) * dh; ++e)
                                    qk += q.at({t, b, n, e}) * k.at({t, b, m, e});
                                acc += qk * v.at({t, b, m, d});
                            }
                        } else {
                            for (std::size_t u = 0; u < T; ++u) {
                                double qk = 0.0;
                                for (std::size_t e = h * dh; e < (h + 1) * dh; ++e)
                                    qk += q.at({t, b, n, e}) * k.at({u, b, n, e});
                                acc += qk * v.at({u, b, n, d});
                            }
                        }
                        o[t * strides[0] + b * strides[1] + n * strides[2] + d * strides[3]] =
                            scale * acc;
                    }
    return out;
}

TensorD random_spikes(Rng& rng, const Shape& shape, double p = 0.5) {
    TensorD x = TensorD::zeros(shape);
    for (double& v : x.values_mut()) v = rng.uniform() < p ? 1.0 : 0.0;
    return x;
}

}  // namespace

TEST_CASE("raw attention product matches brute force on small instances") {
    Rng rng(41);
    // Every (T, N) pair up to 4 with D up to 4 exercised the way the checks
    // downstream pin it: absolute agreement to 1e-12.
    for (std::size_t T : {1u, 2u, 4u})
        for (std::size_t N : {1u, 3u, 4u})
            for (std::size_t D : {1u, 2u, 4u})
                for (bool over_time : {false, true}) {
                    const double scale = 0.5;
                    SpikingSelfAttention<double> ssa(rng, attn_cfg(D, scale), over_time);
                    const std::size_t B = 2;
                    TensorD q = TensorD::uniform(rng, {T, B, N, D}, 0.0, 1.0);
                    TensorD k = TensorD::uniform(rng, {T, B, N, D}, 0.0, 1.0);
                    TensorD v = TensorD::uniform(rng, {T, B, N, D}, 0.0, 1.0);
                    TensorD got = ssa.attend(q, k, v);
                    TensorD want = attend_oracle(q, k, v, scale, 1, over_time);
                    REQUIRE(got.shape() == want.shape());
                    CHECK(testsup::max_abs_diff(got.values(), want.values()) < 1e-12);
                }
}

TEST_CASE("multi-head attention keeps contractions inside each head slice") {
    Rng rng(43);
    const std::size_t T = 3, B = 2, N = 4, D = 4, heads = 2;
    for (bool over_time : {false, true}) {
        SpikingSelfAttention<double> ssa(rng, attn_cfg(D, 0.25, heads), over_time);
        TensorD q = TensorD::uniform(rng, {T, B, N, D}, 0.0, 1.0);
        TensorD k = TensorD::uniform(rng, {T, B, N, D}, 0.0, 1.0);
        TensorD v = TensorD::uniform(rng, {T, B, N, D}, 0.0, 1.0);
        TensorD got = ssa.attend(q, k, v);
        TensorD want = attend_oracle(q, k, v, 0.25, heads, over_time);
        CHECK(testsup::max_abs_diff(got.values(), want.values()) < 1e-12);
        // Cross-head leakage check: a value living in head 0 must not move
        // outputs in head 1's slice.
        TensorD v2 = v.detach();
        v2.values_mut()[0] += 1.0;  // (t=0,b=0,n=0,d=0), head 0
        TensorD got2 = ssa.attend(q, k, v2);
        for (std::size_t d = D / heads; d < D; ++d)
            CHECK(got2.at({0, 0, 0, d}) == got.at({0, 0, 0, d}));
    }
}

TEST_CASE("attention forward emits pure spikes and keeps shape") {
    Rng rng(44);
    const std::size_t T = 3, B = 4, N = 5, D = 8;
    for (bool over_time : {false, true}) {
        SpikingSelfAttention<double> ssa(rng, attn_cfg(D), over_time);
        TensorD x = random_spikes(rng, {T, B, N, D});
        TensorD y = ssa.forward(x, true);
        REQUIRE(y.shape() == x.shape());
        CHECK(testsup::all_binary(y.values()));
    }
}

TEST_CASE("zero keys and values silence the attention output") {
    Rng rng(45);
    const std::size_t T = 2, B = 3, N = 4, D = 8;
    SpikingSelfAttention<double> ssa(rng, attn_cfg(D));
    TensorD x_q = random_spikes(rng, {T, B, N, D});
    TensorD x_kv = TensorD::zeros({T, B, N, D});
    TensorD y = ssa.forward_cross(x_q, x_kv, true);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("self attention is cross attention with both operands equal") {
    Rng rng(46);
    const std::size_t T = 2, B = 3, N = 4, D = 8;
    SpikingSelfAttention<double> ssa(rng, attn_cfg(D));
    TensorD x = random_spikes(rng, {T, B, N, D});
    TensorD a = ssa.forward(x, true);
    TensorD b = ssa.forward_cross(x, x, true);
    CHECK(testsup::bit_equal(a.values(), b.values()));
}

TEST_CASE("attention rejects mismatched operands") {
    Rng rng(47);
    SpikingSelfAttention<double> ssa(rng, attn_cfg(8));
    TensorD a = TensorD::zeros({2, 2, 3, 8});
    TensorD b = TensorD::zeros({2, 2, 4, 8});
    CHECK_THROWS(ssa.forward_cross(a, b, true));
    TensorD c = TensorD::zeros({2, 2, 3, 4});
    CHECK_THROWS(ssa.forward(c, true));
    AttentionConfig bad = attn_cfg(8);
    bad.heads = 3;  // 8 % 3 != 0
    CHECK_THROWS(SpikingSelfAttention<double>(rng, bad));
    AttentionConfig neg = attn_cfg(8);
    neg.scale = 0.0;
    CHECK_THROWS(SpikingSelfAttention<double>(rng, neg));
}

TEST_CASE("spatial branch output is constant along the patch axis") {
    Rng rng(48);
    const std::size_t T = 3, B = 2, N = 5, D = 8;
    CrossModalAttention<double> cm(rng, attn_cfg(D));
    TensorD x_q = random_spikes(rng, {T, B, N, D});
    TensorD x_kv = random_spikes(rng, {T, B, N, D});
    TensorD s = cm.spatial(x_q, x_kv, true);
    REQUIRE(s.shape() == x_q.shape());
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 1; n < N; ++n)
                for (std::size_t d = 0; d < D; ++d)
                    CHECK(s.at({t, b, n, d}) == s.at({t, b, 0, d}));
}

TEST_CASE("temporal branch output is constant along the time axis") {
    Rng rng(49);
    const std::size_t T = 4, B = 2, N = 3, D = 8;
    CrossModalAttention<double> cm(rng, attn_cfg(D));
    TensorD x_q = random_spikes(rng, {T, B, N, D});
    TensorD x_kv = random_spikes(rng, {T, B, N, D});
    TensorD out = cm.temporal(x_q, x_kv, true);
    REQUIRE(out.shape() == x_q.shape());
    for (std::size_t t = 1; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t d = 0; d < D; ++d)
                    CHECK(out.at({t, b, n, d}) == out.at({0, b, n, d}));
}

TEST_CASE("cross-modal branches are mean-broadcast cross attention") {
    // CrossModalAttention draws its two branches from the rng in declaration
    // order, so replaying the same seed yields bit-identical standalone
    // attention modules to compare against.
    const std::size_t T = 3, B = 2, N = 4, D = 8;
    Rng r1(50);
    CrossModalAttention<double> cm(r1, attn_cfg(D));
    Rng r2(50);
    SpikingSelfAttention<double> ref_sp(r2, attn_cfg(D), false);
    SpikingSelfAttention<double> ref_tm(r2, attn_cfg(D), true);

    Rng data_rng(51);
    TensorD x_q = random_spikes(data_rng, {T, B, N, D});
    TensorD x_kv = random_spikes(data_rng, {T, B, N, D});

    TensorD want_sp = expand_axis(reduce_mean(ref_sp.forward_cross(x_q, x_kv, true), 2), 2, N);
    TensorD got_sp = cm.spatial(x_q, x_kv, true);
    CHECK(testsup::bit_equal(got_sp.values(), want_sp.values()));

    TensorD want_tm = expand_axis(reduce_mean(ref_tm.forward_cross(x_q, x_kv, true), 0), 0, T);
    TensorD got_tm = cm.temporal(x_q, x_kv, true);
    CHECK(testsup::bit_equal(got_tm.values(), want_tm.values()));
}

TEST_CASE("cross-modal residual is the elementwise branch product") {
    Rng rng(52);
    const std::size_t T = 3, B = 2, N = 4, D = 8;
    CrossModalAttention<double> cm(rng, attn_cfg(D));
    TensorD x_q = random_spikes(rng, {T, B, N, D});
    TensorD x_kv = random_spikes(rng, {T, B, N, D});
    TensorD res = cm.residual(x_q, x_kv, true);
    TensorD want = mul(cm.spatial(x_q, x_kv, true), cm.temporal(x_q, x_kv, true));
    CHECK(testsup::bit_equal(res.values(), want.values()));
    // Branch outputs are means of spikes, so the product stays in [0, 1].
    for (double v : res.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("silent partner modality zeroes the cross-modal residual") {
    Rng rng(53);
    const std::size_t T = 2, B = 2, N = 4, D = 8;
    CrossModalAttention<double> cm(rng, attn_cfg(D));
    TensorD x_q = random_spikes(rng, {T, B, N, D});
    TensorD zero = TensorD::zeros({T, B, N, D});
    TensorD res = cm.residual(x_q, zero, true);
    for (double v : res.values()) CHECK(v == 0.0);
}

TEST_CASE("residual fusion scales and adds") {
    Rng rng(54);
    TensorD x = TensorD::uniform(rng, {2, 3, 4, 5}, 0.0, 1.0);
    TensorD res = TensorD::uniform(rng, {2, 3, 4, 5}, 0.0, 1.0);
    TensorD fused = residual_fuse(x, res, 1.5);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(fused.values()[i] == doctest::Approx(x.values()[i] + 1.5 * res.values()[i]).epsilon(1e-15));

    TensorD doubled = residual_fuse(x, x, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(doubled.values()[i] == 2.0 * x.values()[i]);

    TensorD same = residual_fuse(x, res, 0.0);
    CHECK(testsup::bit_equal(same.values(), x.values()));

    TensorD bad = TensorD::zeros({2, 3, 4, 4});
    CHECK_THROWS(residual_fuse(x, bad, 1.0));
}

TEST_CASE("attention forward is unchanged under batch permutation") {
    Rng rng(55);
    const std::size_t T = 2, B = 4, N = 3, D = 8;
    SpikingSelfAttention<double> ssa(rng, attn_cfg(D));
    TensorD x = random_spikes(rng, {T, B, N, D});
    TensorD y = ssa.forward(x, true);

    // Reverse the batch axis, run again, and undo the permutation. Batch norm
    // statistics pool over the whole batch, so sample outputs only depend on
    // the batch as a set; spike outputs make any mismatch show up as a full
    // 0/1 flip rather than rounding noise.
    std::vector<std::size_t> perm(B);
    for (std::size_t b = 0; b < B; ++b) perm[b] = B - 1 - b;
    TensorD xp = TensorD::zeros({T, B, N, D});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t d = 0; d < D; ++d) {
                    const auto st = row_major_strides(x.shape());
                    xp.values_mut()[t * st[0] + perm[b] * st[1] + n * st[2] + d * st[3]] =
                        x.at({t, b, n, d});
                }
    TensorD yp = ssa.forward(xp, true);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t d = 0; d < D; ++d)
                    CHECK(yp.at({t, perm[b], n, d}) == y.at({t, b, n, d}));
}

TEST_CASE("spiking mlp keeps shape, emits spikes, and passes zeros through") {
    Rng rng(56);
    const std::size_t T = 2, B = 3, N = 4, D = 8;
    SpikingMlp<double> mlp(rng, D, 2, LifConfig{});
    TensorD x = random_spikes(rng, {T, B, N, D});
    TensorD y = mlp.forward(x, true);
    REQUIRE(y.shape() == x.shape());
    CHECK(testsup::all_binary(y.values()));

    SpikingMlp<double> mlp2(rng, D, 2, LifConfig{});
    TensorD zeros = TensorD::zeros({T, B, N, D});
    TensorD yz = mlp2.forward(zeros, true);
    for (double v : yz.values()) CHECK(v == 0.0);
}

TEST_CASE("float attention matches its own double-width contraction closely") {
    Rng rng(57);
    const std::size_t T = 2, B = 2, N = 3, D = 4;
    SpikingSelfAttention<float> ssa(rng, attn_cfg(D, 0.125));
    TensorF q = TensorF::uniform(rng, {T, B, N, D}, 0.0, 1.0);
    TensorF k = TensorF::uniform(rng, {T, B, N, D}, 0.0, 1.0);
    TensorF v = TensorF::uniform(rng, {T, B, N, D}, 0.0, 1.0);
    TensorF got = ssa.attend(q, k, v);
    TensorD qd = TensorD::zeros(q.shape()), kd = TensorD::zeros(k.shape()),
            vd = TensorD::zeros(v.shape());
    for (std::size_t i = 0; i < q.size(); ++i) {
        qd.values_mut()[i] = q.values()[i];
        kd.values_mut()[i] = k.values()[i];
        vd.values_mut()[i] = v.values()[i];
    }
    TensorD want = attend_oracle(qd, kd, vd, 0.125, 1, false);
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(testsup::near(got.values()[i], want.values()[i], 1e-5));
}
