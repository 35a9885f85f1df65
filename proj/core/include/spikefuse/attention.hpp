#pragma once

#include "spikefuse/layers.hpp"
#include "spikefuse/neuron.hpp"
#include "spikefuse/ops.hpp"

namespace spikefuse {

struct AttentionConfig {
    double scale = 0.125;
    std::size_t heads = 1;
    std::size_t embed_dim = 64;
    LifConfig lif;

    void validate() const {
        check(scale > 0.0, "attention scale must be positive, got ", scale);
        check(heads >= 1 && embed_dim % heads == 0, "embed dim ", embed_dim,
              " must divide across ", heads, " heads");
        lif.validate();
    }
};

/// Spiking attention over [T,B,N,D] spike tensors. Q, K, V are each
/// SN(BN(Linear(x))); the raw product Q K^T V is scaled, re-spiked, projected
/// and re-spiked again, so the output stays in pure spike form and keeps the
/// input shape. With attend_over_time the N x N contraction is replaced by a
/// T x T one per (B, N) slice; membrane dynamics still run along physical
/// time in either case.
template <typename S>
class SpikingSelfAttention {
public:
    SpikingSelfAttention() = default;
    SpikingSelfAttention(Rng& rng, const AttentionConfig& cfg, bool attend_over_time = false)
        : cfg_(cfg), over_time_(attend_over_time) {
        cfg_.validate();
        const std::size_t d = cfg_.embed_dim;
        wq_ = Linear<S>(rng, d, d, false);
        wk_ = Linear<S>(rng, d, d, false);
        wv_ = Linear<S>(rng, d, d, false);
        wo_ = Linear<S>(rng, d, d, false);
        bnq_ = BatchNorm<S>(d, 3);
        bnk_ = BatchNorm<S>(d, 3);
        bnv_ = BatchNorm<S>(d, 3);
        bno_ = BatchNorm<S>(d, 3);
        lq_ = LifLayer<S>(cfg_.lif);
        lk_ = LifLayer<S>(cfg_.lif);
        lv_ = LifLayer<S>(cfg_.lif);
        lattn_ = LifLayer<S>(cfg_.lif);
        lo_ = LifLayer<S>(cfg_.lif);
    }

    Tensor<S> forward(const Tensor<S>& x, bool train) { return forward_cross(x, x, train); }

    /// Queries from x_q, keys and values from x_kv.
    Tensor<S> forward_cross(const Tensor<S>& x_q, const Tensor<S>& x_kv, bool train) {
        check(x_q.ndim() == 4 && x_q.shape() == x_kv.shape(),
              "attention operands must be equal [T,B,N,D] shapes, got ",
              shape_str(x_q.shape()), " and ", shape_str(x_kv.shape()));
        check(x_q.dim(3) == cfg_.embed_dim, "attention built for dim ", cfg_.embed_dim,
              ", got ", shape_str(x_q.shape()));
        Tensor<S> q = lq_.forward(bnq_.forward(wq_.forward(x_q), train));
        Tensor<S> k = lk_.forward(bnk_.forward(wk_.forward(x_kv), train));
        Tensor<S> v = lv_.forward(bnv_.forward(wv_.forward(x_kv), train));
        Tensor<S> a = attend(q, k, v);
        Tensor<S> sa = lattn_.forward(a);
        return lo_.forward(bno_.forward(wo_.forward(sa), train));
    }

    /// Raw scaled Q K^T V with no spiking stages; exposed for direct checks
    /// against brute-force contraction.
    Tensor<S> attend(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v) const {
        Tensor<S> qq = q, kk = k, vv = v;
        if (over_time_) {
            // [T,B,N,D] -> [B,N,T,D]: the contraction axis becomes time.
            qq = permute(q, {1, 2, 0, 3});
            kk = permute(k, {1, 2, 0, 3});
            vv = permute(v, {1, 2, 0, 3});
        }
        Tensor<S> out = contract(qq, kk, vv);
        if (over_time_) out = permute(out, {2, 0, 1, 3});
        return affine(out, cfg_.scale);
    }

    void collect(const std::string& prefix, ParamCollector<S>& pc) {
        wq_.collect(prefix + ".wq", pc);
        wk_.collect(prefix + ".wk", pc);
        wv_.collect(prefix + ".wv", pc);
        wo_.collect(prefix + ".wo", pc);
        bnq_.collect(prefix + ".bnq", pc);
        bnk_.collect(prefix + ".bnk", pc);
        bnv_.collect(prefix + ".bnv", pc);
        bno_.collect(prefix + ".bno", pc);
    }

private:
    Tensor<S> contract(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v) const {
        const std::size_t h = cfg_.heads;
        if (h == 1) {
            Tensor<S> attn = matmul(q, permute(k, {0, 1, 3, 2}));
            return matmul(attn, v);
        }
        const std::size_t d0 = q.dim(0), d1 = q.dim(1), n = q.dim(2);
        const std::size_t dh = cfg_.embed_dim / h;
        auto split = [&](const Tensor<S>& t) {
            return permute(reshape(t, {d0, d1, n, h, dh}), {0, 1, 3, 2, 4});
        };
        Tensor<S> qs = split(q), ks = split(k), vs = split(v);
        Tensor<S> attn = matmul(qs, permute(ks, {0, 1, 2, 4, 3}));
        Tensor<S> out = matmul(attn, vs);
        return reshape(permute(out, {0, 1, 3, 2, 4}), {d0, d1, n, cfg_.embed_dim});
    }

    AttentionConfig cfg_;
    bool over_time_ = false;
    Linear<S> wq_, wk_, wv_, wo_;
    BatchNorm<S> bnq_, bnk_, bnv_, bno_;
    LifLayer<S> lq_, lk_, lv_, lattn_, lo_;
};

/// Cross-modal complementary attention for one modality: a spatial branch
/// (cross attention over patches, averaged over the patch axis and
/// re-broadcast) and a temporal branch (cross attention over time, averaged
/// over time and re-broadcast), combined element-wise into a residual.
/// The two branches hold independent parameter sets.
template <typename S>
class CrossModalAttention {
public:
    CrossModalAttention() = default;
    CrossModalAttention(Rng& rng, const AttentionConfig& cfg)
        : spatial_(rng, cfg, false), temporal_(rng, cfg, true) {}

    /// Cross attention then mean over patches, broadcast back: the result is
    /// constant along the patch axis.
    Tensor<S> spatial(const Tensor<S>& x_q, const Tensor<S>& x_kv, bool train) {
        Tensor<S> s = spatial_.forward_cross(x_q, x_kv, train);
        return expand_axis(reduce_mean(s, 2), 2, x_q.dim(2));
    }

    /// Cross attention over time then mean over time, broadcast back: the
    /// result is constant along the time axis.
    Tensor<S> temporal(const Tensor<S>& x_q, const Tensor<S>& x_kv, bool train) {
        Tensor<S> t = temporal_.forward_cross(x_q, x_kv, train);
        return expand_axis(reduce_mean(t, 0), 0, x_q.dim(0));
    }

    /// Element-wise product of the two branches; used as the cross-modal
    /// residual and as the feature fed to the alignment loss.
    Tensor<S> residual(const Tensor<S>& x_q, const Tensor<S>& x_kv, bool train) {
        return mul(spatial(x_q, x_kv, train), temporal(x_q, x_kv, train));
    }

    void collect(const std::string& prefix, ParamCollector<S>& pc) {
        spatial_.collect(prefix + ".spatial", pc);
        temporal_.collect(prefix + ".temporal", pc);
    }

private:
    SpikingSelfAttention<S> spatial_, temporal_;
};

struct FusionConfig {
    double alpha = 1.5;
    std::size_t depth = 2;

    void validate() const {
        check(alpha >= 0.0, "fusion strength must be non-negative, got ", alpha);
        check(depth >= 1, "need at least one encoder block");
    }
};

/// x + alpha * res. Callers that want exact pass-through at alpha = 0 skip
/// the call instead; floating addition of a zero term is not a bitwise
/// identity on negative zeros.
template <typename S>
Tensor<S> residual_fuse(const Tensor<S>& x, const Tensor<S>& res, double alpha) {
    check(x.shape() == res.shape(), "residual shape ", shape_str(res.shape()),
          " does not match ", shape_str(x.shape()));
    return add(x, affine(res, alpha));
}

/// Transformer-style block body shared by both modalities: spiking MLP with
/// pre-activation batch norm, Linear(D -> r*D) -> BN -> LIF -> Linear -> BN
/// -> LIF.
template <typename S>
class SpikingMlp {
public:
    SpikingMlp() = default;
    SpikingMlp(Rng& rng, std::size_t dim, std::size_t ratio, const LifConfig& lif) {
        const std::size_t hidden = dim * ratio;
        fc1_ = Linear<S>(rng, dim, hidden, false);
        bn1_ = BatchNorm<S>(hidden, 3);
        lif1_ = LifLayer<S>(lif);
        fc2_ = Linear<S>(rng, hidden, dim, false);
        bn2_ = BatchNorm<S>(dim, 3);
        lif2_ = LifLayer<S>(lif);
    }

    Tensor<S> forward(const Tensor<S>& x, bool train) {
        Tensor<S> h = lif1_.forward(bn1_.forward(fc1_.forward(x), train));
        return lif2_.forward(bn2_.forward(fc2_.forward(h), train));
    }

    void collect(const std::string& prefix, ParamCollector<S>& pc) {
        fc1_.collect(prefix + ".fc1", pc);
        bn1_.collect(prefix + ".bn1", pc);
        fc2_.collect(prefix + ".fc2", pc);
        bn2_.collect(prefix + ".bn2", pc);
    }

private:
    Linear<S> fc1_, fc2_;
    BatchNorm<S> bn1_, bn2_;
    LifLayer<S> lif1_, lif2_;
};

}  // namespace spikefuse
