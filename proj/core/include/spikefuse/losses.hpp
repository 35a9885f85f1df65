#pragma once

#include <iostream>

#include "spikefuse/ops.hpp"

namespace spikefuse {

struct SaoConfig {
    double temperature = 0.1;
    bool symmetric = false;

    void validate() const {
        check(temperature > 0.0, "alignment temperature must be positive, got ", temperature);
    }
};

/// Pools residual features [T,B,N,D] to one vector per (t, sample): mean over
/// the patch axis, then L2 normalization (all-zero vectors pass through).
template <typename S>
Tensor<S> sao_features(const Tensor<S>& res) {
    check(res.ndim() == 4, "alignment features expect [T,B,N,D], got ",
          shape_str(res.shape()));
    return l2_normalize_last(reduce_mean(res, 2));
}

namespace detail {

/// InfoNCE over the batch at matched time steps: anchors fa, candidates fv,
/// positives on the diagonal. Row-max subtraction keeps the exponentials
/// bounded without changing the value.
template <typename S>
Tensor<S> nce_direction(const Tensor<S>& fa, const Tensor<S>& fv, double temperature) {
    const std::size_t T = fa.dim(0), B = fa.dim(1);
    Tensor<S> sim = affine(matmul(fa, permute(fv, {0, 2, 1})), 1.0 / temperature);
    std::vector<S> mx(T * B);
    {
        const auto& sv = sim.values();
        for (std::size_t r = 0; r < T * B; ++r) {
            S m = sv[r * B];
            for (std::size_t j = 1; j < B; ++j) m = std::max(m, sv[r * B + j]);
            mx[r] = m;
        }
    }
    Tensor<S> shifted = sub(sim, Tensor<S>::from(std::move(mx), {T, B, 1}));
    Tensor<S> logdenom = log_t(reduce_sum(exp_t(shifted), 2));
    std::vector<S> eye(B * B, S(0));
    for (std::size_t i = 0; i < B; ++i) eye[i * B + i] = S(1);
    Tensor<S> diag = reduce_sum(mul(shifted, Tensor<S>::from(std::move(eye), {B, B})), 2);
    return mean_all(sub(logdenom, diag));
}

}  // namespace detail

/// Contrastive alignment between the two modalities' pooled residual
/// features. Degenerates to zero (with a warning) for batches of one, where
/// there are no negatives.
template <typename S>
Tensor<S> sao_loss(const Tensor<S>& fa, const Tensor<S>& fv, const SaoConfig& cfg) {
    cfg.validate();
    check(fa.ndim() == 3 && fa.shape() == fv.shape(),
          "alignment features must be equal [T,B,D] shapes, got ", shape_str(fa.shape()),
          " and ", shape_str(fv.shape()));
    if (fa.dim(1) < 2) {
        std::cerr << "spikefuse: warning: alignment loss needs a batch of at least 2, got "
                  << fa.dim(1) << "; returning 0\n";
        return Tensor<S>::scalar(S(0));
    }
    Tensor<S> loss = detail::nce_direction(fa, fv, cfg.temperature);
    if (cfg.symmetric)
        loss = affine(add(loss, detail::nce_direction(fv, fa, cfg.temperature)), 0.5);
    return loss;
}

template <typename S>
struct LossBreakdown {
    S ce = S(0);
    S sao = S(0);
    S total = S(0);
    Tensor<S> total_t;
};

/// total = cross entropy + alignment term, both unweighted. With the
/// alignment term disabled the total is the cross entropy alone.
template <typename S>
LossBreakdown<S> total_loss(const Tensor<S>& logits, const std::vector<std::size_t>& labels,
                            const Tensor<S>& res_a, const Tensor<S>& res_v,
                            const SaoConfig& cfg, bool sao_enabled) {
    LossBreakdown<S> out;
    Tensor<S> ce = cross_entropy(logits, labels);
    out.ce = ce.item();
    if (sao_enabled) {
        check(res_a.defined() && res_v.defined(),
              "alignment loss requested but no residual features were produced");
        Tensor<S> sao = sao_loss(sao_features(res_a), sao_features(res_v), cfg);
        out.sao = sao.item();
        out.total_t = add(ce, sao);
    } else {
        out.total_t = ce;
    }
    out.total = out.total_t.item();
    return out;
}

}  // namespace spikefuse
