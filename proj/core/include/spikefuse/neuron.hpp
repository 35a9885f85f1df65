#pragma once

#include <cstring>

#include "spikefuse/ops.hpp"
#include "spikefuse/tensor.hpp"

namespace spikefuse {

/// Leaky integrate-and-fire dynamics. The membrane follows
/// v' = v + (1/tau)(I - v); a spike fires where v' reaches v_th and the
/// membrane hard-resets to zero via v'' = v'(1 - s). Backward passes see a
/// scaled sigmoid derivative in place of the step. Relaxed mode swaps the
/// step for the sigmoid itself (soft spikes, soft reset) so the whole layer
/// becomes smooth enough for finite-difference checks.
struct LifConfig {
    double tau = 2.0;
    double v_th = 1.0;
    double v_reset = 0.0;
    double surrogate_slope = 4.0;
    bool relaxed = false;

    void validate() const {
        check(tau > 1.0, "LIF leak factor must exceed 1, got ", tau);
        check(v_th > v_reset, "LIF threshold ", v_th, " must exceed reset ", v_reset);
    }
};

namespace detail {
template <typename S>
S safe_sigmoid(S v) {
    return v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
}

// Polynomial 2^f exponential, about 1e-7 relative error. Branch-free and
// inlineable, unlike the libm call, so the surrogate backward loop can
// vectorize; it runs over every element of every spike tensor.
inline float fast_expf(float x) {
    x = std::max(-87.0f, std::min(88.0f, x));
    const float t = x * 1.4426950408889634f;
    const float fi = std::floor(t);
    const float f = t - fi;
    const float p =
        1.0f + f * (0.6931471805599453f +
                    f * (0.2402265069591007f +
                         f * (0.05550410866482158f +
                              f * (0.009618129107628477f + f * 0.001333355814642844f))));
    const std::int32_t i = static_cast<std::int32_t>(fi);
    float scale;
    const std::uint32_t bits = static_cast<std::uint32_t>(i + 127) << 23;
    std::memcpy(&scale, &bits, sizeof scale);
    return p * scale;
}

// Surrogate-gradient sigmoid: full precision in double (finite-difference
// validation runs there), approximate in float where throughput matters.
inline double surrogate_sigmoid(double v) { return safe_sigmoid(v); }
// Branch-free; the clamp inside fast_expf keeps both tails finite.
inline float surrogate_sigmoid(float v) { return 1.0f / (1.0f + fast_expf(-v)); }
}  // namespace detail

/// Whole-episode LIF recurrence over the leading time axis as one fused op.
/// Element for element it reproduces the step-by-step composite update (the
/// same expression ordering, so outputs agree bitwise); fusing removes the
/// per-step graph nodes, which dominate runtime otherwise. The backward
/// pass runs the adjoint recurrence in reverse over saved pre-reset
/// membranes, propagating through both the spike read-out and the reset
/// gate with the same scaled-sigmoid surrogate the composite ops use.
template <typename S>
Tensor<S> lif_forward(const Tensor<S>& x, const LifConfig& cfg, std::size_t time_steps = 0) {
    check(x.ndim() >= 1 && x.dim(0) >= 1, "LIF forward needs at least one time step");
    // An explicit step count reads the leading axis as [T*...]; the flat
    // layout of [T,B,...] and [T*B,...] is identical, so callers that carry
    // time folded into the batch axis can skip reshaping around the layer.
    const std::size_t T = time_steps == 0 ? x.dim(0) : time_steps;
    check(T >= 1 && x.size() % T == 0, "LIF forward: ", x.size(),
          " elements do not split into ", T, " time steps");
    const std::size_t R = x.size() / T;
    const S inv_tau = static_cast<S>(1.0 / cfg.tau);
    const S neg_vth = static_cast<S>(-cfg.v_th);
    const S slope = static_cast<S>(cfg.surrogate_slope);
    const bool relaxed = cfg.relaxed;

    const S* xv = x.values().data();
    std::vector<S> out(x.size());
    auto v1s = std::make_shared<std::vector<S>>(x.size());
    std::vector<S> v(R, static_cast<S>(cfg.v_reset));
    for (std::size_t t = 0; t < T; ++t) {
        const std::size_t base = t * R;
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t i = base + r;
            const S v1 = v[r] + (inv_tau * (xv[i] - v[r]) + S(0));
            const S over = v1 + neg_vth;
            const S s = relaxed ? detail::safe_sigmoid(slope * over + S(0))
                                : (over >= S(0) ? S(1) : S(0));
            out[i] = s;
            (*v1s)[i] = v1;
            v[r] = v1 * (S(-1) * s + S(1));
        }
    }
    Tensor<S> tx = x;
    return make_op<S>(
        x.shape(), std::move(out), {x},
        [tx, v1s, T, R, inv_tau, neg_vth, slope, relaxed](Node<S>& self) mutable {
            if (!tx.requires_grad()) return;
            S* gx = tx.grad_mut().data();
            const S* g = self.grad.data();
            const S* sv = self.values.data();
            const S* v1 = v1s->data();
            std::vector<S> dv(R, S(0));
            const S dv1_dvprev = S(1) - inv_tau;
            for (std::size_t t = T; t-- > 0;) {
                const std::size_t base = t * R;
                if (relaxed) {
                    // the stored output already is the surrogate sigmoid
                    for (std::size_t r = 0; r < R; ++r) {
                        const std::size_t i = base + r;
                        const S sig = sv[i];
                        const S surr = slope * sig * (S(1) - sig);
                        const S ds = g[i] - dv[r] * v1[i];
                        const S dv1 = ds * surr + dv[r] * (S(1) - sig);
                        gx[i] += dv1 * inv_tau;
                        dv[r] = dv1 * dv1_dvprev;
                    }
                } else {
                    for (std::size_t r = 0; r < R; ++r) {
                        const std::size_t i = base + r;
                        const S sig = detail::surrogate_sigmoid(slope * (v1[i] + neg_vth));
                        const S surr = slope * sig * (S(1) - sig);
                        const S ds = g[i] - dv[r] * v1[i];
                        const S dv1 = ds * surr + dv[r] * (S(1) - sv[i]);
                        gx[i] += dv1 * inv_tau;
                        dv[r] = dv1 * dv1_dvprev;
                    }
                }
            }
        });
}

template <typename S>
class LifLayer {
public:
    LifLayer() = default;
    explicit LifLayer(LifConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const LifConfig& config() const { return cfg_; }

    /// One membrane update on an arbitrary-shaped current tensor. State is
    /// created lazily at v_reset on the first step after a reset.
    Tensor<S> step(const Tensor<S>& input_current) {
        if (!v_.defined())
            v_ = Tensor<S>::full(input_current.shape(), static_cast<S>(cfg_.v_reset));
        check(v_.shape() == input_current.shape(), "LIF state shape ", shape_str(v_.shape()),
              " does not match input ", shape_str(input_current.shape()));
        Tensor<S> v1 = add(v_, affine(sub(input_current, v_), 1.0 / cfg_.tau));
        Tensor<S> over = v1 - cfg_.v_th;
        Tensor<S> s = cfg_.relaxed ? sigmoid(affine(over, cfg_.surrogate_slope))
                                   : heaviside_surrogate(over, cfg_.surrogate_slope);
        v_ = mul(v1, affine(s, -1.0, 1.0));
        return s;
    }

    /// Runs the recurrence over the leading time axis of x [T, ...] with a
    /// fresh state, so consecutive calls are independent episodes. A nonzero
    /// time_steps overrides the leading-axis read, for inputs shaped [T*B, ...].
    Tensor<S> forward(const Tensor<S>& x, std::size_t time_steps = 0) {
        reset_state();
        return lif_forward(x, cfg_, time_steps);
    }

    void reset_state() { v_ = Tensor<S>(); }

    /// Current membrane potentials; undefined before the first step.
    const Tensor<S>& membrane() const { return v_; }

private:
    LifConfig cfg_;
    Tensor<S> v_;
};

}  // namespace spikefuse
