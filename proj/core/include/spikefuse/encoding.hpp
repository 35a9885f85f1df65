#pragma once

#include "spikefuse/layers.hpp"
#include "spikefuse/neuron.hpp"
#include "spikefuse/ops.hpp"

namespace spikefuse {

/// Replicates a static input along a new leading time axis.
template <typename S>
Tensor<S> direct_code(const Tensor<S>& x, std::size_t T) {
    check(T >= 1, "direct coding needs at least one time step");
    return expand_axis(x, 0, T);
}

/// Patch embedding stack: per stage conv(3x3, stride 1, pad 1) -> batch norm
/// -> LIF -> 2x2 max pool. Channel counts double per stage and end at
/// embed_dim; the final grid is flattened to N patches of dimension D.
struct SpsConfig {
    std::size_t stages = 4;
    std::size_t in_channels = 3;
    std::size_t in_hw = 32;
    std::size_t embed_dim = 64;
    LifConfig lif;

    void validate() const {
        check(stages >= 1, "patch stack needs at least one stage");
        check(embed_dim >= 1, "embed dim must be positive");
        const std::size_t div = std::size_t(1) << (stages - 1);
        check(embed_dim % div == 0, "embed dim ", embed_dim,
              " must divide evenly across a doubling schedule of ", stages, " stages");
        check(in_hw % (std::size_t(1) << stages) == 0, "input extent ", in_hw,
              " is not divisible by 2^", stages);
        lif.validate();
    }

    std::size_t stage_channels(std::size_t i) const {
        return embed_dim >> (stages - 1 - i);
    }
    std::size_t out_grid() const { return in_hw >> stages; }
    std::size_t patches() const { return out_grid() * out_grid(); }
};

template <typename S>
class Sps {
public:
    Sps() = default;
    Sps(Rng& rng, const SpsConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        std::size_t ch = cfg_.in_channels;
        for (std::size_t i = 0; i < cfg_.stages; ++i) {
            const std::size_t out = cfg_.stage_channels(i);
            convs_.emplace_back(rng, ch, out, 3, 1, 1, false);
            bns_.emplace_back(out, 1);
            lifs_.emplace_back(cfg_.lif);
            ch = out;
        }
    }

    const SpsConfig& config() const { return cfg_; }

    /// x [T,B,C,H,W] -> spikes [T,B,N,D].
    Tensor<S> forward(const Tensor<S>& x, bool train) {
        check(x.ndim() == 5, "patch stack input must be [T,B,C,H,W], got ",
              shape_str(x.shape()));
        const std::size_t T = x.dim(0), B = x.dim(1);
        check(x.dim(2) == cfg_.in_channels && x.dim(3) == cfg_.in_hw && x.dim(4) == cfg_.in_hw,
              "patch stack input ", shape_str(x.shape()), " does not match configured ",
              cfg_.in_channels, "x", cfg_.in_hw, "x", cfg_.in_hw);
        // The whole stack runs with time folded into the batch axis; the
        // flat layouts agree, so only the entry and exit need a reshape.
        std::size_t hw = cfg_.in_hw;
        Tensor<S> h = reshape(x, {T * B, cfg_.in_channels, hw, hw});
        for (std::size_t i = 0; i < cfg_.stages; ++i) {
            h = convs_[i].forward(h);
            h = bns_[i].forward(h, train);
            h = lifs_[i].forward(h, T);
            h = maxpool2d(h, 2, 2);
            hw /= 2;
        }
        const std::size_t N = hw * hw;
        h = reshape(h, {T, B, cfg_.embed_dim, N});
        return permute(h, {0, 1, 3, 2});
    }

    void collect(const std::string& prefix, ParamCollector<S>& pc) {
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            const std::string stage = strcat_args(prefix, ".stage", i);
            convs_[i].collect(stage + ".conv", pc);
            bns_[i].collect(stage + ".bn", pc);
        }
    }

private:
    SpsConfig cfg_;
    std::vector<Conv2dLayer<S>> convs_;
    std::vector<BatchNorm<S>> bns_;
    std::vector<LifLayer<S>> lifs_;
};

/// Learned additive per-patch embedding shared across time and batch.
template <typename S>
class PositionalEmbedding {
public:
    PositionalEmbedding() = default;
    PositionalEmbedding(Rng& rng, std::size_t patches, std::size_t dim) {
        pe_ = Tensor<S>::randn(rng, {patches, dim}, 0.02).set_requires_grad(true);
    }

    Tensor<S> forward(const Tensor<S>& x) const {
        check(x.ndim() == 4 && x.dim(2) == pe_.dim(0) && x.dim(3) == pe_.dim(1),
              "positional embedding ", shape_str(pe_.shape()), " does not fit ",
              shape_str(x.shape()));
        return add(x, pe_);
    }

    void collect(const std::string& prefix, ParamCollector<S>& pc) { pc.add(prefix, pe_); }

private:
    Tensor<S> pe_;
};

}  // namespace spikefuse
