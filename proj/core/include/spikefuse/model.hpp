#pragma once

#include <string>
#include <vector>

#include "spikefuse/adam.hpp"
#include "spikefuse/attention.hpp"
#include "spikefuse/checkpoint.hpp"
#include "spikefuse/config.hpp"
#include "spikefuse/encoding.hpp"
#include "spikefuse/losses.hpp"

namespace spikefuse {

/// Two-tower audio/visual spiking classifier. Both towers and every fusion
/// module are constructed in a fixed order from one seeded stream no matter
/// which mode runs, so configurations that differ only in mode share their
/// initialization exactly. Mode gates execution alone: the fused mode adds
/// cross-modal residuals, the baseline sums tower outputs at the head, and
/// the unimodal modes run one tower.
template <typename S>
class FusionModel {
public:
    struct Output {
        Tensor<S> logits;  // [B, classes]
        Tensor<S> res_a;   // last block's cross-modal residuals, fused mode only
        Tensor<S> res_v;
    };

    explicit FusionModel(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        SpsConfig sa;
        sa.stages = cfg_.sps_stages;
        sa.in_channels = cfg_.audio_channels;
        sa.in_hw = cfg_.input_hw;
        sa.embed_dim = cfg_.embed_dim;
        sa.lif = cfg_.lif();
        SpsConfig sv = sa;
        sv.in_channels = cfg_.visual_channels;
        sps_a_ = Sps<S>(rng, sa);
        sps_v_ = Sps<S>(rng, sv);
        patches_ = sa.patches();
        pe_a_ = PositionalEmbedding<S>(rng, patches_, cfg_.embed_dim);
        pe_v_ = PositionalEmbedding<S>(rng, patches_, cfg_.embed_dim);
        AttentionConfig ac;
        ac.scale = cfg_.attn_scale;
        ac.heads = cfg_.heads;
        ac.embed_dim = cfg_.embed_dim;
        ac.lif = cfg_.lif();
        blocks_.reserve(cfg_.depth);
        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            Block blk;
            blk.ssa_a = SpikingSelfAttention<S>(rng, ac);
            blk.ssa_v = SpikingSelfAttention<S>(rng, ac);
            blk.cm_a = CrossModalAttention<S>(rng, ac);
            blk.cm_v = CrossModalAttention<S>(rng, ac);
            blk.mlp_a = SpikingMlp<S>(rng, cfg_.embed_dim, cfg_.mlp_ratio, cfg_.lif());
            blk.mlp_v = SpikingMlp<S>(rng, cfg_.embed_dim, cfg_.mlp_ratio, cfg_.lif());
            blocks_.push_back(std::move(blk));
        }
        head_a_ = Linear<S>(rng, cfg_.embed_dim, cfg_.embed_dim, false);
        head_v_ = Linear<S>(rng, cfg_.embed_dim, cfg_.embed_dim, false);
        head_bn_a_ = BatchNorm<S>(cfg_.embed_dim, 3);
        head_bn_v_ = BatchNorm<S>(cfg_.embed_dim, 3);
        head_lif_a_ = LifLayer<S>(cfg_.lif());
        head_lif_v_ = LifLayer<S>(cfg_.lif());
        classifier_ = Linear<S>(rng, cfg_.embed_dim, cfg_.classes, true);
    }

    const ModelConfig& config() const { return cfg_; }
    std::size_t patches() const { return patches_; }

    Output forward(const Tensor<S>& audio, const Tensor<S>& visual, bool train) {
        check_input(audio, cfg_.audio_channels, "audio");
        check_input(visual, cfg_.visual_channels, "visual");
        check(audio.dim(0) == visual.dim(0), "modalities disagree on batch size: ",
              audio.dim(0), " vs ", visual.dim(0));
        const Mode mode = cfg_.mode_enum();
        const bool use_a = mode != Mode::VisualOnly;
        const bool use_v = mode != Mode::AudioOnly;
        const bool fused = mode == Mode::Fused;
        // Residuals are needed when they feed the features (alpha != 0) or
        // the alignment loss; with alpha = 0 and no alignment they are
        // skipped, which leaves the executed graph identical to baseline.
        const bool need_res = fused && (cfg_.alpha != 0.0 || (train && cfg_.sao));

        Tensor<S> ea, ev;
        if (use_a) ea = pe_a_.forward(sps_a_.forward(direct_code(audio, cfg_.T), train));
        if (use_v) ev = pe_v_.forward(sps_v_.forward(direct_code(visual, cfg_.T), train));

        Output out;
        for (Block& blk : blocks_) {
            if (use_a) ea = add(ea, blk.ssa_a.forward(ea, train));
            if (use_v) ev = add(ev, blk.ssa_v.forward(ev, train));
            if (need_res) {
                out.res_a = blk.cm_a.residual(ea, ev, train);
                out.res_v = blk.cm_v.residual(ev, ea, train);
                if (cfg_.alpha != 0.0) {
                    ea = residual_fuse(ea, out.res_a, cfg_.alpha);
                    ev = residual_fuse(ev, out.res_v, cfg_.alpha);
                }
            }
            if (use_a) ea = add(ea, blk.mlp_a.forward(ea, train));
            if (use_v) ev = add(ev, blk.mlp_v.forward(ev, train));
        }

        Tensor<S> h;
        if (use_a) h = head_lif_a_.forward(head_bn_a_.forward(head_a_.forward(ea), train));
        if (use_v) {
            Tensor<S> hv = head_lif_v_.forward(head_bn_v_.forward(head_v_.forward(ev), train));
            h = h.defined() ? add(h, hv) : hv;
        }
        Tensor<S> pooled = reduce_mean(h, 2);             // [T, B, D]
        Tensor<S> per_t = classifier_.forward(pooled);    // [T, B, classes]
        out.logits = reduce_mean(per_t, 0);
        return out;
    }

    void collect(ParamCollector<S>& pc) {
        sps_a_.collect("sps_a", pc);
        sps_v_.collect("sps_v", pc);
        pe_a_.collect("pe_a", pc);
        pe_v_.collect("pe_v", pc);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = strcat_args("block", i);
            blocks_[i].ssa_a.collect(p + ".ssa_a", pc);
            blocks_[i].ssa_v.collect(p + ".ssa_v", pc);
            blocks_[i].cm_a.collect(p + ".cm_a", pc);
            blocks_[i].cm_v.collect(p + ".cm_v", pc);
            blocks_[i].mlp_a.collect(p + ".mlp_a", pc);
            blocks_[i].mlp_v.collect(p + ".mlp_v", pc);
        }
        head_a_.collect("head.fc_a", pc);
        head_v_.collect("head.fc_v", pc);
        head_bn_a_.collect("head.bn_a", pc);
        head_bn_v_.collect("head.bn_v", pc);
        classifier_.collect("head.classifier", pc);
    }

    std::vector<std::pair<std::string, Tensor<S>>> parameters() {
        ParamCollector<S> pc;
        collect(pc);
        return pc.params;
    }

private:
    struct Block {
        SpikingSelfAttention<S> ssa_a, ssa_v;
        CrossModalAttention<S> cm_a, cm_v;
        SpikingMlp<S> mlp_a, mlp_v;
    };

    void check_input(const Tensor<S>& x, std::size_t channels, const char* what) const {
        check(x.defined() && x.ndim() == 4, what, " input must be [B, C, H, W]");
        check(x.dim(1) == channels, what, " input has ", x.dim(1), " channels, expected ",
              channels);
        check(x.dim(2) == cfg_.input_hw && x.dim(3) == cfg_.input_hw, what,
              " input extent ", x.dim(2), "x", x.dim(3), " does not match configured ",
              cfg_.input_hw);
    }

    ModelConfig cfg_;
    std::size_t patches_ = 0;
    Sps<S> sps_a_, sps_v_;
    PositionalEmbedding<S> pe_a_, pe_v_;
    std::vector<Block> blocks_;
    Linear<S> head_a_, head_v_;
    BatchNorm<S> head_bn_a_, head_bn_v_;
    LifLayer<S> head_lif_a_, head_lif_v_;
    Linear<S> classifier_;
};

/// Captures parameters, running statistics and (optionally) optimizer slots
/// into a serializable checkpoint, embedding the full config as JSON.
template <typename S>
Checkpoint<S> snapshot(FusionModel<S>& model, const Config& cfg, const Adam<S>* opt,
                       std::uint32_t epoch) {
    Checkpoint<S> ck;
    ck.config_json = config_to_json_text(cfg);
    ck.epoch = epoch;
    ParamCollector<S> pc;
    model.collect(pc);
    for (auto& [name, p] : pc.params) {
        ck.params.push_back({name, p.shape(), p.values()});
    }
    for (auto& [name, buf] : pc.buffers) {
        ck.buffers.push_back({name, Shape{buf->size()}, *buf});
    }
    if (opt) {
        ck.has_adam = true;
        ck.adam_step = opt->step_count();
        const auto& params = opt->params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            ck.adam_m.push_back({params[i].first, params[i].second.shape(),
                                 opt->first_moments()[i]});
            ck.adam_v.push_back({params[i].first, params[i].second.shape(),
                                 opt->second_moments()[i]});
        }
    }
    return ck;
}

/// Copies checkpointed parameters and running statistics back into a model
/// built from the same config. Any name, count or shape difference is a
/// mismatch error rather than a silent partial restore.
template <typename S>
void restore(FusionModel<S>& model, const Checkpoint<S>& ck) {
    ParamCollector<S> pc;
    model.collect(pc);
    check(pc.params.size() == ck.params.size(), "checkpoint holds ", ck.params.size(),
          " parameters but the model has ", pc.params.size(),
          "; config does not match this checkpoint");
    for (std::size_t i = 0; i < pc.params.size(); ++i) {
        auto& [name, p] = pc.params[i];
        const NamedArray<S>& a = ck.params[i];
        check(a.name == name, "checkpoint parameter ", i, " is ", a.name,
              " but the model expects ", name);
        check(a.shape == p.shape(), "checkpoint parameter ", name, " has shape ",
              shape_str(a.shape), " but the model expects ", shape_str(p.shape()));
        p.values_mut() = a.data;
    }
    check(pc.buffers.size() == ck.buffers.size(), "checkpoint holds ", ck.buffers.size(),
          " buffers but the model has ", pc.buffers.size());
    for (std::size_t i = 0; i < pc.buffers.size(); ++i) {
        auto& [name, buf] = pc.buffers[i];
        const NamedArray<S>& a = ck.buffers[i];
        check(a.name == name, "checkpoint buffer ", i, " is ", a.name,
              " but the model expects ", name);
        check(a.data.size() == buf->size(), "checkpoint buffer ", name, " has ",
              a.data.size(), " values but the model expects ", buf->size());
        *buf = a.data;
    }
}

template <typename S>
void restore_optimizer(Adam<S>& opt, const Checkpoint<S>& ck) {
    check(ck.has_adam, "checkpoint carries no optimizer state");
    std::vector<std::vector<S>> m, v;
    for (const auto& a : ck.adam_m) m.push_back(a.data);
    for (const auto& a : ck.adam_v) v.push_back(a.data);
    opt.restore(ck.adam_step, std::move(m), std::move(v));
}

}  // namespace spikefuse
