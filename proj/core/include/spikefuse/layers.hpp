#pragma once

#include <string>
#include <utility>
#include <vector>

#include "spikefuse/ops.hpp"
#include "spikefuse/tensor.hpp"

namespace spikefuse {

/// Collects a model's learnable tensors and persistent buffers under stable
/// hierarchical names. Buffer pointers stay valid for the owning layer's
/// lifetime; layers are never moved after construction.
template <typename S>
struct ParamCollector {
    std::vector<std::pair<std::string, Tensor<S>>> params;
    std::vector<std::pair<std::string, std::vector<S>*>> buffers;

    void add(const std::string& name, const Tensor<S>& t) { params.emplace_back(name, t); }
    void add_buffer(const std::string& name, std::vector<S>* v) {
        buffers.emplace_back(name, v);
    }
};

template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(Rng& rng, std::size_t in, std::size_t out, bool bias = true) {
        const double k = 1.0 / std::sqrt(static_cast<double>(in));
        w_ = Tensor<S>::uniform(rng, {in, out}, -k, k).set_requires_grad(true);
        if (bias) b_ = Tensor<S>::uniform(rng, {out}, -k, k).set_requires_grad(true);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return linear(x, w_, b_); }

    void collect(const std::string& prefix, ParamCollector<S>& pc) {
        pc.add(prefix + ".w", w_);
        if (b_.defined()) pc.add(prefix + ".b", b_);
    }

    const Tensor<S>& weight() const { return w_; }

private:
    Tensor<S> w_, b_;
};

template <typename S>
class Conv2dLayer {
public:
    Conv2dLayer() = default;
    Conv2dLayer(Rng& rng, std::size_t in_ch, std::size_t out_ch, std::size_t k,
                std::size_t stride, std::size_t pad, bool bias = false)
        : stride_(stride), pad_(pad) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k));
        w_ = Tensor<S>::uniform(rng, {out_ch, in_ch, k, k}, -bound, bound)
                 .set_requires_grad(true);
        if (bias)
            b_ = Tensor<S>::uniform(rng, {out_ch}, -bound, bound).set_requires_grad(true);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, w_, b_, stride_, pad_); }

    void collect(const std::string& prefix, ParamCollector<S>& pc) {
        pc.add(prefix + ".w", w_);
        if (b_.defined()) pc.add(prefix + ".b", b_);
    }

private:
    Tensor<S> w_, b_;
    std::size_t stride_ = 1, pad_ = 0;
};

/// Batch normalization over every axis except `feat_axis`. Running statistics
/// use the same population-variance convention as the batch statistics.
template <typename S>
class BatchNorm {
public:
    BatchNorm() = default;
    BatchNorm(std::size_t features, std::size_t feat_axis, double eps = 1e-5,
              double momentum = 0.1)
        : feat_axis_(feat_axis), eps_(eps), momentum_(momentum) {
        gamma_ = Tensor<S>::ones({features}).set_requires_grad(true);
        beta_ = Tensor<S>::zeros({features}).set_requires_grad(true);
        running_.mean.assign(features, S(0));
        running_.var.assign(features, S(1));
    }

    Tensor<S> forward(const Tensor<S>& x, bool train) {
        return batchnorm(x, gamma_, beta_, &running_, train ? BnMode::Train : BnMode::Eval,
                         feat_axis_, eps_, momentum_);
    }

    void collect(const std::string& prefix, ParamCollector<S>& pc) {
        pc.add(prefix + ".gamma", gamma_);
        pc.add(prefix + ".beta", beta_);
        pc.add_buffer(prefix + ".running_mean", &running_.mean);
        pc.add_buffer(prefix + ".running_var", &running_.var);
    }

private:
    Tensor<S> gamma_, beta_;
    RunningStats<S> running_;
    std::size_t feat_axis_ = 0;
    double eps_ = 1e-5, momentum_ = 0.1;
};

}  // namespace spikefuse
