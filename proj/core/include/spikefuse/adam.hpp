#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "spikefuse/config.hpp"
#include "spikefuse/tensor.hpp"

namespace spikefuse {

/// Adam with bias correction over a fixed parameter list. First and second
/// moments live here, keyed by position; names are kept for persistence.
template <typename S>
class Adam {
public:
    Adam(std::vector<std::pair<std::string, Tensor<S>>> params, const TrainConfig& cfg)
        : params_(std::move(params)), cfg_(cfg) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            check(params_[i].second.requires_grad(), "parameter ", params_[i].first,
                  " does not require gradients");
            m_[i].assign(params_[i].second.size(), S(0));
            v_[i].assign(params_[i].second.size(), S(0));
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<S>& p = params_[i].second;
            const std::vector<S>& g = p.grad();
            std::vector<S>& val = p.values_mut();
            std::vector<S>& m = m_[i];
            std::vector<S>& v = v_[i];
            for (std::size_t j = 0; j < val.size(); ++j) {
                m[j] = b1 * m[j] + (S(1) - b1) * g[j];
                v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
                const double mhat = static_cast<double>(m[j]) / c1;
                const double vhat = static_cast<double>(v[j]) / c2;
                val[j] -= static_cast<S>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    std::uint64_t step_count() const { return t_; }
    const std::vector<std::pair<std::string, Tensor<S>>>& params() const { return params_; }
    const std::vector<std::vector<S>>& first_moments() const { return m_; }
    const std::vector<std::vector<S>>& second_moments() const { return v_; }

    void restore(std::uint64_t t, std::vector<std::vector<S>> m, std::vector<std::vector<S>> v) {
        check(m.size() == params_.size() && v.size() == params_.size(),
              "optimizer state does not match parameter count");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            check(m[i].size() == params_[i].second.size() &&
                      v[i].size() == params_[i].second.size(),
                  "optimizer state for ", params_[i].first, " has the wrong size");
        }
        t_ = t;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    std::vector<std::pair<std::string, Tensor<S>>> params_;
    TrainConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<S>> m_, v_;
};

}  // namespace spikefuse
