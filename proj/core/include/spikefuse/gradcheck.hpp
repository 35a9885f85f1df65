#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "spikefuse/tensor.hpp"

namespace spikefuse {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::vector<std::pair<std::string, double>> per_param;  // max error per parameter
};

/// Central finite differences against reverse-mode gradients for every
/// coordinate of every listed parameter. loss_fn must rebuild the graph and
/// return a scalar; its value must not depend on mutable state left behind
/// by earlier calls. Relative error uses max(|g|, |fd|, 1) as denominator
/// so near-zero gradients are compared absolutely.
template <typename S, typename LossFn>
GradCheckReport gradcheck(std::vector<std::pair<std::string, Tensor<S>>>& params,
                          LossFn&& loss_fn, double h = 1e-5) {
    static_assert(sizeof(S) == 8, "finite differences need 64-bit scalars");
    GradCheckReport rep;
    for (auto& [name, p] : params) p.zero_grad();
    {
        Tensor<S> loss = loss_fn();
        loss.backward();
    }
    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) analytic.push_back(p.grad());

    NoGradGuard no_grad;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& [name, p] = params[pi];
        double param_max = 0.0;
        std::vector<S>& vals = p.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const S saved = vals[i];
            vals[i] = saved + static_cast<S>(h);
            const double lp = static_cast<double>(loss_fn().item());
            vals[i] = saved - static_cast<S>(h);
            const double lm = static_cast<double>(loss_fn().item());
            vals[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = static_cast<double>(analytic[pi][i]);
            const double denom = std::max({std::fabs(an), std::fabs(fd), 1.0});
            const double err = std::fabs(an - fd) / denom;
            ++rep.coords_checked;
            param_max = std::max(param_max, err);
            if (err > rep.max_rel_err) {
                rep.max_rel_err = err;
                rep.worst_param = name;
                rep.worst_index = i;
                rep.worst_analytic = an;
                rep.worst_numeric = fd;
            }
        }
        rep.per_param.emplace_back(name, param_max);
    }
    return rep;
}

}  // namespace spikefuse
