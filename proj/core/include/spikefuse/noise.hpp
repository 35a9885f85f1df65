#pragma once

#include <cmath>
#include <iostream>
#include <vector>

#include "spikefuse/config.hpp"
#include "spikefuse/tensor.hpp"

namespace spikefuse {

/// Additive Gaussian noise scaled so that noise power relative to the
/// sample's own mean-square power matches the requested SNR. An all-zero
/// input has no defined signal power and is returned unchanged with a
/// warning.
inline std::vector<double> inject_noise_values(const std::vector<double>& x, double snr_db,
                                               Rng& rng) {
    check(!x.empty(), "cannot inject noise into an empty signal");
    double power = 0.0;
    for (double v : x) power += v * v;
    power /= static_cast<double>(x.size());
    if (power == 0.0) {
        std::cerr << "spikefuse: warning: all-zero signal has no power; "
                     "returning it unchanged\n";
        return x;
    }
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + sigma * rng.normal();
    return out;
}

template <typename S>
Tensor<S> inject_noise(const Tensor<S>& x, const NoiseConfig& cfg, Rng& rng) {
    check(x.defined() && x.size() > 0, "cannot inject noise into an empty tensor");
    std::vector<double> vals(x.values().begin(), x.values().end());
    std::vector<double> noisy = inject_noise_values(vals, cfg.snr_db, rng);
    std::vector<S> out(noisy.size());
    for (std::size_t i = 0; i < noisy.size(); ++i) out[i] = static_cast<S>(noisy[i]);
    return Tensor<S>::from(std::move(out), x.shape());
}

template <typename S>
Tensor<S> inject_noise(const Tensor<S>& x, const NoiseConfig& cfg) {
    Rng rng(cfg.seed);
    return inject_noise(x, cfg, rng);
}

}  // namespace spikefuse
