#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "salt/core.hpp"

namespace salt {

struct OptimConfig {
    double lr = 0.00025;
    double weight_decay = 0.00005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t total_steps = 1; // cosine horizon
};

/// Single-cycle cosine decay: lr0 * 0.5 * (1 + cos(pi * t / T)).
inline double cosine_lr(double lr0, std::uint64_t step, std::uint64_t total_steps) {
    if (total_steps == 0)
        return lr0;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(frac, 1.0)));
}

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
};

/// One AdamW update at step t (0-based). Decoupled weight decay:
///   p -= lr_t * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// with bias-corrected moments and lr_t from the cosine schedule. Moments are
/// kept in double regardless of the parameter precision.
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState& state,
                std::uint64_t t, const OptimConfig& cfg) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adamw_step: parameter/gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adamw_step: state size mismatch");

    const double lr_t = cosine_lr(cfg.lr, t, cfg.total_steps);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t + 1));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t + 1));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        const double p = static_cast<double>(params[i]);
        params[i] = static_cast<T>(
            p - lr_t * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p));
    }
}

} // namespace salt
