#pragma once

#include <cmath>
#include <vector>

#include "rccn/config.hpp"
#include "rccn/model.hpp"

namespace rccn {

/// Polynomial decay: base_lr * (1 - t/T)^power; lr(0) = base_lr, lr(T) = 0.
inline double poly_lr(const TrainConfig& cfg, long t, long total) {
    const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(total);
    return cfg.base_lr * std::pow(frac, cfg.power);
}

/// One SGD update with momentum and weight decay (weights only, not biases):
/// v <- momentum*v + g + wd*w; w <- w - lr*v. Returns false and leaves
/// parameters untouched when any gradient is non-finite.
inline bool sgd_step(std::vector<ParamRef>& params, long t, long total, const TrainConfig& cfg) {
    for (auto& p : params)
        for (double g : p.grad->data)
            if (!std::isfinite(g)) return false;
    const double lr = poly_lr(cfg, t, total);
    for (auto& p : params) {
        const double wd = p.weight_decay ? cfg.weight_decay : 0.0;
        double* w = p.value->data.data();
        double* v = p.momentum->data.data();
        const double* g = p.grad->data.data();
        const size_t n = p.value->data.size();
        for (size_t i = 0; i < n; ++i) {
            v[i] = cfg.momentum * v[i] + g[i] + wd * w[i];
            w[i] = detail::snap_f32(w[i] - lr * v[i]);
        }
    }
    return true;
}

}  // namespace rccn
