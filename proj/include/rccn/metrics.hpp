#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "rccn/tensor.hpp"

namespace rccn {

/// The seven depth error statistics over the valid-pixel set.
struct MetricsReport {
    double delta1 = 0.0;  // fraction with max(d/d*, d*/d) < 1.25
    double delta2 = 0.0;  // ... < 1.25^2
    double delta3 = 0.0;  // ... < 1.25^3
    double abs_rel = 0.0;
    double squa_rel = 0.0;
    double rmse = 0.0;
    double rmse_log = 0.0;
    double ave_log10 = 0.0;
    long n_valid = 0;
};

/// Pred and target must be positive on valid pixels. The optional cap clamps
/// both maps to [cap.first, cap.second] before scoring.
inline MetricsReport compute_metrics(const Tensor& pred, const Tensor& target,
                                     const std::vector<uint8_t>& mask,
                                     std::optional<std::pair<double, double>> cap = std::nullopt) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("compute_metrics: pred " + pred.shape_str() + " vs target " +
                                    target.shape_str());
    if (mask.size() != pred.data.size())
        throw std::invalid_argument("compute_metrics: mask size mismatch");

    MetricsReport m;
    double abs_rel = 0, squa_rel = 0, sq = 0, sq_log = 0, al10 = 0;
    long d1 = 0, d2 = 0, d3 = 0, n = 0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        double d = pred.data[i], g = target.data[i];
        if (cap) {
            d = std::clamp(d, cap->first, cap->second);
            g = std::clamp(g, cap->first, cap->second);
        }
        if (!(d > 0.0) || !(g > 0.0))
            throw std::invalid_argument("compute_metrics: nonpositive depth on a valid pixel");
        ++n;
        const double ratio = std::max(d / g, g / d);
        if (ratio < t1) ++d1;
        if (ratio < t2) ++d2;
        if (ratio < t3) ++d3;
        const double e = d - g;
        abs_rel += std::abs(e) / g;
        squa_rel += e * e / g;
        sq += e * e;
        const double le = std::log(d) - std::log(g);
        sq_log += le * le;
        al10 += std::abs(std::log10(d) - std::log10(g));
    }
    if (n == 0) throw std::invalid_argument("compute_metrics: no valid pixels");
    m.n_valid = n;
    const double dn = static_cast<double>(n);
    m.delta1 = d1 / dn;
    m.delta2 = d2 / dn;
    m.delta3 = d3 / dn;
    m.abs_rel = abs_rel / dn;
    m.squa_rel = squa_rel / dn;
    m.rmse = std::sqrt(sq / dn);
    m.rmse_log = std::sqrt(sq_log / dn);
    m.ave_log10 = al10 / dn;
    return m;
}

}  // namespace rccn
