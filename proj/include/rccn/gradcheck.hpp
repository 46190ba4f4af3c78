#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rccn/model.hpp"
#include "rccn/tensor.hpp"

namespace rccn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<std::pair<std::string, double>> per_parameter_errors;
    bool failed = false;
    std::string failure_location;

    bool ok(double threshold) const { return !failed && max_rel_error < threshold; }
};

inline double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central finite differences (step 1e-5) against the analytic gradients.
/// loss_and_grad must zero the gradients, run forward + backward, and return
/// the scalar loss; loss_only must run the forward alone. Per tensor the
/// samples_per_tensor entries with the largest analytic magnitude are probed
/// and the elementwise maximum relative error reported.
inline GradCheckReport gradcheck(std::vector<ParamRef> params,
                                 const std::function<double()>& loss_and_grad,
                                 const std::function<double()>& loss_only,
                                 int samples_per_tensor = 8, double step = 1e-5) {
    GradCheckReport report;
    double base;
    try {
        base = loss_and_grad();
    } catch (const std::exception& e) {
        report.failed = true;
        report.failure_location = e.what();
        return report;
    }
    if (!std::isfinite(base)) {
        report.failed = true;
        report.failure_location = "non-finite loss at base point";
        return report;
    }

    // analytic gradients are overwritten by the probing forwards only if the
    // callbacks share state; snapshot them up front
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.grad->data);

    // entries far below the overall gradient scale are dominated by the
    // finite-difference roundoff floor (~|loss|*eps/step); measure them
    // against a scaled denominator instead of their own magnitude
    double gscale = 0.0;
    for (const auto& g : analytic)
        for (double v : g) gscale = std::max(gscale, std::abs(v));
    const double denom_floor = std::max(1e-8, 1e-4 * gscale);

    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        const auto& g = analytic[pi];
        const long n = static_cast<long>(g.size());
        std::vector<long> idx(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        const long take = std::min<long>(samples_per_tensor, n);
        std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](long a, long b) {
            return std::abs(g[static_cast<size_t>(a)]) > std::abs(g[static_cast<size_t>(b)]);
        });

        double worst = 0.0;
        for (long k = 0; k < take; ++k) {
            const long i = idx[static_cast<size_t>(k)];
            double& v = p.value->data[static_cast<size_t>(i)];
            const double saved = v;
            const double a = g[static_cast<size_t>(i)];
            // retry with smaller steps when the error looks bad: probes that
            // straddle a ReLU/pool kink clean up as the step shrinks below
            // the kink distance, while genuine gradient bugs stay put
            double err = 1e300;
            for (double h = step; h >= step * 1e-2; h /= 10.0) {
                v = saved + h;
                const double lp = loss_only();
                v = saved - h;
                const double lm = loss_only();
                v = saved;
                if (!std::isfinite(lp) || !std::isfinite(lm)) {
                    report.failed = true;
                    report.failure_location = "non-finite loss probing " + p.name;
                    return report;
                }
                const double numeric = (lp - lm) / (2.0 * h);
                err = std::min(err, std::abs(a - numeric) /
                                        std::max({std::abs(a), std::abs(numeric), denom_floor}));
                if (err < 1e-5) break;
            }
            worst = std::max(worst, err);
        }
        report.per_parameter_errors.emplace_back(p.name, worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    }
    return report;
}

}  // namespace rccn
