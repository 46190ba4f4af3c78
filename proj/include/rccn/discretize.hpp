#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rccn/tensor.hpp"

namespace rccn {

enum class DiscretizationMode { UD, SID };

/// Depth-interval quantization over [a, b] with K sub-intervals. UD spaces
/// the K+1 edges arithmetically, SID geometrically (equal log-space width).
struct DiscretizationScheme {
    DiscretizationMode mode = DiscretizationMode::SID;
    double a = 1.0;
    double b = 80.0;
    int K = 40;

    /// Bin value reserved for invalid pixels, excluded from loss and metrics.
    int ignore_index() const { return K; }

    void validate() const {
        if (K < 1) throw std::invalid_argument("DiscretizationScheme: K must be >= 1");
        if (!(b > a)) throw std::invalid_argument("DiscretizationScheme: need b > a");
        if (mode == DiscretizationMode::SID && !(a > 0))
            throw std::invalid_argument("DiscretizationScheme: SID requires a > 0");
        if (mode == DiscretizationMode::UD && !(a >= 0))
            throw std::invalid_argument("DiscretizationScheme: UD requires a >= 0");
    }
};

inline std::vector<double> thresholds(const DiscretizationScheme& s) {
    s.validate();
    std::vector<double> l(static_cast<size_t>(s.K) + 1);
    if (s.mode == DiscretizationMode::UD) {
        for (int j = 0; j <= s.K; ++j)
            l[static_cast<size_t>(j)] = s.a + (s.b - s.a) * j / s.K;
    } else {
        const double la = std::log(s.a);
        const double r = std::log(s.b / s.a);
        for (int j = 0; j <= s.K; ++j)
            l[static_cast<size_t>(j)] = std::exp(la + r * j / s.K);
    }
    l.front() = s.a;
    l.back() = s.b;
    return l;
}

/// Largest j with l_j <= clamp(depth, a, b), capped at K-1.
inline int encode(double depth, const DiscretizationScheme& s) {
    s.validate();
    if (!std::isfinite(depth))
        throw std::invalid_argument("encode: depth must be finite");
    const double d = std::clamp(depth, s.a, s.b);
    int j;
    if (s.mode == DiscretizationMode::UD) {
        j = static_cast<int>((d - s.a) / (s.b - s.a) * s.K);
    } else {
        j = static_cast<int>(std::log(d / s.a) / std::log(s.b / s.a) * s.K);
    }
    j = std::clamp(j, 0, s.K - 1);
    // float rounding near an edge can land one bin off; settle against the edges
    const auto l = thresholds(s);
    while (j > 0 && d < l[static_cast<size_t>(j)]) --j;
    while (j < s.K - 1 && d >= l[static_cast<size_t>(j) + 1]) ++j;
    return j;
}

/// Representative depth: arithmetic midpoint under UD, geometric mean under
/// SID (the log-space midpoint).
inline double decode(int bin, const DiscretizationScheme& s) {
    s.validate();
    if (bin < 0 || bin >= s.K)
        throw std::invalid_argument("decode: bin " + std::to_string(bin) + " out of [0, " +
                                    std::to_string(s.K - 1) + "]");
    const auto l = thresholds(s);
    const double lo = l[static_cast<size_t>(bin)], hi = l[static_cast<size_t>(bin) + 1];
    return s.mode == DiscretizationMode::UD ? 0.5 * (lo + hi) : std::sqrt(lo * hi);
}

/// H x W integer bin grid; entries in [0, K-1] or the scheme's ignore index.
struct DiscreteDepthMap {
    int height = 0;
    int width = 0;
    std::vector<int> bins;
    DiscretizationScheme scheme;

    int at(int h, int w) const { return bins[static_cast<size_t>(h) * width + w]; }
    int& at(int h, int w) { return bins[static_cast<size_t>(h) * width + w]; }
};

/// Elementwise encode; masked-out pixels get the ignore sentinel.
inline DiscreteDepthMap encode_map(const Tensor& depth, const std::vector<uint8_t>& mask,
                                   const DiscretizationScheme& s) {
    if (depth.ndim() != 2)
        throw std::invalid_argument("encode_map: depth must be H x W");
    if (mask.size() != depth.data.size())
        throw std::invalid_argument("encode_map: mask size does not match depth");
    DiscreteDepthMap m;
    m.height = depth.dim(0);
    m.width = depth.dim(1);
    m.scheme = s;
    m.bins.resize(depth.data.size());
    // encode() revalidates per call; hoist the threshold table once here
    const auto l = thresholds(s);
    const double logr = s.mode == DiscretizationMode::SID ? std::log(s.b / s.a) : 0.0;
    for (size_t i = 0; i < depth.data.size(); ++i) {
        if (!mask[i]) {
            m.bins[i] = s.ignore_index();
            continue;
        }
        const double d = std::clamp(depth.data[i], s.a, s.b);
        int j;
        if (s.mode == DiscretizationMode::UD)
            j = static_cast<int>((d - s.a) / (s.b - s.a) * s.K);
        else
            j = static_cast<int>(std::log(d / s.a) / logr * s.K);
        j = std::clamp(j, 0, s.K - 1);
        while (j > 0 && d < l[static_cast<size_t>(j)]) --j;
        while (j < s.K - 1 && d >= l[static_cast<size_t>(j) + 1]) ++j;
        m.bins[i] = j;
    }
    return m;
}

/// Elementwise decode; ignore pixels come back as NaN depth.
inline Tensor decode_map(const DiscreteDepthMap& m) {
    Tensor depth({m.height, m.width});
    std::vector<double> reps(static_cast<size_t>(m.scheme.K));
    for (int j = 0; j < m.scheme.K; ++j) reps[static_cast<size_t>(j)] = decode(j, m.scheme);
    for (size_t i = 0; i < m.bins.size(); ++i) {
        const int b = m.bins[i];
        if (b == m.scheme.ignore_index()) {
            depth.data[i] = std::numeric_limits<double>::quiet_NaN();
        } else {
            if (b < 0 || b >= m.scheme.K)
                throw std::invalid_argument("decode_map: bin out of range");
            depth.data[i] = reps[static_cast<size_t>(b)];
        }
    }
    return depth;
}

}  // namespace rccn
