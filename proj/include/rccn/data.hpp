#pragma once

#include <cmath>
#include <vector>

#include "rccn/config.hpp"
#include "rccn/discretize.hpp"
#include "rccn/image_io.hpp"
#include "rccn/rng.hpp"

namespace rccn {

namespace detail_data {

/// Nearest-neighbor sample with validity; src coordinates in pixel units.
inline bool nearest_valid(double y, double x, int H, int W, int& iy, int& ix) {
    iy = static_cast<int>(std::lround(y));
    ix = static_cast<int>(std::lround(x));
    return iy >= 0 && iy < H && ix >= 0 && ix < W;
}

}  // namespace detail_data

/// Resize by factor s (bilinear rgb, nearest depth/mask) and divide depth by
/// s: objects rendered larger appear nearer.
inline SceneSample scale_sample(const SceneSample& in, double s) {
    if (!(s > 0)) throw std::invalid_argument("scale_sample: scale must be > 0");
    const int H = in.height(), W = in.width();
    const int NH = std::max(1, static_cast<int>(std::lround(H * s)));
    const int NW = std::max(1, static_cast<int>(std::lround(W * s)));
    SceneSample out;
    out.rgb = bilinear_resize(in.rgb.reshaped({1, 3, H, W}), NH, NW).reshaped({3, NH, NW});
    out.depth = Tensor({NH, NW});
    out.mask.assign(static_cast<size_t>(NH) * NW, 0);
    const double sy = static_cast<double>(H) / NH, sx = static_cast<double>(W) / NW;
    for (int y = 0; y < NH; ++y)
        for (int x = 0; x < NW; ++x) {
            int iy, ix;
            detail_data::nearest_valid((y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5, H, W, iy, ix);
            iy = std::clamp(iy, 0, H - 1);
            ix = std::clamp(ix, 0, W - 1);
            out.depth.at(y, x) = in.depth.at(iy, ix) / s;
            out.mask[static_cast<size_t>(y) * NW + x] = in.mask[static_cast<size_t>(iy) * W + ix];
        }
    return out;
}

/// Rotate rgb, depth, and mask together about the image center; bilinear rgb,
/// nearest depth/mask; out-of-frame pixels become invalid.
inline SceneSample rotate_sample(const SceneSample& in, double degrees) {
    const int H = in.height(), W = in.width();
    const double rad = degrees * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
    SceneSample out;
    out.rgb = Tensor({3, H, W});
    out.depth = Tensor({H, W});
    out.mask.assign(static_cast<size_t>(H) * W, 0);
    const long plane = static_cast<long>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            // inverse mapping into the source frame
            const double dy = y - cy, dx = x - cx;
            const double sy = cy + c * dy - s * dx;
            const double sx = cx + s * dy + c * dx;
            int iy, ix;
            const bool inside = detail_data::nearest_valid(sy, sx, H, W, iy, ix);
            if (!inside) continue;
            out.depth.at(y, x) = in.depth.at(iy, ix);
            out.mask[static_cast<size_t>(y) * W + x] = in.mask[static_cast<size_t>(iy) * W + ix];
            const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, H - 1);
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, W - 1);
            const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
            const double wy = std::clamp(sy - y0, 0.0, 1.0), wx = std::clamp(sx - x0, 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                const double* src = &in.rgb.data[static_cast<size_t>(ch) * plane];
                const double v = (1 - wy) * ((1 - wx) * src[static_cast<long>(y0) * W + x0] +
                                             wx * src[static_cast<long>(y0) * W + x1]) +
                                 wy * ((1 - wx) * src[static_cast<long>(y1) * W + x0] +
                                       wx * src[static_cast<long>(y1) * W + x1]);
                out.rgb.data[static_cast<size_t>(ch) * plane + static_cast<long>(y) * W + x] = v;
            }
        }
    return out;
}

inline SceneSample flip_sample(const SceneSample& in) {
    const int H = in.height(), W = in.width();
    SceneSample out;
    out.rgb = Tensor({3, H, W});
    out.depth = Tensor({H, W});
    out.mask.assign(static_cast<size_t>(H) * W, 0);
    const long plane = static_cast<long>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int mx = W - 1 - x;
            out.depth.at(y, x) = in.depth.at(y, mx);
            out.mask[static_cast<size_t>(y) * W + x] = in.mask[static_cast<size_t>(y) * W + mx];
            for (int ch = 0; ch < 3; ++ch)
                out.rgb.data[static_cast<size_t>(ch) * plane + static_cast<long>(y) * W + x] =
                    in.rgb.data[static_cast<size_t>(ch) * plane + static_cast<long>(y) * W + mx];
        }
    return out;
}

inline SceneSample crop_sample(const SceneSample& in, int top, int left, int ch, int cw) {
    const int H = in.height(), W = in.width();
    if (ch > H || cw > W)
        throw std::invalid_argument("crop_sample: crop " + std::to_string(ch) + "x" +
                                    std::to_string(cw) + " larger than image " +
                                    std::to_string(H) + "x" + std::to_string(W));
    if (top < 0 || left < 0 || top + ch > H || left + cw > W)
        throw std::invalid_argument("crop_sample: crop window out of bounds");
    SceneSample out;
    out.rgb = Tensor({3, ch, cw});
    out.depth = Tensor({ch, cw});
    out.mask.assign(static_cast<size_t>(ch) * cw, 0);
    const long iplane = static_cast<long>(H) * W, oplane = static_cast<long>(ch) * cw;
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
            out.depth.at(y, x) = in.depth.at(top + y, left + x);
            out.mask[static_cast<size_t>(y) * cw + x] =
                in.mask[static_cast<size_t>(top + y) * W + (left + x)];
            for (int k = 0; k < 3; ++k)
                out.rgb.data[static_cast<size_t>(k) * oplane + static_cast<long>(y) * cw + x] =
                    in.rgb.data[static_cast<size_t>(k) * iplane +
                                static_cast<long>(top + y) * W + (left + x)];
        }
    return out;
}

/// Order: scale -> rotate -> flip -> crop.
inline SceneSample augment(const SceneSample& sample, const AugmentationConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!cfg.enabled) {
        if (cfg.crop_h != sample.height() || cfg.crop_w != sample.width())
            return crop_sample(sample, 0, 0, cfg.crop_h, cfg.crop_w);
        return sample;
    }
    const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
    const bool flip = rng.bernoulli(cfg.flip_prob);

    SceneSample out = scale_sample(sample, s);
    if (cfg.rotation_deg > 0) out = rotate_sample(out, deg);
    if (flip) out = flip_sample(out);
    if (out.height() < cfg.crop_h || out.width() < cfg.crop_w)
        throw std::invalid_argument("augment: crop " + std::to_string(cfg.crop_h) + "x" +
                                    std::to_string(cfg.crop_w) + " larger than scaled image " +
                                    std::to_string(out.height()) + "x" +
                                    std::to_string(out.width()));
    const int top = static_cast<int>(rng.uniform_int(
        static_cast<uint64_t>(out.height() - cfg.crop_h + 1)));
    const int left = static_cast<int>(rng.uniform_int(
        static_cast<uint64_t>(out.width() - cfg.crop_w + 1)));
    return crop_sample(out, top, left, cfg.crop_h, cfg.crop_w);
}

/// Supervision targets at each resolution: continuous log-depth by
/// valid-aware block averaging in log-space, discrete bins by center-pixel
/// sampling; blocks with no valid pixel are ignored.
struct Targets {
    Tensor coarse_log;                 // h x w (= /8)
    std::vector<uint8_t> coarse_mask;
    std::vector<int> fine_bins;        // /8, ignore = scheme.ignore_index()
    std::vector<int> refine_bins;      // /4
    Tensor fusion_log;                 // /4
    std::vector<uint8_t> fusion_mask;
};

namespace detail_data {

inline void block_log_mean(const SceneSample& s, int block, Tensor& out,
                           std::vector<uint8_t>& mask) {
    const int H = s.height(), W = s.width();
    const int h = H / block, w = W / block;
    out = Tensor({h, w});
    mask.assign(static_cast<size_t>(h) * w, 0);
    for (int by = 0; by < h; ++by)
        for (int bx = 0; bx < w; ++bx) {
            double acc = 0;
            int n = 0;
            for (int y = by * block; y < (by + 1) * block; ++y)
                for (int x = bx * block; x < (bx + 1) * block; ++x)
                    if (s.mask[static_cast<size_t>(y) * W + x]) {
                        acc += std::log(s.depth.at(y, x));
                        ++n;
                    }
            if (n > 0) {
                out.at(by, bx) = acc / n;
                mask[static_cast<size_t>(by) * w + bx] = 1;
            }
        }
}

inline void block_center_bins(const SceneSample& s, int block, const DiscretizationScheme& sc,
                              std::vector<int>& bins) {
    const int H = s.height(), W = s.width();
    const int h = H / block, w = W / block;
    bins.assign(static_cast<size_t>(h) * w, sc.ignore_index());
    for (int by = 0; by < h; ++by)
        for (int bx = 0; bx < w; ++bx) {
            const int y = by * block + block / 2, x = bx * block + block / 2;
            if (s.mask[static_cast<size_t>(y) * W + x])
                bins[static_cast<size_t>(by) * w + bx] = encode(s.depth.at(y, x), sc);
        }
}

}  // namespace detail_data

inline Targets make_targets(const SceneSample& sample, const DiscretizationScheme& scheme) {
    if (sample.height() % 8 != 0 || sample.width() % 8 != 0)
        throw std::invalid_argument("make_targets: sample dims must be divisible by 8, got " +
                                    std::to_string(sample.height()) + "x" +
                                    std::to_string(sample.width()));
    Targets t;
    detail_data::block_log_mean(sample, 8, t.coarse_log, t.coarse_mask);
    detail_data::block_center_bins(sample, 8, scheme, t.fine_bins);
    detail_data::block_center_bins(sample, 4, scheme, t.refine_bins);
    detail_data::block_log_mean(sample, 4, t.fusion_log, t.fusion_mask);
    return t;
}

}  // namespace rccn
