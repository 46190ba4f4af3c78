#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rccn/discretize.hpp"
#include "rccn/ops.hpp"
#include "rccn/rng.hpp"
#include "rccn/tensor.hpp"

namespace rccn {

enum class Variant { R, C, RRCN, RCCN, CCCN };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::R: return "R";
        case Variant::C: return "C";
        case Variant::RRCN: return "RRCN";
        case Variant::RCCN: return "RCCN";
        case Variant::CCCN: return "CCCN";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "R") return Variant::R;
    if (s == "C") return Variant::C;
    if (s == "RRCN") return Variant::RRCN;
    if (s == "RCCN") return Variant::RCCN;
    if (s == "CCCN") return Variant::CCCN;
    throw std::invalid_argument("unknown variant: " + s);
}

/// Architecture plan. Channel counts are the full-scale table divided by
/// channel_div; topology and spatial ratios are unchanged.
struct NetworkSpec {
    int input_h = 64;
    int input_w = 64;
    int channel_div = 8;
    int K = 40;
    Variant variant = Variant::RCCN;
    int fusion_layers = 3;

    int coarse_h() const { return input_h / 8; }
    int coarse_w() const { return input_w / 8; }

    int ch(int full) const { return std::max(1, full / channel_div); }

    void validate() const {
        if (K < 1) throw std::invalid_argument("NetworkSpec: K must be >= 1");
        if (channel_div < 1) throw std::invalid_argument("NetworkSpec: channel_div must be >= 1");
        if (fusion_layers < 2) throw std::invalid_argument("NetworkSpec: fusion_layers must be >= 2");
        if (input_h < 32 || input_w < 32 || input_h % 32 != 0 || input_w % 32 != 0)
            throw std::invalid_argument(
                "NetworkSpec: input extents must be positive multiples of 32 (the regression "
                "trunk downsamples to /32)");
    }

    bool has_regression_trunk() const { return variant != Variant::R && variant != Variant::C; }
    bool has_bridge() const { return has_regression_trunk(); }
    bool fine_head_is_classification() const {
        return variant == Variant::C || variant == Variant::RCCN || variant == Variant::CCCN;
    }
    bool coarse_head_is_classification() const { return variant == Variant::CCCN; }
    bool has_refinement() const { return variant == Variant::RCCN; }
};

/// Parameter group: shared blocks, regression trunk + head, classification
/// trunk + bridge + head, refinement, fusion.
enum class ParamGroup { Shared, Regression, Classification, Refinement, Fusion };

struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
    Tensor* momentum;
    bool weight_decay;  // weights yes, biases no
    ParamGroup group = ParamGroup::Shared;
};

namespace detail {

inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void init_uniform(Tensor& t, long fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = snap_f32(rng.uniform(-bound, bound));
}

// Small positive biases keep units alive at init and keep pre-activations off
// the ReLU kink over all-zero input patches.
inline void init_bias(Tensor& t, Rng& rng) {
    for (double& v : t.data) v = snap_f32(rng.uniform(1e-3, 1e-2));
}

inline void check_finite(const Tensor& t, const std::string& layer) {
    for (double v : t.data)
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite activation at layer " + layer);
}

struct ConvLayer {
    std::string name;
    ConvParams p;
    Tensor gw, gb, mw, mb;
    bool act_relu = true;
    Tensor in_cache, pre_act;

    void init(std::string nm, int cout, int cin, int k, int pad, int dilation, bool relu_act) {
        name = std::move(nm);
        p.weights = Tensor({cout, cin, k, k});
        p.bias = Tensor({cout});
        p.stride = 1;
        p.padding = pad;
        p.dilation = dilation;
        act_relu = relu_act;
        gw = Tensor(p.weights.shape);
        gb = Tensor(p.bias.shape);
        mw = Tensor(p.weights.shape);
        mb = Tensor(p.bias.shape);
    }

    Tensor forward(const Tensor& x) {
        in_cache = x;
        Tensor y = conv2d(x, p);
        if (!act_relu) {
            check_finite(y, name);
            return y;
        }
        pre_act = y;
        Tensor a = relu(y);
        check_finite(a, name);
        return a;
    }

    Tensor backward(const Tensor& grad_out) {
        const Tensor* g = &grad_out;
        Tensor gated;
        if (act_relu) {
            gated = relu_backward(pre_act, grad_out);
            g = &gated;
        }
        auto [gi, gwt, gbt] = conv2d_backward(in_cache, p, *g);
        for (size_t i = 0; i < gw.data.size(); ++i) gw.data[i] += gwt.data[i];
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += gbt.data[i];
        return gi;
    }

    void collect(std::vector<ParamRef>& out, ParamGroup g) {
        out.push_back({name + ".w", &p.weights, &gw, &mw, true, g});
        out.push_back({name + ".b", &p.bias, &gb, &mb, false, g});
    }

    void init_params(Rng& rng) {
        init_uniform(p.weights, static_cast<long>(p.cin()) * p.kh() * p.kw(), rng);
        init_bias(p.bias, rng);
    }
};

/// Transposed-convolution layer mapping in_ch -> out_ch. Weights follow the
/// conv convention [in_ch x out_ch x k x k] so deconv2d applies directly.
struct DeconvLayer {
    std::string name;
    ConvParams p;
    Tensor gw, gb, mw, mb;
    bool act_relu = true;
    Tensor in_cache, pre_act;

    void init(std::string nm, int in_ch, int out_ch, int k, int stride, int pad, bool relu_act) {
        name = std::move(nm);
        p.weights = Tensor({in_ch, out_ch, k, k});
        p.bias = Tensor({out_ch});
        p.stride = stride;
        p.padding = pad;
        p.dilation = 1;
        act_relu = relu_act;
        gw = Tensor(p.weights.shape);
        gb = Tensor(p.bias.shape);
        mw = Tensor(p.weights.shape);
        mb = Tensor(p.bias.shape);
    }

    Tensor forward(const Tensor& x) {
        in_cache = x;
        Tensor y = deconv2d(x, p);
        if (!act_relu) {
            check_finite(y, name);
            return y;
        }
        pre_act = y;
        Tensor a = relu(y);
        check_finite(a, name);
        return a;
    }

    Tensor backward(const Tensor& grad_out) {
        const Tensor* g = &grad_out;
        Tensor gated;
        if (act_relu) {
            gated = relu_backward(pre_act, grad_out);
            g = &gated;
        }
        auto [gi, gwt, gbt] = deconv2d_backward(in_cache, p, *g);
        for (size_t i = 0; i < gw.data.size(); ++i) gw.data[i] += gwt.data[i];
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += gbt.data[i];
        return gi;
    }

    void collect(std::vector<ParamRef>& out, ParamGroup g) {
        out.push_back({name + ".w", &p.weights, &gw, &mw, true, g});
        out.push_back({name + ".b", &p.bias, &gb, &mb, false, g});
    }

    void init_params(Rng& rng) {
        init_uniform(p.weights, static_cast<long>(p.weights.dim(0)) * p.kh() * p.kw(), rng);
        init_bias(p.bias, rng);
    }
};

struct FcLayer {
    std::string name;
    Tensor w, b, gw, gb, mw, mb;
    bool act_relu = true;
    Tensor in_cache, pre_act;

    void init(std::string nm, int out, int in, bool relu_act) {
        name = std::move(nm);
        w = Tensor({out, in});
        b = Tensor({out});
        act_relu = relu_act;
        gw = Tensor(w.shape);
        gb = Tensor(b.shape);
        mw = Tensor(w.shape);
        mb = Tensor(b.shape);
    }

    Tensor forward(const Tensor& x) {
        in_cache = x;
        Tensor y = fully_connected(x, w, b);
        if (!act_relu) {
            check_finite(y, name);
            return y;
        }
        pre_act = y;
        Tensor a = relu(y);
        check_finite(a, name);
        return a;
    }

    Tensor backward(const Tensor& grad_out) {
        const Tensor* g = &grad_out;
        Tensor gated;
        if (act_relu) {
            gated = relu_backward(pre_act, grad_out);
            g = &gated;
        }
        auto [gi, gwt, gbt] = fully_connected_backward(in_cache, w, *g);
        for (size_t i = 0; i < gw.data.size(); ++i) gw.data[i] += gwt.data[i];
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += gbt.data[i];
        return gi;
    }

    void collect(std::vector<ParamRef>& out, ParamGroup g) {
        out.push_back({name + ".w", &w, &gw, &mw, true, g});
        out.push_back({name + ".b", &b, &gb, &mb, false, g});
    }

    void init_params(Rng& rng) {
        init_uniform(w, w.dim(1), rng);
        init_bias(b, rng);
    }
};

struct PoolLayer {
    int window = 2;
    int stride = 2;
    int pad_begin = 0;
    int pad_end = 0;
    PoolResult cache;
    std::vector<int> in_shape;

    Tensor forward(const Tensor& x) {
        in_shape = x.shape;
        cache = maxpool2d_padded(x, window, stride, pad_begin, pad_end);
        return cache.output;
    }

    Tensor backward(const Tensor& grad_out) {
        return maxpool2d_backward(in_shape, cache, grad_out);
    }
};

/// A VGG-style block: n 3x3 same-padded convolutions with ReLU, optionally
/// followed by max pooling. Stride-1 pooling keeps size via end padding.
struct ConvBlock {
    std::vector<ConvLayer> convs;
    bool pooled = false;
    PoolLayer pool;

    void init(const std::string& nm, int n_convs, int in_ch, int out_ch, int dilation,
              int pool_stride /* 0 = none */) {
        convs.resize(static_cast<size_t>(n_convs));
        for (int i = 0; i < n_convs; ++i) {
            const int cin = i == 0 ? in_ch : out_ch;
            const int pad = dilation;  // same padding for k=3: pad = dilation*(k-1)/2
            convs[static_cast<size_t>(i)].init(nm + ".conv" + std::to_string(i), out_ch, cin, 3,
                                               pad, dilation, true);
        }
        pooled = pool_stride > 0;
        if (pooled) {
            pool.window = 2;
            pool.stride = pool_stride;
            pool.pad_begin = 0;
            pool.pad_end = pool_stride == 1 ? 1 : 0;
        }
    }

    Tensor forward(const Tensor& x) {
        Tensor y = x;
        for (auto& c : convs) y = c.forward(y);
        if (pooled) y = pool.forward(y);
        return y;
    }

    Tensor backward(const Tensor& grad_out) {
        Tensor g = grad_out;
        if (pooled) g = pool.backward(g);
        for (auto it = convs.rbegin(); it != convs.rend(); ++it) g = it->backward(g);
        return g;
    }

    void collect(std::vector<ParamRef>& out, ParamGroup g) {
        for (auto& c : convs) c.collect(out, g);
    }

    void init_params(Rng& rng) {
        for (auto& c : convs) c.init_params(rng);
    }
};

}  // namespace detail

/// Everything a forward pass produces that later stages or losses consume.
struct ForwardCache {
    Tensor image;          // 1 x 3 x H x W
    Tensor gamma;          // r4 feature vector
    Tensor d0_log;         // 1 x 1 x h x w log-depth (empty for R/C)
    Tensor d0;             // h x w depth in meters
    Tensor coarse_logits;  // 1 x K x h x w, CCCN only
    Tensor fine;           // 1 x K x H/8 x W/8 logits, or 1 x 1 x ... log-depth for R/RRCN
    Tensor refine_logits;  // 1 x K x H/4 x W/4 once forward_refine ran
    Tensor fused_log;      // H/4 x W/4 once forward_fusion ran
    Tensor fused;          // depth in meters
    bool has_refine = false;
    bool has_fusion = false;
};

class Model {
public:
    NetworkSpec spec;
    DiscretizationScheme scheme;

    /// Weights from U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero,
    /// deterministic given seed. Parameter values are float32-representable
    /// so model files round-trip bitwise.
    static Model build(const NetworkSpec& sp, const DiscretizationScheme& sc, uint64_t seed) {
        sp.validate();
        sc.validate();
        if (sp.K != sc.K)
            throw std::invalid_argument("Model::build: NetworkSpec.K != DiscretizationScheme.K");
        Model m;
        m.spec = sp;
        m.scheme = sc;
        m.construct();
        Rng rng(Rng::splitmix64(seed));
        m.init_all(rng);
        return m;
    }

    /// Collected fresh on every call so the refs stay valid after the model
    /// object itself is copied or moved.
    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        b1_.collect(out, ParamGroup::Shared);
        b2_.collect(out, ParamGroup::Shared);
        b3_.collect(out, ParamGroup::Shared);
        if (spec.has_regression_trunk()) {
            r1_.collect(out, ParamGroup::Regression);
            r2_.collect(out, ParamGroup::Regression);
            r3_.collect(out, ParamGroup::Regression);
            r4_.collect(out, ParamGroup::Regression);
            r5_.collect(out, ParamGroup::Regression);
            bridge_.collect(out, ParamGroup::Classification);
        }
        c1_.collect(out, ParamGroup::Classification);
        c2_.collect(out, ParamGroup::Classification);
        c3_.collect(out, ParamGroup::Classification);
        c4_.collect(out, ParamGroup::Classification);
        c5_.collect(out, ParamGroup::Classification);
        if (spec.has_refinement()) {
            p1_.collect(out, ParamGroup::Refinement);
            p2_.collect(out, ParamGroup::Refinement);
            p3_.collect(out, ParamGroup::Refinement);
            rbridge_.collect(out, ParamGroup::Refinement);
            p4_.collect(out, ParamGroup::Refinement);
            p5_.collect(out, ParamGroup::Refinement);
            p6_.collect(out, ParamGroup::Refinement);
            p7_.collect(out, ParamGroup::Refinement);
            for (auto& l : fusion_) l.collect(out, ParamGroup::Fusion);
        }
        return out;
    }

    /// Parameters trained in a given stage. 1: coarse branch pretrain,
    /// 2: joint RCCN, 3: refinement, 4: fusion.
    std::vector<ParamRef> stage_params(int stage) {
        std::vector<ParamRef> out;
        auto want = [&](ParamGroup g) {
            switch (stage) {
                case 1: return g == ParamGroup::Shared || g == ParamGroup::Regression;
                case 2:
                    return g == ParamGroup::Shared || g == ParamGroup::Regression ||
                           g == ParamGroup::Classification;
                case 3: return g == ParamGroup::Refinement;
                case 4: return g == ParamGroup::Fusion;
                default: throw std::invalid_argument("stage_params: stage must be 1..4");
            }
        };
        for (auto& p : params())
            if (want(p.group)) out.push_back(p);
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->fill(0.0);
    }

    /// --- forward passes -------------------------------------------------

    ForwardCache forward_rccn(const Tensor& image) {
        Tensor x = as_batched_image(image);
        ForwardCache cache;
        cache.image = x;

        Tensor s = b3_.forward(b2_.forward(b1_.forward(x)));  // /8
        shared_out_shape_ = s.shape;

        if (spec.has_regression_trunk()) {
            Tensor t = r2_.forward(r1_.forward(s));  // /32
            trunk_out_shape_ = t.shape;
            Tensor flat = t.reshaped({static_cast<int>(t.numel())});
            Tensor g3 = r3_.forward(flat);
            cache.gamma = r4_.forward(g3);
            Tensor head = r5_.forward(cache.gamma);
            const int h = spec.coarse_h(), w = spec.coarse_w();
            if (spec.coarse_head_is_classification()) {
                cache.coarse_logits = head.reshaped({1, spec.K, h, w});
                // decoded coarse map bridged as log-depth; argmax is treated
                // as a constant in backward (no gradient through decode)
                cache.d0_log = Tensor({1, 1, h, w});
                cache.d0 = Tensor({h, w});
                const long plane = static_cast<long>(h) * w;
                for (long i = 0; i < plane; ++i) {
                    int best = 0;
                    double bv = cache.coarse_logits.data[static_cast<size_t>(i)];
                    for (int k = 1; k < spec.K; ++k) {
                        const double v = cache.coarse_logits.data[static_cast<size_t>(k * plane + i)];
                        if (v > bv) {
                            bv = v;
                            best = k;
                        }
                    }
                    const double d = decode(best, scheme);
                    cache.d0.data[static_cast<size_t>(i)] = d;
                    cache.d0_log.data[static_cast<size_t>(i)] = std::log(d);
                }
            } else {
                cache.d0_log = head.reshaped({1, 1, h, w});
                cache.d0 = Tensor({h, w});
                for (size_t i = 0; i < cache.d0.data.size(); ++i)
                    cache.d0.data[i] = std::exp(cache.d0_log.data[i]);
                detail::check_finite(cache.d0, "r5.exp");
            }
        }

        Tensor u = c2_.forward(c1_.forward(s));
        Tensor fine_in;
        if (spec.has_bridge()) {
            bridge_out_ = bridge_.forward(cache.d0_log);
            c2_out_ = u;
            fine_in = concat_channels({&bridge_out_, &c2_out_});
        } else {
            fine_in = u;
        }
        Tensor v = c4_.forward(c3_.forward(fine_in));
        cache.fine = c5_.forward(v);
        return cache;
    }

    /// Joint backward. grad_fine matches cache.fine; grad_d0_log (may be
    /// empty) matches the 1x1xhxw coarse log-depth map; grad_coarse_logits
    /// (CCCN) matches cache.coarse_logits.
    void backward_rccn(const ForwardCache& cache, const Tensor& grad_fine,
                       const Tensor& grad_d0_log, const Tensor& grad_coarse_logits = Tensor()) {
        Tensor g = c5_.backward(grad_fine);
        g = c3_.backward(c4_.backward(g));

        Tensor g_shared;
        Tensor g_head;  // gradient reaching the regression head output
        if (spec.has_bridge()) {
            auto parts = concat_channels_backward({&bridge_out_, &c2_out_}, g);
            Tensor g_bridge_in = bridge_.backward(parts[0]);
            g_shared = c1_.backward(c2_.backward(parts[1]));
            if (spec.coarse_head_is_classification()) {
                // decode(argmax) is piecewise constant: drop the bridge path
                g_head = grad_coarse_logits.numel() > 0
                             ? grad_coarse_logits
                             : Tensor::zeros(cache.coarse_logits.shape);
            } else {
                g_head = g_bridge_in;
                if (grad_d0_log.numel() > 0)
                    for (size_t i = 0; i < g_head.data.size(); ++i)
                        g_head.data[i] += grad_d0_log.data[i];
            }
        } else {
            g_shared = c1_.backward(c2_.backward(g));
        }

        if (spec.has_regression_trunk()) {
            Tensor gh = g_head.reshaped({static_cast<int>(g_head.numel())});
            Tensor gg = r3_.backward(r4_.backward(r5_.backward(gh)));
            Tensor gt = gg.reshaped(trunk_out_shape_);
            Tensor gs = r1_.backward(r2_.backward(gt));
            for (size_t i = 0; i < g_shared.data.size(); ++i) g_shared.data[i] += gs.data[i];
        }
        b1_.backward(b2_.backward(b3_.backward(g_shared)));
    }

    /// Stage-1 forward: shared blocks + regression trunk only.
    Tensor forward_coarse(const Tensor& image, ForwardCache& cache) {
        Tensor x = as_batched_image(image);
        cache.image = x;
        Tensor s = b3_.forward(b2_.forward(b1_.forward(x)));
        Tensor t = r2_.forward(r1_.forward(s));
        trunk_out_shape_ = t.shape;
        Tensor flat = t.reshaped({static_cast<int>(t.numel())});
        cache.gamma = r4_.forward(r3_.forward(flat));
        Tensor head = r5_.forward(cache.gamma);
        const int h = spec.coarse_h(), w = spec.coarse_w();
        if (spec.coarse_head_is_classification()) {
            cache.coarse_logits = head.reshaped({1, spec.K, h, w});
            return cache.coarse_logits;
        }
        cache.d0_log = head.reshaped({1, 1, h, w});
        return cache.d0_log;
    }

    void backward_coarse(const Tensor& grad_head) {
        Tensor gh = grad_head.reshaped({static_cast<int>(grad_head.numel())});
        Tensor gg = r3_.backward(r4_.backward(r5_.backward(gh)));
        Tensor gt = gg.reshaped(trunk_out_shape_);
        Tensor gs = r1_.backward(r2_.backward(gt));
        b1_.backward(b2_.backward(b3_.backward(gs)));
    }

    Tensor forward_refine(const Tensor& image, ForwardCache& cache) {
        if (!spec.has_refinement())
            throw std::invalid_argument("forward_refine: variant has no refinement network");
        if (cache.fine.numel() == 0)
            throw std::invalid_argument("forward_refine: run forward_rccn first");
        Tensor x = as_batched_image(image);
        Tensor q = p3_.forward(p2_.forward(p1_.forward(x)));  // /4
        rbridge_out_ = rbridge_.forward(cache.fine);          // /8 -> /4
        p3_out_ = q;
        Tensor cat = concat_channels({&rbridge_out_, &p3_out_});
        Tensor y = p7_.forward(p6_.forward(p5_.forward(p4_.forward(cat))));
        cache.refine_logits = y;
        cache.has_refine = true;
        return y;
    }

    /// Refinement-stage backward; stops at the concat (upstream RCCN frozen).
    void backward_refine(const Tensor& grad_logits) {
        Tensor g = p4_.backward(p5_.backward(p6_.backward(p7_.backward(grad_logits))));
        auto parts = concat_channels_backward({&rbridge_out_, &p3_out_}, g);
        rbridge_.backward(parts[0]);
        p1_.backward(p2_.backward(p3_.backward(parts[1])));
    }

    /// Combines D0, decoded D1, and the decoded refinement map (all as
    /// log-depth at /4) through the small fusion stack; returns the fused
    /// continuous depth map.
    Tensor forward_fusion(ForwardCache& cache) {
        if (!spec.has_refinement())
            throw std::invalid_argument("forward_fusion: variant has no fusion network");
        if (!cache.has_refine)
            throw std::invalid_argument("forward_fusion: run forward_refine first");
        const int h4 = spec.input_h / 4, w4 = spec.input_w / 4;

        Tensor d0_log2d = cache.d0_log.reshaped({spec.coarse_h(), spec.coarse_w()});
        Tensor a = bilinear_resize(d0_log2d, h4, w4);
        Tensor b = bilinear_resize(decode_logits_log(cache.fine), h4, w4);
        Tensor c = decode_logits_log(cache.refine_logits);

        fusion_in_ = Tensor({1, 3, h4, w4});
        std::copy(a.data.begin(), a.data.end(), fusion_in_.data.begin());
        std::copy(b.data.begin(), b.data.end(),
                  fusion_in_.data.begin() + static_cast<long>(h4) * w4);
        std::copy(c.data.begin(), c.data.end(),
                  fusion_in_.data.begin() + 2L * h4 * w4);

        Tensor y = fusion_in_;
        for (auto& l : fusion_) y = l.forward(y);
        cache.fused_log = y.reshaped({h4, w4});
        cache.fused = Tensor({h4, w4});
        for (size_t i = 0; i < cache.fused.data.size(); ++i)
            cache.fused.data[i] = std::exp(cache.fused_log.data[i]);
        detail::check_finite(cache.fused, "fusion.exp");
        cache.has_fusion = true;
        return cache.fused;
    }

    void backward_fusion(const Tensor& grad_fused_log) {
        Tensor g = grad_fused_log.reshaped({1, 1, spec.input_h / 4, spec.input_w / 4});
        for (auto it = fusion_.rbegin(); it != fusion_.rend(); ++it) g = it->backward(g);
    }

    /// Full-resolution prediction in meters, clamped to [a, b].
    Tensor predict(const Tensor& image) {
        for (auto& p : params())
            if (!p.value->all_finite())
                throw std::runtime_error("predict: non-finite parameter in " + p.name);
        ForwardCache cache = forward_rccn(image);
        Tensor low_log;
        if (spec.has_refinement()) {
            forward_refine(image, cache);
            forward_fusion(cache);
            low_log = cache.fused_log;
        } else if (spec.fine_head_is_classification()) {
            low_log = decode_logits_log(cache.fine);
        } else {
            low_log = cache.fine.reshaped({cache.fine.dim(2), cache.fine.dim(3)});
        }
        Tensor full_log = bilinear_resize(low_log, spec.input_h, spec.input_w);
        Tensor out(full_log.shape);
        for (size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = std::clamp(std::exp(full_log.data[i]), scheme.a, scheme.b);
        return out;
    }

    /// argmax over channels, lowest bin on ties, then log of decoded depth.
    Tensor decode_logits_log(const Tensor& logits) const {
        const int K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
        const long plane = static_cast<long>(H) * W;
        Tensor out({H, W});
        std::vector<double> reps(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k) reps[static_cast<size_t>(k)] = std::log(decode(k, scheme));
        for (long i = 0; i < plane; ++i) {
            int best = 0;
            double bv = logits.data[static_cast<size_t>(i)];
            for (int k = 1; k < K; ++k) {
                const double v = logits.data[static_cast<size_t>(k * plane + i)];
                if (v > bv) {
                    bv = v;
                    best = k;
                }
            }
            out.data[static_cast<size_t>(i)] = reps[static_cast<size_t>(best)];
        }
        return out;
    }

    /// Copies trained b1..b3 parameters into the refinement front end
    /// (same shapes by construction).
    void init_refinement_from_shared() {
        if (!spec.has_refinement()) return;
        copy_block(b1_, p1_);
        copy_block(b2_, p2_);
        copy_block(b3_, p3_);
    }

    // Direct access for tests and serialization helpers.
    detail::DeconvLayer& bridge_layer() { return bridge_; }
    detail::ConvLayer& c3_layer() { return c3_.convs_ref(); }
    std::vector<detail::ConvLayer>& fusion_layers() { return fusion_; }

private:
    struct SingleConv {
        detail::ConvLayer conv;
        Tensor forward(const Tensor& x) { return conv.forward(x); }
        Tensor backward(const Tensor& g) { return conv.backward(g); }
        void collect(std::vector<ParamRef>& out, ParamGroup g) { conv.collect(out, g); }
        void init_params(Rng& rng) { conv.init_params(rng); }
        detail::ConvLayer& convs_ref() { return conv; }
    };

    Tensor as_batched_image(const Tensor& image) const {
        Tensor x = image;
        if (x.ndim() == 3) x = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
        if (x.ndim() != 4 || x.dim(0) != 1 || x.dim(1) != 3 || x.dim(2) != spec.input_h ||
            x.dim(3) != spec.input_w)
            throw std::invalid_argument("forward: image shape " + image.shape_str() +
                                        " does not match spec 3x" + std::to_string(spec.input_h) +
                                        "x" + std::to_string(spec.input_w));
        for (double v : x.data)
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("forward: pixel values must lie in [0,1]");
        return x;
    }

    void construct() {
        const int chb1 = spec.ch(64), chb2 = spec.ch(128), chb3 = spec.ch(256);
        const int chr = spec.ch(512), chfc = spec.ch(2048);
        const int chbridge = spec.ch(512), chc12 = spec.ch(512), chc34 = spec.ch(2048);
        const int chref = spec.ch(1024), chrbridge = spec.ch(256);
        const int h = spec.coarse_h(), w = spec.coarse_w();

        b1_.init("b1", 2, 3, chb1, 1, 2);
        b2_.init("b2", 2, chb1, chb2, 1, 2);
        b3_.init("b3", 3, chb2, chb3, 1, 2);

        if (spec.has_regression_trunk()) {
            r1_.init("r1", 3, chb3, chr, 1, 2);
            r2_.init("r2", 3, chr, chr, 1, 2);
            const int trunk_len = chr * (spec.input_h / 32) * (spec.input_w / 32);
            r3_.init("r3", chfc, trunk_len, true);
            r4_.init("r4", chfc, chfc, true);
            const int head_out =
                spec.coarse_head_is_classification() ? h * w * spec.K : h * w;
            r5_.init("r5", head_out, chfc, false);
            bridge_.init("rDe", 1, chbridge, 3, 1, 1, true);
        }

        c1_.init("c1", 3, chb3, chc12, 1, 1);  // stride-1 pooling, no subsampling
        c2_.init("c2", 3, chc12, chc12, 2, 1);
        const int c3_in = spec.has_bridge() ? chbridge + chc12 : chc12;
        c3_.conv.init("c3", chc34, c3_in, 3, 1, 1, true);
        c4_.conv.init("c4", chc34, chc34, 1, 0, 1, true);
        const int fine_ch = spec.fine_head_is_classification() ? spec.K : 1;
        c5_.conv.init("c5", fine_ch, chc34, 1, 0, 1, false);

        if (spec.has_refinement()) {
            p1_.init("c'1", 2, 3, chb1, 1, 2);
            p2_.init("c'2", 2, chb1, chb2, 1, 2);
            p3_.init("c'3", 3, chb2, chb3, 1, 0);
            rbridge_.init("rbridge", spec.K, chrbridge, 4, 2, 1, true);
            p4_.conv.init("c'4", chref, chrbridge + chb3, 3, 1, 1, true);
            p5_.conv.init("c'5", chref, chref, 3, 1, 1, true);
            p6_.conv.init("c'6", chref, chref, 1, 0, 1, true);
            p7_.conv.init("c'7", spec.K, chref, 1, 0, 1, false);

            fusion_.resize(static_cast<size_t>(spec.fusion_layers));
            for (int i = 0; i < spec.fusion_layers; ++i) {
                const bool head = i == spec.fusion_layers - 1;
                const int cin = i == 0 ? 3 : 32;
                const int cout = head ? 1 : 32;
                fusion_[static_cast<size_t>(i)].init("fusion" + std::to_string(i), cout, cin, 3,
                                                     1, 1, !head);
            }
        }

    }

    void init_all(Rng& rng) {
        b1_.init_params(rng);
        b2_.init_params(rng);
        b3_.init_params(rng);
        if (spec.has_regression_trunk()) {
            r1_.init_params(rng);
            r2_.init_params(rng);
            r3_.init_params(rng);
            r4_.init_params(rng);
            r5_.init_params(rng);
            bridge_.init_params(rng);
        }
        c1_.init_params(rng);
        c2_.init_params(rng);
        c3_.init_params(rng);
        c4_.init_params(rng);
        c5_.init_params(rng);
        if (spec.has_refinement()) {
            p1_.init_params(rng);
            p2_.init_params(rng);
            p3_.init_params(rng);
            rbridge_.init_params(rng);
            p4_.init_params(rng);
            p5_.init_params(rng);
            p6_.init_params(rng);
            p7_.init_params(rng);
            for (auto& l : fusion_) l.init_params(rng);
        }
    }

    static void copy_block(const detail::ConvBlock& src, detail::ConvBlock& dst) {
        for (size_t i = 0; i < src.convs.size(); ++i) {
            dst.convs[i].p.weights.data = src.convs[i].p.weights.data;
            dst.convs[i].p.bias.data = src.convs[i].p.bias.data;
        }
    }

    detail::ConvBlock b1_, b2_, b3_;
    detail::ConvBlock r1_, r2_;
    detail::FcLayer r3_, r4_, r5_;
    detail::DeconvLayer bridge_;
    detail::ConvBlock c1_, c2_;
    SingleConv c3_, c4_, c5_;
    detail::ConvBlock p1_, p2_, p3_;
    detail::DeconvLayer rbridge_;
    SingleConv p4_, p5_, p6_, p7_;
    std::vector<detail::ConvLayer> fusion_;

    Tensor bridge_out_, c2_out_;       // caches for concat backward
    Tensor rbridge_out_, p3_out_;
    Tensor fusion_in_;
    std::vector<int> shared_out_shape_, trunk_out_shape_;
};

}  // namespace rccn
