#pragma once

#include "rccn/gradcheck.hpp"
#include "rccn/loss.hpp"
#include "rccn/model.hpp"
#include "rccn/synth.hpp"
#include "rccn/data.hpp"

namespace rccn {

/// Gradient verification harness: a tiny RCCN on one synthetic scene with the
/// joint loss (classification fine head + regression coarse head), checking
/// every stage-2 parameter tensor.
// The step is finer than the layer-level default: whole-network losses on
// real scenes have a much higher density of ReLU/pool kinks, and a 1e-5
// interval occasionally straddles one.
inline GradCheckReport gradcheck_joint(uint64_t seed, int samples_per_tensor = 8,
                                       double step = 1e-6) {
    NetworkSpec ns;
    ns.input_h = 32;
    ns.input_w = 32;
    ns.channel_div = 32;
    ns.K = 5;
    ns.variant = Variant::RCCN;
    DiscretizationScheme sc{DiscretizationMode::SID, 1.0, 10.0, ns.K};

    SyntheticWorldConfig wc;
    wc.seed = seed;
    wc.height = ns.input_h;
    wc.width = ns.input_w;
    Rng rng = Rng::substream(seed, 0);
    SceneSample scene = synth_scene(wc, rng);
    Targets tg = make_targets(scene, sc);

    Model model = Model::build(ns, sc, seed);
    const int h = ns.coarse_h(), w = ns.coarse_w();

    auto losses = [&](bool backward) {
        ForwardCache cache = model.forward_rccn(scene.rgb);
        auto lc = classification_loss(cache.fine.reshaped({ns.K, h, w}), tg.fine_bins,
                                      sc.ignore_index());
        auto lr = regression_loss(cache.d0_log.reshaped({h, w}), tg.coarse_log, tg.coarse_mask);
        if (backward)
            model.backward_rccn(cache, lc.grad.reshaped(cache.fine.shape),
                                lr.grad.reshaped({1, 1, h, w}));
        return lr.loss + lc.loss;
    };
    return gradcheck(
        model.stage_params(2),
        [&] {
            model.zero_grads();
            return losses(true);
        },
        [&] { return losses(false); }, samples_per_tensor, step);
}

}  // namespace rccn
