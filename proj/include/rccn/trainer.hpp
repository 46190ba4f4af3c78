#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rccn/config.hpp"
#include "rccn/data.hpp"
#include "rccn/loss.hpp"
#include "rccn/metrics.hpp"
#include "rccn/model.hpp"
#include "rccn/model_io.hpp"
#include "rccn/sgd.hpp"
#include "rccn/synth.hpp"

namespace rccn {

struct CurvePoint {
    long iter = 0;
    int stage = 0;
    double loss_r = 0.0;
    double loss_c = 0.0;
    double total() const { return loss_r + loss_c; }
};

inline void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_curve_csv: cannot open " + path);
    f << "iter,loss_r,loss_c,total\n";
    char line[128];
    for (const auto& p : curve) {
        std::snprintf(line, sizeof(line), "%ld,%.17g,%.17g,%.17g\n", p.iter, p.loss_r, p.loss_c,
                      p.total());
        f << line;
    }
}

/// Per-head evaluation: mean over scenes plus the per-scene breakdown.
struct HeadEval {
    bool present = false;
    MetricsReport mean;
    std::vector<MetricsReport> per_scene;
};

struct EvalReport {
    HeadEval d0, d1, refine, fused;
};

struct EvalOptions {
    bool center_crop = false;  // crop larger scenes to the network input size
    std::optional<std::pair<double, double>> cap;
};

struct TrainOptions {
    std::string checkpoint_dir;         // empty = no checkpoints
    double target_rmse_log = 0.0;       // > 0: end a stage early once its head is this good
    long check_every = 0;               // cadence of the early-stop check
    const std::vector<SceneSample>* monitor_scenes = nullptr;  // default: the training set
    std::function<void(const CurvePoint&)> on_point;
};

struct TrainResult {
    std::vector<CurvePoint> curve;
    bool diverged = false;
    bool early_stopped = false;
    long iters_done = 0;
    std::array<long, 4> stage_iters{0, 0, 0, 0};
    double wall_seconds = 0.0;
};

namespace detail_train {

inline SceneSample fit_scene(const SceneSample& s, int H, int W, bool center_crop) {
    if (s.height() == H && s.width() == W) return s;
    if (s.height() < H || s.width() < W)
        throw std::invalid_argument("evaluate: scene " + std::to_string(s.height()) + "x" +
                                    std::to_string(s.width()) + " smaller than network input " +
                                    std::to_string(H) + "x" + std::to_string(W));
    if (!center_crop)
        throw std::invalid_argument("evaluate: scene size mismatch (enable center cropping)");
    return crop_sample(s, (s.height() - H) / 2, (s.width() - W) / 2, H, W);
}

/// Full-resolution depth from a low-resolution log map: bilinear in log space,
/// exponentiated and clamped to the scheme range.
inline Tensor upsample_log_to_depth(const Tensor& low_log, int H, int W,
                                    const DiscretizationScheme& sc) {
    Tensor full = bilinear_resize(low_log, H, W);
    for (double& v : full.data) v = std::clamp(std::exp(v), sc.a, sc.b);
    return full;
}

inline MetricsReport mean_metrics(const std::vector<MetricsReport>& v) {
    MetricsReport m;
    for (const auto& r : v) {
        m.delta1 += r.delta1;
        m.delta2 += r.delta2;
        m.delta3 += r.delta3;
        m.abs_rel += r.abs_rel;
        m.squa_rel += r.squa_rel;
        m.rmse += r.rmse;
        m.rmse_log += r.rmse_log;
        m.ave_log10 += r.ave_log10;
        m.n_valid += r.n_valid;
    }
    const double n = static_cast<double>(v.size());
    m.delta1 /= n;
    m.delta2 /= n;
    m.delta3 /= n;
    m.abs_rel /= n;
    m.squa_rel /= n;
    m.rmse /= n;
    m.rmse_log /= n;
    m.ave_log10 /= n;
    return m;
}

inline void scale_in_place(Tensor& t, double s) {
    for (double& v : t.data) v *= s;
}

}  // namespace detail_train

/// Per-head metrics on a dataset: D0 upsampled, decoded D1, decoded
/// refinement, fused prediction. Heads the variant lacks stay absent.
inline EvalReport evaluate(Model& model, const std::vector<SceneSample>& scenes,
                           const EvalOptions& opt = {}) {
    if (scenes.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const int H = model.spec.input_h, W = model.spec.input_w;
    EvalReport rep;
    rep.d0.present = model.spec.has_regression_trunk();
    rep.d1.present = true;
    rep.refine.present = model.spec.has_refinement();
    rep.fused.present = model.spec.has_refinement();
    for (const auto& raw : scenes) {
        SceneSample s = detail_train::fit_scene(raw, H, W, opt.center_crop);
        ForwardCache cache = model.forward_rccn(s.rgb);
        if (model.spec.has_refinement()) {
            model.forward_refine(s.rgb, cache);
            model.forward_fusion(cache);
        }
        auto score = [&](HeadEval& head, const Tensor& low_log) {
            Tensor pred = detail_train::upsample_log_to_depth(low_log, H, W, model.scheme);
            head.per_scene.push_back(compute_metrics(pred, s.depth, s.mask, opt.cap));
        };
        if (rep.d0.present)
            score(rep.d0, cache.d0_log.reshaped({model.spec.coarse_h(), model.spec.coarse_w()}));
        if (model.spec.fine_head_is_classification())
            score(rep.d1, model.decode_logits_log(cache.fine));
        else
            score(rep.d1, cache.fine.reshaped({cache.fine.dim(2), cache.fine.dim(3)}));
        if (rep.refine.present) score(rep.refine, model.decode_logits_log(cache.refine_logits));
        if (rep.fused.present) score(rep.fused, cache.fused_log);
    }
    for (HeadEval* h : {&rep.d0, &rep.d1, &rep.refine, &rep.fused})
        if (h->present) h->mean = detail_train::mean_metrics(h->per_scene);
    return rep;
}

namespace detail_train {

/// RMSE_log of the head trained in a given stage, used for early stopping.
inline double stage_head_rmse_log(Model& model, const std::vector<SceneSample>& scenes,
                                  int stage) {
    const int H = model.spec.input_h, W = model.spec.input_w;
    double acc = 0.0;
    long n = 0;
    for (const auto& raw : scenes) {
        SceneSample s = fit_scene(raw, H, W, true);
        Tensor low_log;
        if (stage == 1) {
            ForwardCache cache;
            Tensor head = model.forward_coarse(s.rgb, cache);
            if (model.spec.coarse_head_is_classification())
                low_log = model.decode_logits_log(cache.coarse_logits);
            else
                low_log = head.reshaped({model.spec.coarse_h(), model.spec.coarse_w()});
        } else {
            ForwardCache cache = model.forward_rccn(s.rgb);
            if (stage == 2) {
                low_log = model.spec.fine_head_is_classification()
                              ? model.decode_logits_log(cache.fine)
                              : cache.fine.reshaped({cache.fine.dim(2), cache.fine.dim(3)});
            } else {
                model.forward_refine(s.rgb, cache);
                if (stage == 3) {
                    low_log = model.decode_logits_log(cache.refine_logits);
                } else {
                    model.forward_fusion(cache);
                    low_log = cache.fused_log;
                }
            }
        }
        Tensor pred = upsample_log_to_depth(low_log, H, W, model.scheme);
        for (size_t i = 0; i < s.mask.size(); ++i) {
            if (!s.mask[i]) continue;
            const double e = std::log(pred.data[i]) - std::log(s.depth.data[i]);
            acc += e * e;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("early-stop monitor: no valid pixels");
    return std::sqrt(acc / static_cast<double>(n));
}

struct ParamSnapshot {
    std::vector<std::vector<double>> values, momenta;

    static ParamSnapshot take(std::vector<ParamRef> params) {
        ParamSnapshot s;
        for (auto& p : params) {
            s.values.push_back(p.value->data);
            s.momenta.push_back(p.momentum->data);
        }
        return s;
    }

    void restore(std::vector<ParamRef> params) const {
        for (size_t i = 0; i < params.size(); ++i) {
            params[i].value->data = values[i];
            params[i].momentum->data = momenta[i];
        }
    }
};

/// Iterations per stage: rounded shares of the total, remainder to the joint
/// stage. Variants without a regression trunk fold the pretrain share into
/// the joint stage; variants without refinement skip stages 3-4.
inline std::array<long, 4> stage_plan(const NetworkSpec& spec, const TrainConfig& cfg) {
    std::array<long, 4> s{};
    long sum = 0;
    for (int i = 0; i < 4; ++i) {
        s[static_cast<size_t>(i)] =
            std::lround(cfg.stage_frac[i] * static_cast<double>(cfg.total_iters));
        sum += s[static_cast<size_t>(i)];
    }
    s[1] += cfg.total_iters - sum;
    if (!spec.has_regression_trunk()) {
        s[1] += s[0];
        s[0] = 0;
    }
    if (!spec.has_refinement()) s[2] = s[3] = 0;
    return s;
}

}  // namespace detail_train

/// Runs the staged protocol: coarse pretrain, joint training, refinement with
/// the upstream frozen, then fusion with everything else frozen. Deterministic
/// given the config seed; aborts on divergence restoring the stage-start
/// parameters.
inline TrainResult train(Model& model, const std::vector<SceneSample>& data,
                         const ExperimentConfig& cfg, const TrainOptions& opt = {}) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    cfg.train.validate();
    cfg.augment.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const TrainConfig& tc = cfg.train;
    const DiscretizationScheme& sc = model.scheme;
    const int K = model.spec.K;
    const int h8 = model.spec.coarse_h(), w8 = model.spec.coarse_w();
    const int h4 = model.spec.input_h / 4, w4 = model.spec.input_w / 4;
    const std::vector<SceneSample>& monitor = opt.monitor_scenes ? *opt.monitor_scenes : data;

    Rng order_rng = Rng::substream(tc.seed, 0xD47A);
    Rng aug_rng = Rng::substream(tc.seed, 0xA406);
    std::vector<size_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), size_t{0});
    size_t cursor = perm.size();  // forces a shuffle on first draw
    auto draw = [&]() -> const SceneSample& {
        if (cursor >= perm.size()) {
            for (size_t i = perm.size(); i > 1; --i)
                std::swap(perm[i - 1], perm[static_cast<size_t>(order_rng.uniform_int(i))]);
            cursor = 0;
        }
        return data[perm[cursor++]];
    };

    const auto plan = detail_train::stage_plan(model.spec, tc);
    TrainResult res;
    res.stage_iters = plan;
    long global_iter = 0;

    for (int stage = 1; stage <= 4; ++stage) {
        const long T = plan[static_cast<size_t>(stage - 1)];
        if (T == 0) continue;
        if (stage == 3) model.init_refinement_from_shared();
        auto stage_p = model.stage_params(stage);
        const auto snapshot = detail_train::ParamSnapshot::take(stage_p);

        for (long t = 0; t < T; ++t, ++global_iter) {
            model.zero_grads();
            double loss_r = 0.0, loss_c = 0.0;
            bool blew_up = false;
            const double inv_b = 1.0 / static_cast<double>(tc.batch_size);
            try {
            for (int b = 0; b < tc.batch_size; ++b) {
                SceneSample s = augment(draw(), cfg.augment, aug_rng);
                Targets tg = make_targets(s, sc);
                if (stage == 1) {
                    ForwardCache cache;
                    Tensor head = model.forward_coarse(s.rgb, cache);
                    if (model.spec.coarse_head_is_classification()) {
                        auto sl = classification_loss(head.reshaped({K, h8, w8}), tg.fine_bins,
                                                      sc.ignore_index());
                        if (sl.empty) continue;
                        loss_c += sl.loss * inv_b;
                        detail_train::scale_in_place(sl.grad, inv_b);
                        model.backward_coarse(sl.grad.reshaped({1, K, h8, w8}));
                    } else {
                        auto sl = regression_loss(head.reshaped({h8, w8}), tg.coarse_log,
                                                  tg.coarse_mask);
                        if (sl.empty) continue;
                        loss_r += tc.loss_r_weight * sl.loss * inv_b;
                        detail_train::scale_in_place(sl.grad, tc.loss_r_weight * inv_b);
                        model.backward_coarse(sl.grad.reshaped({1, 1, h8, w8}));
                    }
                } else if (stage == 2) {
                    ForwardCache cache = model.forward_rccn(s.rgb);
                    Tensor grad_fine = Tensor::zeros(cache.fine.shape);
                    if (model.spec.fine_head_is_classification()) {
                        auto sl = classification_loss(cache.fine.reshaped({K, h8, w8}),
                                                      tg.fine_bins, sc.ignore_index());
                        if (!sl.empty) {
                            loss_c += sl.loss * inv_b;
                            detail_train::scale_in_place(sl.grad, inv_b);
                            grad_fine = sl.grad.reshaped(cache.fine.shape);
                        }
                    } else {
                        auto sl = regression_loss(cache.fine.reshaped({h8, w8}), tg.coarse_log,
                                                  tg.coarse_mask);
                        if (!sl.empty) {
                            loss_r += tc.loss_r_weight * sl.loss * inv_b;
                            detail_train::scale_in_place(sl.grad, tc.loss_r_weight * inv_b);
                            grad_fine = sl.grad.reshaped(cache.fine.shape);
                        }
                    }
                    Tensor grad_d0, grad_cl;
                    if (model.spec.has_regression_trunk()) {
                        if (model.spec.coarse_head_is_classification()) {
                            auto sl = classification_loss(
                                cache.coarse_logits.reshaped({K, h8, w8}), tg.fine_bins,
                                sc.ignore_index());
                            if (!sl.empty) {
                                loss_c += sl.loss * inv_b;
                                detail_train::scale_in_place(sl.grad, inv_b);
                                grad_cl = sl.grad.reshaped(cache.coarse_logits.shape);
                            }
                        } else {
                            auto sl = regression_loss(cache.d0_log.reshaped({h8, w8}),
                                                      tg.coarse_log, tg.coarse_mask);
                            if (!sl.empty) {
                                loss_r += tc.loss_r_weight * sl.loss * inv_b;
                                detail_train::scale_in_place(sl.grad, tc.loss_r_weight * inv_b);
                                grad_d0 = sl.grad.reshaped({1, 1, h8, w8});
                            }
                        }
                    }
                    model.backward_rccn(cache, grad_fine, grad_d0, grad_cl);
                } else if (stage == 3) {
                    ForwardCache cache = model.forward_rccn(s.rgb);
                    model.forward_refine(s.rgb, cache);
                    auto sl = classification_loss(cache.refine_logits.reshaped({K, h4, w4}),
                                                  tg.refine_bins, sc.ignore_index());
                    if (sl.empty) continue;
                    loss_c += sl.loss * inv_b;
                    detail_train::scale_in_place(sl.grad, inv_b);
                    model.backward_refine(sl.grad.reshaped(cache.refine_logits.shape));
                } else {
                    ForwardCache cache = model.forward_rccn(s.rgb);
                    model.forward_refine(s.rgb, cache);
                    model.forward_fusion(cache);
                    auto sl = regression_loss(cache.fused_log, tg.fusion_log, tg.fusion_mask);
                    if (sl.empty) continue;
                    loss_r += sl.loss * inv_b;
                    detail_train::scale_in_place(sl.grad, inv_b);
                    model.backward_fusion(sl.grad);
                }
            }
            } catch (const std::runtime_error&) {
                blew_up = true;  // non-finite activations mid-forward
                loss_r = loss_c = std::numeric_limits<double>::quiet_NaN();
            }

            CurvePoint pt{global_iter, stage, loss_r, loss_c};
            res.curve.push_back(pt);
            if (opt.on_point) opt.on_point(pt);
            if (blew_up || !std::isfinite(pt.total()) || pt.total() > tc.divergence_loss ||
                !sgd_step(stage_p, t, T, tc)) {
                snapshot.restore(stage_p);
                res.diverged = true;
                res.iters_done = global_iter + 1;
                res.wall_seconds = std::chrono::duration<double>(
                                       std::chrono::steady_clock::now() - t_start)
                                       .count();
                return res;
            }

            if (opt.target_rmse_log > 0 && opt.check_every > 0 && (t + 1) % opt.check_every == 0 &&
                t + 1 < T) {
                if (detail_train::stage_head_rmse_log(model, monitor, stage) <
                    opt.target_rmse_log) {
                    ++global_iter;
                    res.early_stopped = true;
                    break;
                }
            }
        }

        if (!opt.checkpoint_dir.empty()) {
            std::filesystem::create_directories(opt.checkpoint_dir);
            save_model(model, (std::filesystem::path(opt.checkpoint_dir) /
                               ("stage" + std::to_string(stage) + ".rccn"))
                                  .string());
        }
    }

    res.iters_done = global_iter;
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

/// One trained run of one variant under one seed.
struct RunResult {
    std::string variant;
    uint64_t seed = 0;
    std::vector<CurvePoint> curve;
    EvalReport train_eval;
    EvalReport val_eval;
    bool has_val = false;
    bool diverged = false;
    double wall_seconds = 0.0;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
};

inline json to_json(const MetricsReport& m) {
    return json{{"delta1", m.delta1},     {"delta2", m.delta2},
                {"delta3", m.delta3},     {"abs_rel", m.abs_rel},
                {"squa_rel", m.squa_rel}, {"rmse", m.rmse},
                {"rmse_log", m.rmse_log}, {"ave_log10", m.ave_log10},
                {"n_valid", m.n_valid}};
}

inline json to_json(const HeadEval& h) {
    if (!h.present) return nullptr;
    json per = json::array();
    for (const auto& r : h.per_scene) per.push_back(to_json(r));
    return json{{"mean", to_json(h.mean)}, {"per_scene", per}};
}

inline json to_json(const EvalReport& e) {
    return json{{"d0", to_json(e.d0)},
                {"d1", to_json(e.d1)},
                {"refine", to_json(e.refine)},
                {"fused", to_json(e.fused)}};
}

inline json to_json(const RunResult& r) {
    json curve = json::array();
    for (const auto& p : r.curve)
        curve.push_back(json{{"iter", p.iter},
                             {"stage", p.stage},
                             {"loss_r", p.loss_r},
                             {"loss_c", p.loss_c},
                             {"total", p.total()}});
    json j{{"variant", r.variant},
           {"seed", r.seed},
           {"diverged", r.diverged},
           {"wall_seconds", r.wall_seconds},
           {"train", to_json(r.train_eval)},
           {"curve", curve}};
    if (r.has_val) j["val"] = to_json(r.val_eval);
    return j;
}

inline json to_json(const ExperimentResult& e) {
    json runs = json::array();
    for (const auto& r : e.runs) runs.push_back(to_json(r));
    return json{{"runs", runs}};
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Fraction of held-out scenes where the fused head beats or ties decoded D1
/// on RMSE_log.
inline double fused_win_fraction(const EvalReport& e) {
    if (!e.fused.present) throw std::invalid_argument("fused_win_fraction: no fused head");
    long wins = 0;
    for (size_t i = 0; i < e.fused.per_scene.size(); ++i)
        if (e.fused.per_scene[i].rmse_log <= e.d1.per_scene[i].rmse_log) ++wins;
    return static_cast<double>(wins) / static_cast<double>(e.fused.per_scene.size());
}

/// Trains the five variants under identical budgets and seeds; per run the
/// variant and seed override the base config (the seed also seeds the
/// parameter init).
inline ExperimentResult ablate(const ExperimentConfig& base,
                               const std::vector<SceneSample>& train_scenes,
                               const std::vector<SceneSample>& heldout,
                               const std::vector<uint64_t>& seeds, const TrainOptions& opt = {},
                               const std::function<void(const RunResult&)>& on_run = nullptr) {
    if (seeds.empty()) throw std::invalid_argument("ablate: need at least one seed");
    static constexpr Variant kVariants[] = {Variant::R, Variant::C, Variant::RRCN, Variant::RCCN,
                                            Variant::CCCN};
    ExperimentResult result;
    for (Variant v : kVariants)
        for (uint64_t seed : seeds) {
            ExperimentConfig cfg = base;
            cfg.network.variant = v;
            cfg.train.seed = seed;
            Model model = Model::build(cfg.network, cfg.scheme, seed);
            TrainOptions run_opt = opt;
            if (!opt.checkpoint_dir.empty())
                run_opt.checkpoint_dir =
                    (std::filesystem::path(opt.checkpoint_dir) /
                     (std::string(variant_name(v)) + "-seed" + std::to_string(seed)))
                        .string();
            TrainResult tr = train(model, train_scenes, cfg, run_opt);
            RunResult run;
            run.variant = variant_name(v);
            run.seed = seed;
            run.curve = std::move(tr.curve);
            run.diverged = tr.diverged;
            run.wall_seconds = tr.wall_seconds;
            EvalOptions eo;
            eo.center_crop = true;
            run.train_eval = evaluate(model, train_scenes, eo);
            if (!heldout.empty()) {
                run.val_eval = evaluate(model, heldout, eo);
                run.has_val = true;
            }
            if (on_run) on_run(run);
            result.runs.push_back(std::move(run));
        }
    return result;
}

/// Median-over-seeds D1 training RMSE_log per variant, the headline of the
/// variant comparison.
inline std::vector<std::pair<std::string, double>> ablation_medians(const ExperimentResult& r) {
    std::vector<std::pair<std::string, double>> out;
    for (const char* v : {"R", "C", "RRCN", "RCCN", "CCCN"}) {
        std::vector<double> vals;
        for (const auto& run : r.runs)
            if (run.variant == v) vals.push_back(run.train_eval.d1.mean.rmse_log);
        if (!vals.empty()) out.emplace_back(v, median(vals));
    }
    return out;
}

inline std::string ablation_table(const ExperimentResult& r) {
    std::string out = "variant  median_train_d1_rmse_log\n";
    char line[80];
    for (const auto& [name, value] : ablation_medians(r)) {
        std::snprintf(line, sizeof(line), "%-8s %.6f\n", name.c_str(), value);
        out += line;
    }
    return out;
}

}  // namespace rccn
