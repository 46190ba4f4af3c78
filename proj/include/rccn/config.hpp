#pragma once

#include <string>

#include <json.hpp>

#include "rccn/discretize.hpp"
#include "rccn/model.hpp"

namespace rccn {

using json = nlohmann::json;

inline json to_json(const DiscretizationScheme& s) {
    return json{{"mode", s.mode == DiscretizationMode::UD ? "UD" : "SID"},
                {"a", s.a},
                {"b", s.b},
                {"K", s.K}};
}

inline DiscretizationScheme scheme_from_json(const json& j) {
    DiscretizationScheme s;
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "UD")
        s.mode = DiscretizationMode::UD;
    else if (mode == "SID")
        s.mode = DiscretizationMode::SID;
    else
        throw std::invalid_argument("scheme: mode must be UD or SID, got " + mode);
    s.a = j.at("a").get<double>();
    s.b = j.at("b").get<double>();
    s.K = j.at("K").get<int>();
    s.validate();
    return s;
}

inline json to_json(const NetworkSpec& s) {
    return json{{"input_h", s.input_h},     {"input_w", s.input_w},
                {"channel_div", s.channel_div}, {"K", s.K},
                {"variant", variant_name(s.variant)}, {"fusion_layers", s.fusion_layers}};
}

inline NetworkSpec network_spec_from_json(const json& j) {
    NetworkSpec s;
    s.input_h = j.at("input_h").get<int>();
    s.input_w = j.at("input_w").get<int>();
    s.channel_div = j.value("channel_div", 8);
    s.K = j.at("K").get<int>();
    s.variant = variant_from_name(j.value("variant", "RCCN"));
    s.fusion_layers = j.value("fusion_layers", 3);
    s.validate();
    return s;
}

/// Procedural scene generator knobs.
struct SyntheticWorldConfig {
    uint64_t seed = 1;
    int n_samples = 8;
    int height = 64;
    int width = 64;
    double depth_min = 1.0;
    double depth_max = 10.0;
    int min_boxes = 2;
    int max_boxes = 6;
    double min_box_frac = 0.10;  // box extent as a fraction of image size
    double max_box_frac = 0.40;
    double texture_freq_min = 2.0;  // cycles per image
    double texture_freq_max = 12.0;

    void validate() const {
        if (n_samples < 1) throw std::invalid_argument("world: n_samples must be >= 1");
        if (height < 8 || width < 8) throw std::invalid_argument("world: image too small");
        if (!(depth_max > depth_min) || !(depth_min > 0))
            throw std::invalid_argument("world: need 0 < depth_min < depth_max");
        if (min_boxes < 0 || max_boxes < min_boxes)
            throw std::invalid_argument("world: bad box count range");
        if (!(min_box_frac > 0) || !(max_box_frac >= min_box_frac) || max_box_frac > 1)
            throw std::invalid_argument("world: bad box size range");
        if (!(texture_freq_min > 0) || !(texture_freq_max >= texture_freq_min))
            throw std::invalid_argument("world: bad texture frequency range");
    }
};

inline json to_json(const SyntheticWorldConfig& c) {
    return json{{"seed", c.seed},
                {"n_samples", c.n_samples},
                {"height", c.height},
                {"width", c.width},
                {"depth_min", c.depth_min},
                {"depth_max", c.depth_max},
                {"min_boxes", c.min_boxes},
                {"max_boxes", c.max_boxes},
                {"min_box_frac", c.min_box_frac},
                {"max_box_frac", c.max_box_frac},
                {"texture_freq_min", c.texture_freq_min},
                {"texture_freq_max", c.texture_freq_max}};
}

inline SyntheticWorldConfig world_from_json(const json& j) {
    SyntheticWorldConfig c;
    c.seed = j.value("seed", static_cast<uint64_t>(1));
    c.n_samples = j.value("n_samples", 8);
    c.height = j.value("height", 64);
    c.width = j.value("width", 64);
    c.depth_min = j.value("depth_min", 1.0);
    c.depth_max = j.value("depth_max", 10.0);
    c.min_boxes = j.value("min_boxes", 2);
    c.max_boxes = j.value("max_boxes", 6);
    c.min_box_frac = j.value("min_box_frac", 0.10);
    c.max_box_frac = j.value("max_box_frac", 0.40);
    c.texture_freq_min = j.value("texture_freq_min", 2.0);
    c.texture_freq_max = j.value("texture_freq_max", 12.0);
    c.validate();
    return c;
}

struct AugmentationConfig {
    int crop_h = 64;
    int crop_w = 64;
    double flip_prob = 0.5;
    double scale_min = 0.75;
    double scale_max = 1.25;
    double rotation_deg = 10.0;  // drawn from [-rotation_deg, +rotation_deg]
    bool enabled = true;

    void validate() const {
        if (flip_prob < 0 || flip_prob > 1)
            throw std::invalid_argument("augment: flip_prob must lie in [0,1]");
        if (!(scale_min > 0) || !(scale_max >= scale_min))
            throw std::invalid_argument("augment: bad scale range");
        if (rotation_deg < 0) throw std::invalid_argument("augment: rotation_deg must be >= 0");
        if (crop_h < 1 || crop_w < 1) throw std::invalid_argument("augment: bad crop size");
    }
};

inline json to_json(const AugmentationConfig& c) {
    return json{{"crop_h", c.crop_h},       {"crop_w", c.crop_w},
                {"flip_prob", c.flip_prob}, {"scale_min", c.scale_min},
                {"scale_max", c.scale_max}, {"rotation_deg", c.rotation_deg},
                {"enabled", c.enabled}};
}

inline AugmentationConfig augment_from_json(const json& j) {
    AugmentationConfig c;
    c.crop_h = j.value("crop_h", 64);
    c.crop_w = j.value("crop_w", 64);
    c.flip_prob = j.value("flip_prob", 0.5);
    c.scale_min = j.value("scale_min", 0.75);
    c.scale_max = j.value("scale_max", 1.25);
    c.rotation_deg = j.value("rotation_deg", 10.0);
    c.enabled = j.value("enabled", true);
    c.validate();
    return c;
}

struct TrainConfig {
    double base_lr = 1e-4;
    double power = 0.9;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    long total_iters = 20000;
    int batch_size = 1;
    uint64_t seed = 1;
    // stage iteration shares: coarse pretrain, joint, refinement, fusion
    double stage_frac[4] = {0.10, 0.70, 0.10, 0.10};
    long eval_every = 0;  // 0 = only at stage ends
    double divergence_loss = 1e6;
    double loss_r_weight = 1.0;  // sensitivity knob on the regression term

    void validate() const {
        if (total_iters < 1) throw std::invalid_argument("train: total_iters must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (!(base_lr > 0)) throw std::invalid_argument("train: base_lr must be > 0");
        double s = 0;
        for (double f : stage_frac) {
            if (f < 0) throw std::invalid_argument("train: stage fractions must be >= 0");
            s += f;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("train: stage fractions must sum to 1");
    }
};

inline json to_json(const TrainConfig& c) {
    return json{{"base_lr", c.base_lr},
                {"power", c.power},
                {"momentum", c.momentum},
                {"weight_decay", c.weight_decay},
                {"total_iters", c.total_iters},
                {"batch_size", c.batch_size},
                {"seed", c.seed},
                {"stage_frac", {c.stage_frac[0], c.stage_frac[1], c.stage_frac[2], c.stage_frac[3]}},
                {"eval_every", c.eval_every},
                {"divergence_loss", c.divergence_loss},
                {"loss_r_weight", c.loss_r_weight}};
}

inline TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.base_lr = j.value("base_lr", 1e-4);
    c.power = j.value("power", 0.9);
    c.momentum = j.value("momentum", 0.9);
    c.weight_decay = j.value("weight_decay", 5e-4);
    c.total_iters = j.value("total_iters", static_cast<long>(20000));
    c.batch_size = j.value("batch_size", 1);
    c.seed = j.value("seed", static_cast<uint64_t>(1));
    if (j.contains("stage_frac")) {
        auto a = j.at("stage_frac");
        if (!a.is_array() || a.size() != 4)
            throw std::invalid_argument("train: stage_frac must be an array of 4 fractions");
        for (int i = 0; i < 4; ++i) c.stage_frac[i] = a[static_cast<size_t>(i)].get<double>();
    }
    c.eval_every = j.value("eval_every", static_cast<long>(0));
    c.divergence_loss = j.value("divergence_loss", 1e6);
    c.loss_r_weight = j.value("loss_r_weight", 1.0);
    c.validate();
    return c;
}

/// The single experiment document: world + network + scheme + augment + train.
struct ExperimentConfig {
    SyntheticWorldConfig world;
    NetworkSpec network;
    DiscretizationScheme scheme;
    AugmentationConfig augment;
    TrainConfig train;
};

inline json to_json(const ExperimentConfig& c) {
    return json{{"world", to_json(c.world)},
                {"network", to_json(c.network)},
                {"scheme", to_json(c.scheme)},
                {"augment", to_json(c.augment)},
                {"train", to_json(c.train)}};
}

inline ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("world")) c.world = world_from_json(j.at("world"));
    if (j.contains("network")) c.network = network_spec_from_json(j.at("network"));
    if (j.contains("scheme")) c.scheme = scheme_from_json(j.at("scheme"));
    if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (c.network.K != c.scheme.K)
        throw std::invalid_argument("config: network.K must equal scheme.K");
    return c;
}

}  // namespace rccn
