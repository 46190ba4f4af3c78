#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rccn/config.hpp"
#include "rccn/image_io.hpp"
#include "rccn/model_io.hpp"  // fnv1a64
#include "rccn/rng.hpp"

namespace rccn {

namespace detail_synth {

/// A fronto-parallel textured rectangle at constant depth.
struct Surface {
    double depth;
    int y0, y1, x0, x1;  // pixel bounds, inclusive-exclusive
    double albedo[3];
    double tex_freq, tex_angle, tex_phase;
};

inline double texture_at(const Surface& s, double u, double v) {
    const double t = u * std::cos(s.tex_angle) + v * std::sin(s.tex_angle);
    return 0.5 + 0.5 * std::sin(2.0 * M_PI * s.tex_freq * t + s.tex_phase);
}

}  // namespace detail_synth

/// Renders one procedural scene: a perspective ground plane (depth grows
/// toward the horizon), a far backdrop at max depth, and 2-6 textured boxes
/// and billboards at sampled depths. Per-pixel depth is the nearest surface;
/// shading darkens with depth so depth is learnable from appearance.
inline SceneSample synth_scene(const SyntheticWorldConfig& cfg, Rng& rng) {
    cfg.validate();
    const int H = cfg.height, W = cfg.width;
    const double a = cfg.depth_min, b = cfg.depth_max;

    const double horizon = H * rng.uniform(0.25, 0.45);
    const double near_depth = a + rng.uniform(0.0, 0.2) * (b - a);
    const double plane_k = near_depth * (H - 1 - horizon);  // depth = k / (y - horizon)

    const int n_boxes =
        cfg.min_boxes +
        static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.max_boxes - cfg.min_boxes + 1)));
    std::vector<detail_synth::Surface> boxes;
    for (int i = 0; i < n_boxes; ++i) {
        detail_synth::Surface s;
        s.depth = std::exp(rng.uniform(std::log(a * 1.05), std::log(b * 0.9)));
        const int bw = std::max(2, static_cast<int>(W * rng.uniform(cfg.min_box_frac, cfg.max_box_frac)));
        const int bh = std::max(2, static_cast<int>(H * rng.uniform(cfg.min_box_frac, cfg.max_box_frac)));
        s.x0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(std::max(1, W - bw))));
        s.x1 = std::min(W, s.x0 + bw);
        const bool grounded = rng.bernoulli(0.6);
        if (grounded) {
            // bottom edge sits where the ground plane reaches the box depth
            const int yb = std::min(H, static_cast<int>(horizon + plane_k / s.depth) + 1);
            s.y1 = std::max(2, yb);
            s.y0 = std::max(0, s.y1 - bh);
        } else {
            s.y0 = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(std::max(1, H - bh))));
            s.y1 = std::min(H, s.y0 + bh);
        }
        for (double& c : s.albedo) c = rng.uniform(0.25, 1.0);
        s.tex_freq = rng.uniform(cfg.texture_freq_min, cfg.texture_freq_max);
        s.tex_angle = rng.uniform(0.0, M_PI);
        s.tex_phase = rng.uniform(0.0, 2.0 * M_PI);
        boxes.push_back(s);
    }

    detail_synth::Surface ground;
    ground.depth = 0;  // varies per row
    for (double& c : ground.albedo) c = rng.uniform(0.3, 0.9);
    ground.tex_freq = rng.uniform(cfg.texture_freq_min, cfg.texture_freq_max);
    ground.tex_angle = rng.uniform(0.0, M_PI);
    ground.tex_phase = rng.uniform(0.0, 2.0 * M_PI);
    detail_synth::Surface backdrop = ground;
    for (double& c : backdrop.albedo) c = rng.uniform(0.4, 1.0);
    backdrop.tex_freq = rng.uniform(cfg.texture_freq_min, cfg.texture_freq_max);

    SceneSample out;
    out.rgb = Tensor({3, H, W});
    out.depth = Tensor({H, W});
    out.mask.assign(static_cast<size_t>(H) * W, 1);
    const long plane = static_cast<long>(H) * W;
    const double logba = std::log(b / a);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double d;
            const detail_synth::Surface* owner;
            if (y > horizon) {
                d = std::clamp(plane_k / (y - horizon), a, b);
                owner = &ground;
            } else {
                d = b;
                owner = &backdrop;
            }
            for (const auto& s : boxes)
                if (y >= s.y0 && y < s.y1 && x >= s.x0 && x < s.x1 && s.depth < d) {
                    d = s.depth;
                    owner = &s;
                }
            out.depth.at(y, x) = d;
            const double u = static_cast<double>(x) / W, v = static_cast<double>(y) / H;
            const double tex = detail_synth::texture_at(*owner, u, v);
            const double shade = 1.0 - 0.75 * std::clamp(std::log(d / a) / logba, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double val = std::clamp(owner->albedo[c] * (0.6 + 0.4 * tex) * shade, 0.0, 1.0);
                // quantize to the PPM grid so on-disk round trips are exact
                out.rgb.data[static_cast<size_t>(c) * plane + static_cast<long>(y) * W + x] =
                    std::lround(val * 255.0) / 255.0;
            }
        }
    return out;
}

struct DatasetManifest {
    SyntheticWorldConfig config;
    std::vector<std::string> ppm_names, dmap_names;
    std::vector<uint64_t> ppm_hashes, dmap_hashes;
};

inline json to_json(const DatasetManifest& m) {
    json samples = json::array();
    for (size_t i = 0; i < m.ppm_names.size(); ++i)
        samples.push_back(json{{"ppm", m.ppm_names[i]},
                               {"dmap", m.dmap_names[i]},
                               {"ppm_fnv1a64", m.ppm_hashes[i]},
                               {"dmap_fnv1a64", m.dmap_hashes[i]}});
    return json{{"config", to_json(m.config)}, {"samples", samples}};
}

inline DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.config = world_from_json(j.at("config"));
    for (const auto& s : j.at("samples")) {
        m.ppm_names.push_back(s.at("ppm").get<std::string>());
        m.dmap_names.push_back(s.at("dmap").get<std::string>());
        m.ppm_hashes.push_back(s.at("ppm_fnv1a64").get<uint64_t>());
        m.dmap_hashes.push_back(s.at("dmap_fnv1a64").get<uint64_t>());
    }
    return m;
}

/// Writes NNNNN.ppm / NNNNN.dmap pairs plus manifest.json; deterministic
/// given cfg.seed (each sample derives its own substream).
inline DatasetManifest synth_generate(const SyntheticWorldConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir))
        throw std::runtime_error("synth_generate: cannot create output directory " + out_dir);

    DatasetManifest manifest;
    manifest.config = cfg;
    for (int i = 0; i < cfg.n_samples; ++i) {
        Rng rng = Rng::substream(cfg.seed, static_cast<uint64_t>(i));
        SceneSample s = synth_scene(cfg, rng);
        char name[16];
        std::snprintf(name, sizeof(name), "%05d", i);
        const std::string ppm = std::string(name) + ".ppm";
        const std::string dmap = std::string(name) + ".dmap";
        const auto ppm_bytes = encode_ppm(s.rgb);
        const auto dmap_bytes = encode_dmap(s.depth, s.mask);
        detail_io::write_file((fs::path(out_dir) / ppm).string(), ppm_bytes);
        detail_io::write_file((fs::path(out_dir) / dmap).string(), dmap_bytes);
        manifest.ppm_names.push_back(ppm);
        manifest.dmap_names.push_back(dmap);
        manifest.ppm_hashes.push_back(fnv1a64(ppm_bytes.data(), ppm_bytes.size()));
        manifest.dmap_hashes.push_back(fnv1a64(dmap_bytes.data(), dmap_bytes.size()));
    }
    std::ofstream mf((fs::path(out_dir) / "manifest.json").string(), std::ios::trunc);
    if (!mf) throw std::runtime_error("synth_generate: cannot write manifest.json");
    mf << to_json(manifest).dump(2) << "\n";
    return manifest;
}

/// Loads every sample listed in a dataset directory's manifest.
inline std::vector<SceneSample> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf((fs::path(dir) / "manifest.json").string());
    if (!mf) throw std::runtime_error("load_dataset: missing manifest.json in " + dir);
    json j;
    mf >> j;
    DatasetManifest m = manifest_from_json(j);
    std::vector<SceneSample> out;
    out.reserve(m.ppm_names.size());
    for (size_t i = 0; i < m.ppm_names.size(); ++i)
        out.push_back(read_sample((fs::path(dir) / m.ppm_names[i]).string(),
                                  (fs::path(dir) / m.dmap_names[i]).string()));
    return out;
}

}  // namespace rccn
