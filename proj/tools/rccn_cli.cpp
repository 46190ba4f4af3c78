// Command-line front end: dataset synthesis, training, evaluation,
// prediction, gradient checking, and the variant ablation harness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rccn/model_io.hpp"
#include "rccn/trainer.hpp"
#include "rccn/verify.hpp"

namespace fs = std::filesystem;
using rccn::json;

namespace {

rccn::ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config " + path);
    json j;
    f >> j;
    return rccn::experiment_from_json(j);
}

void write_json(const std::string& path, const json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
    std::vector<uint64_t> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stoull(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("empty seed list");
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"depth estimation trainer"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_dir, heldout_dir, model_path, input_path, viz_path;
    std::string checkpoint_dir, curve_path, result_path, seeds_csv = "1,2,3,4,5";
    std::optional<uint64_t> seed;
    double target_rmse_log = 0.0, cap_min = 0.0, cap_max = 0.0, threshold = 1e-4;
    long check_every = 0;
    bool center_crop = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", config_path, "experiment config JSON")->required();
    synth->add_option("--seed", seed, "override the world seed");
    synth->add_option("--out", out_path, "output dataset directory")->required();

    auto* train_cmd = app.add_subcommand("train", "run the staged training protocol");
    train_cmd->add_option("--config", config_path)->required();
    train_cmd->add_option("--seed", seed, "override train seed and parameter init seed");
    train_cmd->add_option("--data", data_dir, "dataset directory")->required();
    train_cmd->add_option("--out", out_path, "trained model file")->required();
    train_cmd->add_option("--checkpoints", checkpoint_dir, "per-stage checkpoint directory");
    train_cmd->add_option("--curve", curve_path, "loss-curve CSV path");
    train_cmd->add_option("--result", result_path, "ExperimentResult JSON path");
    train_cmd->add_option("--target-rmse-log", target_rmse_log,
                          "end a stage early at this head RMSE_log");
    train_cmd->add_option("--check-every", check_every, "early-stop check cadence");

    auto* eval_cmd = app.add_subcommand("eval", "per-head metrics on a dataset");
    eval_cmd->add_option("--model", model_path)->required();
    eval_cmd->add_option("--data", data_dir)->required();
    eval_cmd->add_option("--out", out_path, "write the report JSON here (default stdout)");
    eval_cmd->add_flag("--center-crop", center_crop, "center-crop larger scenes to fit");
    eval_cmd->add_option("--cap-min", cap_min, "clamp depths to [cap-min, cap-max]");
    eval_cmd->add_option("--cap-max", cap_max);

    auto* predict_cmd = app.add_subcommand("predict", "full-resolution depth from a PPM");
    predict_cmd->add_option("--model", model_path)->required();
    predict_cmd->add_option("--in", input_path, "input PPM")->required();
    predict_cmd->add_option("--out", out_path, "output DMAP")->required();
    predict_cmd->add_option("--viz", viz_path, "optional false-color PPM");

    auto* gc_cmd = app.add_subcommand("gradcheck", "verify gradients on a tiny network");
    gc_cmd->add_option("--seed", seed);
    gc_cmd->add_option("--threshold", threshold, "pass threshold on max rel error");

    auto* ablate_cmd = app.add_subcommand("ablate", "train all five variants");
    ablate_cmd->add_option("--config", config_path)->required();
    ablate_cmd->add_option("--data", data_dir, "training dataset directory")->required();
    ablate_cmd->add_option("--heldout", heldout_dir, "held-out dataset directory");
    ablate_cmd->add_option("--seeds", seeds_csv, "comma-separated seed list");
    ablate_cmd->add_option("--out", out_path, "output directory")->required();
    ablate_cmd->add_option("--target-rmse-log", target_rmse_log);
    ablate_cmd->add_option("--check-every", check_every);

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        auto cfg = load_config(config_path);
        if (seed) cfg.world.seed = *seed;
        rccn::synth_generate(cfg.world, out_path);
        std::printf("wrote %d samples to %s\n", cfg.world.n_samples, out_path.c_str());
        return 0;
    }

    if (train_cmd->parsed()) {
        auto cfg = load_config(config_path);
        if (seed) cfg.train.seed = *seed;
        auto data = rccn::load_dataset(data_dir);
        rccn::Model model = rccn::Model::build(cfg.network, cfg.scheme, cfg.train.seed);
        rccn::TrainOptions opt;
        opt.checkpoint_dir = checkpoint_dir;
        opt.target_rmse_log = target_rmse_log;
        opt.check_every = check_every;
        rccn::TrainResult tr = rccn::train(model, data, cfg, opt);
        rccn::save_model(model, out_path);
        if (!curve_path.empty()) rccn::write_curve_csv(curve_path, tr.curve);
        if (!result_path.empty()) {
            rccn::RunResult run;
            run.variant = rccn::variant_name(cfg.network.variant);
            run.seed = cfg.train.seed;
            run.curve = tr.curve;
            run.diverged = tr.diverged;
            run.wall_seconds = tr.wall_seconds;
            rccn::EvalOptions eo;
            eo.center_crop = true;
            run.train_eval = rccn::evaluate(model, data, eo);
            write_json(result_path, rccn::to_json(rccn::ExperimentResult{{run}}));
        }
        std::printf("trained %ld iters in %.1f s%s%s\n", tr.iters_done, tr.wall_seconds,
                    tr.diverged ? " (diverged, last good checkpoint kept)" : "",
                    tr.early_stopped ? " (early stop)" : "");
        return tr.diverged ? 2 : 0;
    }

    if (eval_cmd->parsed()) {
        rccn::Model model = rccn::load_model(model_path);
        auto data = rccn::load_dataset(data_dir);
        rccn::EvalOptions opt;
        opt.center_crop = center_crop;
        if (cap_max > 0) opt.cap = {cap_min, cap_max};
        json report = rccn::to_json(rccn::evaluate(model, data, opt));
        if (out_path.empty())
            std::cout << report.dump(2) << "\n";
        else
            write_json(out_path, report);
        return 0;
    }

    if (predict_cmd->parsed()) {
        rccn::Model model = rccn::load_model(model_path);
        rccn::Tensor rgb = rccn::read_ppm(input_path);
        rccn::Tensor depth = model.predict(rgb);
        std::vector<uint8_t> mask(depth.data.size(), 1);
        rccn::write_dmap(out_path, depth, mask);
        if (!viz_path.empty())
            rccn::write_ppm(viz_path, rccn::depth_to_falsecolor(depth, mask, model.scheme.a,
                                                                model.scheme.b));
        return 0;
    }

    if (gc_cmd->parsed()) {
        rccn::GradCheckReport r = rccn::gradcheck_joint(seed.value_or(7));
        std::printf("max rel error: %.3e\n", r.max_rel_error);
        if (r.failed) {
            std::fprintf(stderr, "gradcheck failed: %s\n", r.failure_location.c_str());
            return 2;
        }
        return r.ok(threshold) ? 0 : 1;
    }

    if (ablate_cmd->parsed()) {
        auto cfg = load_config(config_path);
        auto train_scenes = rccn::load_dataset(data_dir);
        std::vector<rccn::SceneSample> heldout;
        if (!heldout_dir.empty()) heldout = rccn::load_dataset(heldout_dir);
        fs::create_directories(out_path);
        rccn::TrainOptions opt;
        opt.target_rmse_log = target_rmse_log;
        opt.check_every = check_every;
        auto on_run = [&](const rccn::RunResult& run) {
            rccn::write_curve_csv((fs::path(out_path) / (run.variant + "-seed" +
                                                         std::to_string(run.seed) + ".csv"))
                                      .string(),
                                  run.curve);
            std::printf("%s seed %llu: train d1 rmse_log %.4f (%.1f s)\n", run.variant.c_str(),
                        static_cast<unsigned long long>(run.seed),
                        run.train_eval.d1.mean.rmse_log, run.wall_seconds);
            std::fflush(stdout);
        };
        rccn::ExperimentResult result =
            rccn::ablate(cfg, train_scenes, heldout, parse_seeds(seeds_csv), opt, on_run);
        write_json((fs::path(out_path) / "result.json").string(), rccn::to_json(result));
        const std::string table = rccn::ablation_table(result);
        std::ofstream tf((fs::path(out_path) / "table.txt").string(), std::ios::trunc);
        tf << table;
        std::cout << table;
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
