// SPDX-License-Identifier: Apache-2.0
//
// hugdiff: desk-scale splat-attribute generation pipeline.
//
// Subcommands: build-proxy, train, infer, render, eval, stats, make-toy.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 training divergence.

#include <CLI11.hpp>
#include <fmt/core.h>

#include "hugdiff/core/io.hpp"
#include "hugdiff/diffusion/checkpoint.hpp"
#include "hugdiff/pipeline/config.hpp"
#include "hugdiff/pipeline/dataset.hpp"
#include "hugdiff/pipeline/eval.hpp"
#include "hugdiff/pipeline/train_modes.hpp"

using namespace hugdiff;

namespace {

PipelineConfig config_for_dataset(const std::string& config_path, const std::string& dataset,
                                  std::uint64_t seed) {
    if (!config_path.empty()) {
        auto cfg = load_config(config_path);
        if (!dataset.empty()) {
            cfg.dataset_root = dataset;
            cfg.proxy_dir = cfg.dataset_root / "proxy";
            cfg.output_dir = cfg.dataset_root / "runs";
        }
        return cfg;
    }
    if (dataset.empty()) throw ConfigError("either --config or --dataset is required");
    nlohmann::json j = {{"dataset_root", dataset}, {"seeds", {{"master", seed}}}};
    return parse_config(j);
}

int dispatch(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return 2;
    } catch (const TrainingDiverged& e) {
        fmt::print(stderr, "training diverged: {}\n", e.what());
        return 4;
    } catch (const SamplingDiverged& e) {
        fmt::print(stderr, "sampling diverged: {}\n", e.what());
        return 4;
    } catch (const Error& e) {
        fmt::print(stderr, "data error: {}\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"splat-attribute generation pipeline"};
    app.require_subcommand(1);

    // ---- build-proxy ----
    std::string bp_config, bp_stage = "all";
    auto* bp = app.add_subcommand("build-proxy", "create proxy attribute sets (stage 1 and 2)");
    bp->add_option("--config", bp_config, "pipeline config json")->required();
    bp->add_option("--stage", bp_stage, "1, 2 or all")->check(CLI::IsMember({"1", "2", "all"}));

    // ---- train ----
    std::string tr_config, tr_mode;
    auto* tr = app.add_subcommand("train", "train a generation model");
    tr->add_option("--config", tr_config, "pipeline config json")->required();
    tr->add_option("--mode", tr_mode, "pixel, attr-reg or attr-diff")
        ->check(CLI::IsMember({"pixel", "attr-reg", "attr-diff"}));

    // ---- infer ----
    std::string in_image, in_camera, in_out, in_ckpt, in_depth, in_prior, in_back, in_surface,
        in_ply;
    int in_points = 2000, in_view = 0;
    std::uint64_t in_seed = 99;
    auto* inf = app.add_subcommand("infer", "single-image attribute-set generation");
    inf->add_option("--image", in_image, "input view png")->required();
    inf->add_option("--camera", in_camera, "camera json (object or array)")->required();
    inf->add_option("--out", in_out, "output .hgda path")->required();
    inf->add_option("--ckpt", in_ckpt, "diffusion checkpoint")->required();
    inf->add_option("--prior", in_prior, "body_prior.json")->required();
    inf->add_option("--depth", in_depth, "depth map (.png 16-bit mm or .f32)");
    inf->add_option("--back-image", in_back, "occluded-side image png");
    inf->add_option("--surface", in_surface, "surface (obj/ply) for the back-view render");
    inf->add_option("--points", in_points, "number of generated positions");
    inf->add_option("--view", in_view, "camera index when --camera holds an array");
    inf->add_option("--seed", in_seed, "sampling seed");
    inf->add_option("--ply", in_ply, "also export a viewer ply");

    // ---- render ----
    std::string re_set, re_camera, re_out;
    int re_view = 0;
    auto* re = app.add_subcommand("render", "render an attribute set to png");
    re->add_option("--set", re_set, "input .hgda")->required();
    re->add_option("--camera", re_camera, "camera json (object or array)")->required();
    re->add_option("--out", re_out, "output png")->required();
    re->add_option("--view", re_view, "camera index when --camera holds an array");

    // ---- eval ----
    std::string ev_ckpt, ev_dataset, ev_config, ev_out;
    int ev_input_view = 0;
    bool ev_oracle = false;
    std::uint64_t ev_seed = 0;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint over a dataset");
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path");
    ev->add_option("--dataset", ev_dataset, "dataset root");
    ev->add_option("--config", ev_config, "pipeline config json");
    ev->add_option("--out", ev_out, "report json path");
    ev->add_option("--input-view", ev_input_view, "conditioning view index");
    ev->add_flag("--proxy-oracle", ev_oracle, "score the proxy sets directly");
    ev->add_option("--seed", ev_seed, "seed when no config is given");

    // ---- stats ----
    std::vector<std::string> st_sets;
    std::string st_out, st_hist;
    auto* st = app.add_subcommand("stats", "distribution statistics over attribute sets");
    st->add_option("--sets", st_sets, "two or more .hgda files")->required()->expected(-2);
    st->add_option("--out", st_out, "stats json path");
    st->add_option("--hist", st_hist, "histogram csv stem");

    // ---- make-toy ----
    std::string mt_out;
    int mt_scenes = 4, mt_res = 64, mt_views = 8, mt_dense = 3000, mt_prior = 300;
    std::uint64_t mt_seed = 7;
    auto* mt = app.add_subcommand("make-toy", "synthesize a toy dataset");
    mt->add_option("--out", mt_out, "dataset root to create")->required();
    mt->add_option("--scenes", mt_scenes, "number of subjects");
    mt->add_option("--res", mt_res, "image resolution");
    mt->add_option("--views", mt_views, "cameras per subject");
    mt->add_option("--dense", mt_dense, "dense surface samples for target renders");
    mt->add_option("--prior", mt_prior, "body prior point count");
    mt->add_option("--seed", mt_seed, "generation seed");

    CLI11_PARSE(app, argc, argv);

    if (bp->parsed()) {
        return dispatch([&] {
            const auto cfg = load_config(bp_config);
            fmt::print("config {}\n", config_hash(cfg));
            const auto scenes = ingest_dataset(cfg.dataset_root, cfg.scenes);
            const int stage = bp_stage == "1" ? 1 : (bp_stage == "2" ? 2 : 0);
            build_proxy(cfg, scenes, stage);
            fmt::print("proxy sets written under {}\n", cfg.proxy_dir.string());
        });
    }

    if (tr->parsed()) {
        return dispatch([&] {
            auto cfg = load_config(tr_config);
            if (!tr_mode.empty()) cfg.training_mode = training_mode_from_string(tr_mode);
            fmt::print("config {}\n", config_hash(cfg));
            const auto art = run_training(cfg);
            fmt::print("checkpoint {}\nfinal loss {:.6f}\n", art.checkpoint.string(),
                       art.final_loss);
        });
    }

    if (inf->parsed()) {
        return dispatch([&] {
            const auto cams = load_cameras(in_camera);
            if (in_view < 0 || in_view >= static_cast<int>(cams.size())) {
                throw IngestError("camera index out of range");
            }
            const auto prior = load_body_prior(in_prior);
            auto loaded = load_checkpoint(in_ckpt, prior);

            InferenceInputs inputs;
            inputs.image = read_png(in_image);
            inputs.camera = cams[static_cast<std::size_t>(in_view)];
            inputs.prior = &prior;
            inputs.n_points = in_points;
            inputs.seed = in_seed;
            if (!in_depth.empty()) inputs.depth = read_depth(in_depth);

            std::unique_ptr<BackViewProvider> provider;
            if (!in_back.empty()) {
                provider = std::make_unique<FixedBackViewProvider>(read_png(in_back));
            } else if (!in_surface.empty()) {
                provider = std::make_unique<GroundTruthBackViewProvider>(load_surface(in_surface),
                                                                         3000, in_seed ^ 0xbac0);
            }
            inputs.back_provider = provider.get();

            const auto set = infer_full(loaded.model, inputs);
            save_set(set, in_out);
            if (!in_ply.empty()) export_ply(set, in_ply);
            fmt::print("wrote {} ({} primitives)\n", in_out, set.size());
        });
    }

    if (re->parsed()) {
        return dispatch([&] {
            const auto set = load_set(re_set);
            const auto cams = load_cameras(re_camera);
            if (re_view < 0 || re_view >= static_cast<int>(cams.size())) {
                throw IngestError("camera index out of range");
            }
            const auto img = render(set, cams[static_cast<std::size_t>(re_view)]);
            write_png(img.rgb, re_out);
            fmt::print("wrote {}\n", re_out);
        });
    }

    if (ev->parsed()) {
        return dispatch([&] {
            const auto cfg = config_for_dataset(ev_config, ev_dataset, ev_seed);
            if (!ev_oracle && ev_ckpt.empty()) {
                throw ConfigError("eval needs --ckpt unless --proxy-oracle is set");
            }
            EvalOptions opts;
            opts.input_view = ev_input_view;
            opts.use_proxy_oracle = ev_oracle;
            opts.sampling_seed = cfg.seeds.sampling;
            const auto report = run_eval(ev_ckpt, cfg, opts);
            print_eval_table(report);
            for (const auto& w : report.warnings) fmt::print("warning: {}\n", w);
            if (!ev_out.empty()) {
                std::ofstream f(ev_out);
                f << eval_report_to_json(report).dump(2) << "\n";
                fmt::print("report written to {}\n", ev_out);
            }
        });
    }

    if (st->parsed()) {
        return dispatch([&] {
            std::vector<GaussianAttributeSet> sets;
            std::vector<std::string> names;
            for (const auto& path : st_sets) {
                sets.push_back(load_set(path));
                names.push_back(std::filesystem::path(path).stem().string());
            }
            const auto report = distribution_stats(sets);
            const auto j = distribution_report_to_json(report, names);
            if (!st_out.empty()) {
                std::ofstream f(st_out);
                f << j.dump(2) << "\n";
                fmt::print("stats written to {}\n", st_out);
            } else {
                fmt::print("{}\n", j.dump(2));
            }
            if (!st_hist.empty()) {
                write_histograms(sets, st_hist);
                fmt::print("histograms written to {}_*.csv\n", st_hist);
            }
        });
    }

    if (mt->parsed()) {
        return dispatch([&] {
            ToyDatasetOptions opts;
            opts.scenes = mt_scenes;
            opts.scene.resolution = mt_res;
            opts.scene.n_views = mt_views;
            opts.scene.dense_points = mt_dense;
            opts.scene.prior_points = mt_prior;
            opts.scene.seed = mt_seed;
            const auto ids = write_toy_dataset(mt_out, opts);
            fmt::print("wrote {} scenes under {}\n", ids.size(), mt_out);
        });
    }

    return 0;
}
