// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <variant>

#include <fmt/core.h>

#include "hugdiff/pipeline/metrics.hpp"
#include "hugdiff/pipeline/train_modes.hpp"

namespace hugdiff {

struct EvalOptions {
    int input_view = 0;
    bool use_proxy_oracle = false; // score the proxy sets on their train views
    std::uint64_t sampling_seed = 99;
    bool verbose = true;
};

// Evaluates a checkpoint over a dataset: per scene, condition on the input
// view, synthesize the attribute set, render the held-out views and score
// them against the captured images.
inline EvalReport run_eval(const std::filesystem::path& checkpoint_path,
                           const PipelineConfig& cfg, const EvalOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const auto scenes = ingest_dataset(cfg.dataset_root, cfg.scenes);
    if (scenes.empty()) throw IngestError("dataset has no scenes");
    const auto proxies = load_proxy_sets(cfg, scenes);

    EvalReport report;
    report.config_hash = config_hash(cfg);

    std::variant<std::monostate, LoadedCheckpoint, RegressionModel> model;
    std::string model_type = "proxy";
    if (!opts.use_proxy_oracle) {
        const auto header = read_blob_header(checkpoint_path);
        model_type = header.value("model_type", "diffusion");
        if (model_type == "diffusion") {
            model = load_checkpoint(checkpoint_path, scenes.front().body_prior);
        } else {
            model = load_regression_checkpoint(checkpoint_path, scenes.front().body_prior);
        }
    }

    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const auto& scene = scenes[s];
        if (opts.input_view < 0 || opts.input_view >= static_cast<int>(scene.views.size())) {
            report.warnings.push_back("scene " + scene.scene_id + ": input view " +
                                      std::to_string(opts.input_view) + " missing, skipped");
            continue;
        }
        GaussianAttributeSet predicted;
        if (opts.use_proxy_oracle) {
            predicted = proxies[s];
        } else {
            GroundTruthBackViewProvider provider(scene.surface, 3000, cfg.seeds.master ^ 0xbac0);
            auto ctx = make_conditioning_context(scene, proxies[s], &provider, opts.input_view);
            if (cfg.positions_mode == "depth") {
                const Image depth =
                    render_groundtruth_depth(scene.surface, ctx.front_view, 12000, 3, 0);
                PositionGenOptions pg;
                pg.n = static_cast<int>(proxies[s].size());
                pg.seed = opts.sampling_seed ^ (7919 * s);
                ctx.positions = generate_positions(ctx.front_view, depth, scene.body_prior, pg);
                ctx.visibility = partition_visibility(ctx.positions, ctx.front_view);
            }
            if (auto* diff = std::get_if<LoadedCheckpoint>(&model)) {
                auto cond = conditioning_forward(diff->model, ctx);
                const Mat c0 = sample_sh(diff->model, cond.bundle,
                                         opts.sampling_seed + 131 * s);
                predicted = extra_step(diff->model, c0, cond.bundle);
            } else {
                auto& reg = std::get<RegressionModel>(model);
                auto cond = conditioning_forward(*reg.encoder, *reg.embedder, ctx);
                predicted = activate(reg.forward(cond.bundle));
            }
        }
        predicted.validate();

        for (std::size_t k = 0; k < scene.views.size(); ++k) {
            const bool held_out = static_cast<int>(k) != opts.input_view;
            if (!opts.use_proxy_oracle && !held_out) continue;
            const auto rendered = render(predicted, scene.views[k]);
            EvalRow row;
            row.scene_id = scene.scene_id;
            row.view = static_cast<int>(k);
            row.psnr_db = psnr(rendered.rgb, scene.images[k]);
            row.ssim_val = ssim(rendered.rgb, scene.images[k]);
            report.rows.push_back(row);
        }
        if (opts.verbose) {
            fmt::print("evaluated {} ({} views)\n", scene.scene_id, scene.views.size());
        }
    }
    report.finalize();
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

inline void print_eval_table(const EvalReport& report) {
    fmt::print("{:<12} {:>5} {:>10} {:>8}\n", "scene", "view", "psnr(db)", "ssim");
    for (const auto& r : report.rows) {
        fmt::print("{:<12} {:>5} {:>10.3f} {:>8.4f}\n", r.scene_id, r.view, r.psnr_db, r.ssim_val);
    }
    fmt::print("{:<12} {:>5} {:>10.3f} {:>8.4f}   ({} rows, {:.1f}s, config {})\n", "mean", "-",
               report.psnr_mean, report.ssim_mean, report.rows.size(), report.runtime_seconds,
               report.config_hash);
}

} // namespace hugdiff
