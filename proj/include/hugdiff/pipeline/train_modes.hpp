// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>

#include <fmt/core.h>

#include "hugdiff/core/io.hpp"
#include "hugdiff/diffusion/checkpoint.hpp"
#include "hugdiff/pipeline/config.hpp"
#include "hugdiff/pipeline/dataset.hpp"
#include "hugdiff/proxygt/stats.hpp"

namespace hugdiff {

// ---------------------------------------------------------------------------
// Proxy ground-truth creation (stage 1 + stage 2)
// ---------------------------------------------------------------------------

struct ProxyBuildResult {
    std::vector<Stage1Result> stage1;
    std::vector<ProxyGTRecord> records; // filled when stage 2 ran
};

inline ProxyBuildResult build_proxy(const PipelineConfig& cfg,
                                    const std::vector<SceneCapture>& scenes, int stage,
                                    bool verbose = true) {
    ProxyBuildResult out;
    std::filesystem::create_directories(cfg.proxy_dir / "stage1");
    if (stage != 2) {
        for (std::size_t s = 0; s < scenes.size(); ++s) {
            const auto& scene = scenes[s];
            const Mat positions =
                sample_positions(scene.surface, cfg.n_points, cfg.seeds.master + 31 * s);
            Stage1Config sc = cfg.stage1;
            sc.sh_degree = cfg.sh_degree;
            sc.seed = cfg.seeds.master + 7 * s + 1;
            sc.log_every = std::max(1, sc.epochs / 20);
            if (verbose) fmt::print("stage 1: fitting {} ({} points)\n", scene.scene_id, cfg.n_points);
            auto result = stage1_overfit(scene, positions, sc);
            if (verbose && !result.log.entries.empty()) {
                fmt::print("  final loss {:.5f}, train psnr {:.2f} dB\n",
                           result.log.entries.back().loss, result.log.entries.back().psnr);
            }
            save_set(result.set, cfg.proxy_dir / "stage1" / (scene.scene_id + ".hgda"));
            out.stage1.push_back(std::move(result));
        }
    } else {
        // stage 2 alone: reload stage-1 results from disk
        for (const auto& scene : scenes) {
            Stage1Result r;
            r.scene_id = scene.scene_id;
            const auto path = cfg.proxy_dir / "stage1" / (scene.scene_id + ".hgda");
            if (!std::filesystem::exists(path)) {
                throw IngestError("stage 2 needs stage-1 output " + path.string());
            }
            r.set = load_set(path);
            out.stage1.push_back(std::move(r));
        }
    }
    if (stage == 1) return out;

    Stage2Config s2 = cfg.stage2;
    s2.seed = cfg.seeds.master ^ 0x2222;
    s2.log_every = std::max(1, s2.epochs / 20);
    if (verbose) fmt::print("stage 2: unifying {} scenes\n", scenes.size());
    TrainLog log2;
    out.records = stage2_unify(scenes, out.stage1, s2, &log2);
    std::filesystem::create_directories(cfg.proxy_dir / "stage2");
    std::vector<GaussianAttributeSet> s1_sets, s2_sets;
    std::vector<std::string> ids;
    for (const auto& rec : out.records) {
        save_set(rec.unified_set, cfg.proxy_dir / "stage2" / (rec.scene_id + ".hgda"));
        s1_sets.push_back(rec.stage1_set);
        s2_sets.push_back(rec.unified_set);
        ids.push_back(rec.scene_id);
    }
    if (out.records.size() >= 2) {
        nlohmann::json stats;
        stats["stage1"] = distribution_report_to_json(distribution_stats(s1_sets), ids);
        stats["stage2"] = distribution_report_to_json(distribution_stats(s2_sets), ids);
        std::ofstream f(cfg.proxy_dir / "stats.json");
        f << stats.dump(2) << "\n";
    }
    return out;
}

inline std::vector<GaussianAttributeSet> load_proxy_sets(const PipelineConfig& cfg,
                                                         const std::vector<SceneCapture>& scenes) {
    std::vector<GaussianAttributeSet> sets;
    for (const auto& scene : scenes) {
        const auto path = cfg.proxy_dir / "stage2" / (scene.scene_id + ".hgda");
        if (!std::filesystem::exists(path)) {
            throw IngestError("no proxy attributes for scene " + scene.scene_id +
                              "; run build-proxy first (" + path.string() + ")");
        }
        sets.push_back(load_set(path));
    }
    return sets;
}

// ---------------------------------------------------------------------------
// Regression model (pixel-level and attribute-level supervision modes)
// ---------------------------------------------------------------------------

// The regression path shares one backbone implementation across both
// supervision modes; only the loss differs.
struct RegressionModel {
    DiffusionModelConfig cfg; // reused for the shared dimensions
    std::unique_ptr<ImageEncoder> encoder;
    std::unique_ptr<BodySemanticEmbedder> embedder;
    std::unique_ptr<AttributeHeadNet> head;

    static RegressionModel create(const DiffusionModelConfig& cfg, const BodyPrior& prior_like) {
        RegressionModel m;
        m.cfg = cfg;
        Rng rng(cfg.init_seed);
        m.encoder = std::make_unique<ImageEncoder>(rng);
        m.embedder = std::make_unique<BodySemanticEmbedder>(prior_like, cfg.semantic, rng);
        HeadNetConfig hc;
        hc.sh_degree = cfg.sh_degree;
        hc.beta_dim = PixelAlignedFeatures::dim();
        hc.gamma_dim = m.embedder->dim();
        hc.takes_sh_input = false;
        hc.width = cfg.width;
        hc.group_seed = cfg.init_seed ^ 0x51ed;
        m.head = std::make_unique<AttributeHeadNet>(hc, rng);
        return m;
    }

    std::vector<nn::TensorRef> params() {
        std::vector<nn::TensorRef> refs;
        encoder->collect("encoder", refs);
        embedder->collect("embedder", refs);
        head->collect("head", refs);
        return refs;
    }

    RawAttributeSet forward(const ConditioningBundle& bundle) {
        const auto out = head->forward(Mat(), to_condition_inputs(bundle));
        RawAttributeSet raw;
        raw.positions = bundle.positions;
        raw.sh_degree = cfg.sh_degree;
        raw.sh_coeffs = out.sh_out;
        raw.opacities_raw = out.opacities_raw;
        raw.scales_raw = out.scales_raw;
        raw.rotations_raw = out.rotations_raw;
        return raw;
    }
};

inline void save_regression_checkpoint(RegressionModel& model,
                                       const std::filesystem::path& path,
                                       const nlohmann::json& extra = {}) {
    nlohmann::json header;
    header["model_type"] = "regression";
    header["config"] = diffusion_config_to_json(model.cfg);
    if (!extra.is_null()) header["extra"] = extra;
    save_blob_container(path, model.params(), header);
}

inline RegressionModel load_regression_checkpoint(const std::filesystem::path& path,
                                                  const BodyPrior& prior_like) {
    const auto header = read_blob_header(path);
    if (header.value("model_type", "") != "regression") {
        throw FormatError("checkpoint is not a regression model", 16);
    }
    auto model = RegressionModel::create(diffusion_config_from_json(header.at("config")),
                                         prior_like);
    auto refs = model.params();
    load_blobs_into(path, header, refs);
    return model;
}

// ---------------------------------------------------------------------------
// Training drivers
// ---------------------------------------------------------------------------

struct TrainArtifacts {
    std::filesystem::path checkpoint;
    TrainLog log;
    std::string config_hash;
    double final_loss = 0.0;
};

// Pixel-level supervision: the regression model renders through the
// rasterizer and fits the target views directly.
inline TrainArtifacts train_pixel_mode(const PipelineConfig& cfg,
                                       const std::vector<SceneCapture>& scenes,
                                       const std::vector<GaussianAttributeSet>& proxies,
                                       std::vector<ConditioningContext>& contexts,
                                       bool verbose = true) {
    DiffusionModelConfig mc;
    mc.sh_degree = cfg.sh_degree;
    mc.width = cfg.regression.width;
    mc.prior_points = static_cast<int>(scenes.front().body_prior.size());
    mc.num_parts = scenes.front().body_prior.num_parts;
    mc.init_seed = cfg.seeds.master ^ 0x9a9a;
    auto model = RegressionModel::create(mc, scenes.front().body_prior);
    auto refs = model.params();
    nn::Adam opt(cfg.regression.lr);
    Rng rng(cfg.seeds.master ^ 0x1111);

    TrainArtifacts art;
    art.config_hash = config_hash(cfg);
    const int epochs = cfg.regression.epochs;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t cursor = 0;
        while (cursor < contexts.size()) {
            nn::zero_grads(refs);
            const std::size_t end =
                std::min(contexts.size(), cursor + static_cast<std::size_t>(cfg.regression.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - cursor);
            for (; cursor < end; ++cursor) {
                auto& ctx = contexts[cursor];
                auto cond = conditioning_forward(*model.encoder, *model.embedder, ctx);
                const RawAttributeSet raw = model.forward(cond.bundle);
                const GaussianAttributeSet set = activate(raw);
                const auto& scene = scenes[cursor];
                AttributeGrads grads(set);
                double scene_loss = 0.0;
                for (std::size_t k = 0; k < scene.views.size(); ++k) {
                    const auto rendered = render(set, scene.views[k]);
                    const auto loss = photometric_loss(rendered.rgb, scene.images[k]);
                    scene_loss += loss.value;
                    const auto vg = render_gradients(set, scene.views[k], loss.d_rendered);
                    grads.opacities += vg.opacities;
                    grads.scales += vg.scales;
                    grads.rotations += vg.rotations;
                    grads.sh_coeffs += vg.sh_coeffs;
                }
                if (!std::isfinite(scene_loss)) {
                    throw TrainingDiverged("pixel-mode loss is not finite", epoch);
                }
                epoch_loss += scene_loss;
                const auto raw_grads = activate_backward(raw, set, grads.opacities, grads.scales,
                                                         grads.rotations, grads.sh_coeffs);
                const auto in_grads = model.head->backward(
                    inv_batch * raw_grads.sh_coeffs, inv_batch * raw_grads.opacities_raw,
                    inv_batch * raw_grads.scales_raw, inv_batch * raw_grads.rotations_raw);
                cond.paf.backward(*model.encoder, inv_batch * in_grads.d_beta);
                model.embedder->backward(inv_batch * in_grads.d_gamma);
            }
            opt.step(refs);
        }
        art.final_loss = epoch_loss / static_cast<double>(contexts.size());
        art.log.entries.push_back({epoch, art.final_loss, 0.0, 0.0});
        if (verbose && (epoch % std::max(1, epochs / 10) == 0 || epoch == 1)) {
            fmt::print("pixel epoch {:4d}/{} loss {:.5f}\n", epoch, epochs, art.final_loss);
        }
    }
    (void)proxies;
    std::filesystem::create_directories(cfg.output_dir);
    art.checkpoint = cfg.output_dir / "pixel.hgck";
    save_regression_checkpoint(model, art.checkpoint,
                               {{"mode", "pixel"}, {"config_hash", art.config_hash}});
    return art;
}

// Attribute-level regression: the same backbone fits the proxy attributes
// with the four-term squared error.
inline TrainArtifacts train_attr_regression_mode(const PipelineConfig& cfg,
                                                 const std::vector<SceneCapture>& scenes,
                                                 const std::vector<GaussianAttributeSet>& proxies,
                                                 std::vector<ConditioningContext>& contexts,
                                                 bool verbose = true) {
    DiffusionModelConfig mc;
    mc.sh_degree = cfg.sh_degree;
    mc.width = cfg.regression.width;
    mc.prior_points = static_cast<int>(scenes.front().body_prior.size());
    mc.num_parts = scenes.front().body_prior.num_parts;
    mc.init_seed = cfg.seeds.master ^ 0x9a9a;
    auto model = RegressionModel::create(mc, scenes.front().body_prior);
    auto refs = model.params();
    nn::Adam opt(cfg.regression.lr);

    TrainArtifacts art;
    art.config_hash = config_hash(cfg);
    const int epochs = cfg.regression.epochs;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t cursor = 0;
        while (cursor < contexts.size()) {
            nn::zero_grads(refs);
            const std::size_t end =
                std::min(contexts.size(), cursor + static_cast<std::size_t>(cfg.regression.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - cursor);
            for (; cursor < end; ++cursor) {
                auto& ctx = contexts[cursor];
                const auto& proxy = proxies[cursor];
                auto cond = conditioning_forward(*model.encoder, *model.embedder, ctx);
                const RawAttributeSet raw = model.forward(cond.bundle);
                const GaussianAttributeSet set = activate(raw);
                const Eigen::Index n = set.size();

                Mat q_target = proxy.rotations;
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (set.rotations.row(i).dot(q_target.row(i)) < 0.0) q_target.row(i) *= -1.0;
                }
                const Mat d_sh = set.sh_coeffs - proxy.sh_coeffs;
                const Vec d_op = set.opacities - proxy.opacities;
                const Mat d_sc = set.scales - proxy.scales;
                const Mat d_q = set.rotations - q_target;
                const double loss = d_sh.squaredNorm() / d_sh.size() +
                                    d_op.squaredNorm() / n + d_sc.squaredNorm() / d_sc.size() +
                                    d_q.squaredNorm() / d_q.size();
                if (!std::isfinite(loss)) {
                    throw TrainingDiverged("attribute regression loss is not finite", epoch);
                }
                epoch_loss += loss;
                const auto raw_grads = activate_backward(
                    raw, set, (2.0 / n) * d_op, (2.0 / d_sc.size()) * d_sc,
                    (2.0 / d_q.size()) * d_q, (2.0 / d_sh.size()) * d_sh);
                const auto in_grads = model.head->backward(
                    inv_batch * raw_grads.sh_coeffs, inv_batch * raw_grads.opacities_raw,
                    inv_batch * raw_grads.scales_raw, inv_batch * raw_grads.rotations_raw);
                cond.paf.backward(*model.encoder, inv_batch * in_grads.d_beta);
                model.embedder->backward(inv_batch * in_grads.d_gamma);
            }
            opt.step(refs);
        }
        art.final_loss = epoch_loss / static_cast<double>(contexts.size());
        art.log.entries.push_back({epoch, art.final_loss, 0.0, 0.0});
        if (verbose && (epoch % std::max(1, epochs / 10) == 0 || epoch == 1)) {
            fmt::print("attr-reg epoch {:4d}/{} loss {:.5f}\n", epoch, epochs, art.final_loss);
        }
    }
    std::filesystem::create_directories(cfg.output_dir);
    art.checkpoint = cfg.output_dir / "attr-reg.hgck";
    save_regression_checkpoint(model, art.checkpoint,
                               {{"mode", "attr-reg"}, {"config_hash", art.config_hash}});
    return art;
}

// Attribute-level diffusion: SH noise prediction then the extra step.
inline TrainArtifacts train_attr_diffusion_mode(const PipelineConfig& cfg,
                                                const std::vector<SceneCapture>& scenes,
                                                const std::vector<GaussianAttributeSet>& proxies,
                                                std::vector<ConditioningContext>& contexts,
                                                bool verbose = true) {
    DiffusionModelConfig mc;
    mc.sh_degree = cfg.sh_degree;
    mc.width = cfg.diffusion.width;
    mc.prior_points = static_cast<int>(scenes.front().body_prior.size());
    mc.num_parts = scenes.front().body_prior.num_parts;
    mc.timesteps = cfg.diffusion.timesteps;
    mc.beta_start = cfg.diffusion.beta_start;
    mc.beta_end = cfg.diffusion.beta_end;
    mc.schedule_kind =
        cfg.diffusion.schedule == "cosine" ? ScheduleKind::Cosine : ScheduleKind::Linear;
    mc.clip_c0 = cfg.diffusion.clip_c0;
    mc.init_seed = cfg.seeds.master ^ 0x9a9a;
    auto model = GsDiffusionModel::create(mc, scenes.front().body_prior);

    std::vector<const ConditioningContext*> all;
    for (auto& ctx : contexts) all.push_back(&ctx);

    TrainArtifacts art;
    art.config_hash = config_hash(cfg);
    Rng rng(cfg.seeds.master ^ 0x1111);

    // phase 1: SH noise prediction
    {
        auto refs = model.sh_phase_params();
        nn::Adam opt(cfg.diffusion.lr);
        const int epochs = cfg.diffusion.epochs;
        for (int epoch = 1; epoch <= epochs; ++epoch) {
            double loss = 0.0;
            int batches = 0;
            std::size_t cursor = 0;
            while (cursor < all.size()) {
                const std::size_t end =
                    std::min(all.size(), cursor + static_cast<std::size_t>(cfg.diffusion.batch_size));
                std::vector<const ConditioningContext*> batch(all.begin() + static_cast<long>(cursor),
                                                              all.begin() + static_cast<long>(end));
                loss += train_step_sh(model, batch, refs, opt, rng);
                ++batches;
                cursor = end;
            }
            loss /= std::max(1, batches);
            if (!std::isfinite(loss)) throw TrainingDiverged("sh diffusion loss is not finite", epoch);
            art.log.entries.push_back({epoch, loss, 0.0, 0.0});
            if (verbose && (epoch % std::max(1, epochs / 10) == 0 || epoch == 1)) {
                fmt::print("diffusion(sh) epoch {:4d}/{} loss {:.5f}\n", epoch, epochs, loss);
            }
        }
    }
    // phase 2: extra step
    {
        auto refs = model.extra_phase_params();
        nn::Adam opt(cfg.diffusion.lr);
        ExtraStepPolicy policy;
        policy.gt_probability = cfg.diffusion.gt_probability;
        policy.gt_noise_sigma = cfg.diffusion.gt_noise_sigma;
        policy.refresh_every = cfg.diffusion.refresh_every;
        policy.sample_seed = cfg.seeds.sampling;
        FrozenSampleCache cache;
        const int epochs = cfg.diffusion.epochs;
        for (int epoch = 1; epoch <= epochs; ++epoch) {
            double loss = 0.0;
            int batches = 0;
            std::size_t cursor = 0;
            while (cursor < all.size()) {
                const std::size_t end =
                    std::min(all.size(), cursor + static_cast<std::size_t>(cfg.diffusion.batch_size));
                std::vector<const ConditioningContext*> batch(all.begin() + static_cast<long>(cursor),
                                                              all.begin() + static_cast<long>(end));
                loss += train_extra_step(model, batch, refs, opt, policy, rng, &cache).total;
                ++batches;
                cursor = end;
            }
            loss /= std::max(1, batches);
            if (!std::isfinite(loss)) throw TrainingDiverged("extra step loss is not finite", epoch);
            art.final_loss = loss;
            art.log.entries.push_back({epoch, loss, 0.0, 1.0});
            if (verbose && (epoch % std::max(1, epochs / 10) == 0 || epoch == 1)) {
                fmt::print("diffusion(extra) epoch {:4d}/{} loss {:.5f}\n", epoch, epochs, loss);
            }
        }
    }
    (void)proxies;
    std::filesystem::create_directories(cfg.output_dir);
    art.checkpoint = cfg.output_dir / "attr-diff.hgck";
    save_checkpoint(model, scenes.front().body_prior, art.checkpoint,
                    {{"mode", "attr-diff"}, {"config_hash", art.config_hash}});
    return art;
}

// Entry point shared by the CLI: loads scenes + proxies, prepares the
// conditioning contexts, dispatches on the configured mode, writes the
// checkpoint and the training log.
inline TrainArtifacts run_training(const PipelineConfig& cfg, bool verbose = true) {
    const auto scenes = ingest_dataset(cfg.dataset_root, cfg.scenes);
    if (scenes.empty()) throw IngestError("dataset has no scenes");
    const auto proxies = load_proxy_sets(cfg, scenes);

    std::vector<std::unique_ptr<GroundTruthBackViewProvider>> providers;
    std::vector<ConditioningContext> contexts;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        providers.push_back(std::make_unique<GroundTruthBackViewProvider>(
            scenes[s].surface, 3000, cfg.seeds.master ^ 0xbac0));
        contexts.push_back(make_conditioning_context(scenes[s], proxies[s], providers[s].get(),
                                                     cfg.input_view));
    }

    TrainArtifacts art;
    switch (cfg.training_mode) {
        case TrainingMode::Pixel:
            art = train_pixel_mode(cfg, scenes, proxies, contexts, verbose);
            break;
        case TrainingMode::AttributeRegression:
            art = train_attr_regression_mode(cfg, scenes, proxies, contexts, verbose);
            break;
        case TrainingMode::AttributeDiffusion:
            art = train_attr_diffusion_mode(cfg, scenes, proxies, contexts, verbose);
            break;
    }

    nlohmann::json log;
    log["config_hash"] = art.config_hash;
    log["mode"] = training_mode_to_string(cfg.training_mode);
    log["final_loss"] = art.final_loss;
    log["entries"] = nlohmann::json::array();
    for (const auto& e : art.log.entries) {
        log["entries"].push_back({{"epoch", e.epoch}, {"loss", e.loss}});
    }
    std::ofstream f(cfg.output_dir /
                    (training_mode_to_string(cfg.training_mode) + std::string("_log.json")));
    f << log.dump(2) << "\n";
    return art;
}

} // namespace hugdiff
