// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hugdiff/nets/setnet.hpp"
#include "hugdiff/proxygt/constraints.hpp"
#include "hugdiff/proxygt/scene.hpp"
#include "hugdiff/render/loss.hpp"
#include "hugdiff/render/rasterize.hpp"

namespace hugdiff {

struct TrainLogEntry {
    int epoch = 0;
    double loss = 0.0;
    double psnr = 0.0;
    double aux = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;

    double final_psnr() const { return entries.empty() ? 0.0 : entries.back().psnr; }
    double final_loss() const { return entries.empty() ? 0.0 : entries.back().loss; }
};

struct Stage1Config {
    double lr = 2e-4;      // Adam step size
    int epochs = 4000;     // per-subject budget
    double w_aux = 0.01;   // weight on the scale/opacity constraint
    int knn_k = 4;         // neighbor count for kdist
    int width = 64;
    int sh_degree = 1;
    std::uint64_t seed = 1;
    std::uint64_t group_seed = 0; // 0: derive from seed
    int pe_freqs = 6;
    double vanilla_init_sigma = 1.0; // free-variable init scale (vanilla mode)
    int log_every = 1;

    std::uint64_t effective_group_seed() const { return group_seed ? group_seed : seed; }
};

struct Stage1Result {
    std::string scene_id;
    GaussianAttributeSet set;
    TrainLog log;
};

namespace detail {

// One optimization epoch shared by the network-parameterized and the
// free-variable fitting paths: renders every view, scores the photometric
// loss plus the weighted auxiliary constraint, and returns attribute-level
// gradients.
struct EpochResult {
    double loss = 0.0;
    double psnr = 0.0;
    double aux = 0.0;
};

inline EpochResult scene_epoch(const SceneCapture& scene, const GaussianAttributeSet& set,
                               const Vec& kd, double w_aux, AttributeGrads& grads) {
    EpochResult out;
    double mse_acc = 0.0;
    for (std::size_t k = 0; k < scene.views.size(); ++k) {
        const auto& cam = scene.views[k];
        const auto rendered = render(set, cam);
        const auto loss = photometric_loss(rendered.rgb, scene.images[k]);
        out.loss += loss.value;
        mse_acc += mse(rendered.rgb, scene.images[k]);
        const auto view_grads = render_gradients(set, cam, loss.d_rendered);
        grads.positions += view_grads.positions;
        grads.opacities += view_grads.opacities;
        grads.scales += view_grads.scales;
        grads.rotations += view_grads.rotations;
        grads.sh_coeffs += view_grads.sh_coeffs;
    }
    const auto aux = aux_constraint_loss(set.scales, set.opacities, kd);
    out.aux = aux.value;
    out.loss += w_aux * aux.value;
    grads.scales += w_aux * aux.d_scales;
    grads.opacities += w_aux * aux.d_opacities;
    const double m = mse_acc / static_cast<double>(scene.views.size());
    out.psnr = m <= 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / m);
    return out;
}

} // namespace detail

// Stage 1: overfits a fresh set network on one scene with fixed positions.
inline Stage1Result stage1_overfit(const SceneCapture& scene, const Mat& positions,
                                   const Stage1Config& cfg) {
    scene.validate();
    Rng rng(cfg.seed);
    SetNetworkConfig net_cfg;
    net_cfg.sh_degree = cfg.sh_degree;
    net_cfg.width = cfg.width;
    net_cfg.knn_k = cfg.knn_k;
    net_cfg.group_seed = cfg.effective_group_seed();
    net_cfg.pe_freqs = cfg.pe_freqs;
    SetNetwork net(net_cfg, rng);
    const Vec kd = kdist(positions, cfg.knn_k);
    net.set_scale_bias(kd.mean());

    auto refs = net.params();
    nn::Adam opt(cfg.lr);
    Stage1Result result;
    result.scene_id = scene.scene_id;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        nn::zero_grads(refs);
        const RawAttributeSet raw = net.forward(positions);
        const GaussianAttributeSet set = activate(raw);
        AttributeGrads grads(set);
        const auto stats = detail::scene_epoch(scene, set, kd, cfg.w_aux, grads);
        if (!std::isfinite(stats.loss)) {
            throw TrainingDiverged("stage 1 loss is not finite", epoch);
        }
        const auto raw_grads = activate_backward(raw, set, grads.opacities, grads.scales,
                                                 grads.rotations, grads.sh_coeffs);
        net.backward(raw_grads);
        opt.step(refs);
        if (epoch % cfg.log_every == 0 || epoch == cfg.epochs) {
            result.log.entries.push_back({epoch, stats.loss, stats.psnr, stats.aux});
        }
    }
    // report the attributes produced by the final parameters
    result.set = activate(net.forward(positions));
    return result;
}

// Free-variable fitting with the same renderer and objective: the
// attributes themselves are the optimization variables. This is the
// "vanilla" mode of the seed-variance experiment.
inline Stage1Result stage1_overfit_vanilla(const SceneCapture& scene, const Mat& positions,
                                           const Stage1Config& cfg) {
    scene.validate();
    Rng rng(cfg.seed);
    const Eigen::Index n = positions.rows();
    const int d = sh_dim(cfg.sh_degree);

    RawAttributeSet raw;
    raw.positions = positions;
    raw.sh_degree = cfg.sh_degree;
    raw.opacities_raw.resize(n);
    raw.scales_raw.resize(n, 3);
    raw.rotations_raw.resize(n, 4);
    raw.sh_coeffs.resize(n, d);
    const Vec kd = kdist(positions, cfg.knn_k);
    const double sig = cfg.vanilla_init_sigma;
    for (Eigen::Index i = 0; i < n; ++i) {
        raw.opacities_raw[i] = 2.0 + 0.5 * sig * rng.normal();
        for (int c = 0; c < 3; ++c)
            raw.scales_raw(i, c) = std::log(std::clamp(kd[i], kScaleMin, kScaleMax)) + 0.5 * sig * rng.normal();
        raw.rotations_raw(i, 0) = 1.0 + 0.3 * sig * rng.normal();
        for (int c = 1; c < 4; ++c) raw.rotations_raw(i, c) = 0.3 * sig * rng.normal();
        for (int c = 0; c < d; ++c) raw.sh_coeffs(i, c) = sig * rng.normal();
    }

    // expose the raw fields as optimizable tensors
    Mat op_mat = raw.opacities_raw;
    Mat g_op = Mat::Zero(n, 1), g_sc = Mat::Zero(n, 3), g_rot = Mat::Zero(n, 4),
        g_sh = Mat::Zero(n, d);
    std::vector<nn::TensorRef> refs = {{"opacities", &op_mat, &g_op},
                                       {"scales", &raw.scales_raw, &g_sc},
                                       {"rotations", &raw.rotations_raw, &g_rot},
                                       {"sh", &raw.sh_coeffs, &g_sh}};
    nn::Adam opt(cfg.lr);
    Stage1Result result;
    result.scene_id = scene.scene_id;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        g_op.setZero();
        g_sc.setZero();
        g_rot.setZero();
        g_sh.setZero();
        raw.opacities_raw = op_mat.col(0);
        const GaussianAttributeSet set = activate(raw);
        AttributeGrads grads(set);
        const auto stats = detail::scene_epoch(scene, set, kd, cfg.w_aux, grads);
        if (!std::isfinite(stats.loss)) {
            throw TrainingDiverged("vanilla fit loss is not finite", epoch);
        }
        const auto raw_grads = activate_backward(raw, set, grads.opacities, grads.scales,
                                                 grads.rotations, grads.sh_coeffs);
        g_op.col(0) = raw_grads.opacities_raw;
        g_sc = raw_grads.scales_raw;
        g_rot = raw_grads.rotations_raw;
        g_sh = raw_grads.sh_coeffs;
        opt.step(refs);
        if (epoch % cfg.log_every == 0 || epoch == cfg.epochs) {
            result.log.entries.push_back({epoch, stats.loss, stats.psnr, stats.aux});
        }
    }
    raw.opacities_raw = op_mat.col(0);
    result.set = activate(raw);
    return result;
}

} // namespace hugdiff
