// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <numeric>
#include <vector>

#include "hugdiff/proxygt/stage1.hpp"

namespace hugdiff {

struct Stage2Config {
    double lr = 2e-4;
    int epochs = 1300;
    int batch_size = 4;
    double w_aux = 0.01;
    int knn_k = 4;
    int width = 64;
    std::uint64_t seed = 2;
    int log_every = 1;
};

// Per-scene proxy ground truth: stage-1 attributes and the unified stage-2
// attributes over the same fixed positions.
struct ProxyGTRecord {
    std::string scene_id;
    GaussianAttributeSet stage1_set;
    GaussianAttributeSet unified_set;
};

// Stage 2: one shared network re-fits all scenes, consuming positions plus
// the stage-1 SH coefficients, so attribute distributions align across
// scenes. Positions pass through untouched.
inline std::vector<ProxyGTRecord> stage2_unify(const std::vector<SceneCapture>& scenes,
                                               const std::vector<Stage1Result>& stage1,
                                               const Stage2Config& cfg,
                                               TrainLog* log_out = nullptr) {
    if (scenes.size() != stage1.size() || scenes.empty()) {
        throw ConfigError("stage 2 needs one stage-1 result per scene");
    }
    const int degree = stage1.front().set.sh_degree;
    for (const auto& r : stage1) {
        if (r.set.sh_degree != degree) {
            throw ConfigError("stage 2 cannot mix SH degrees across scenes");
        }
    }
    const int d = sh_dim(degree);

    Rng rng(cfg.seed);
    SetNetworkConfig net_cfg;
    net_cfg.sh_degree = degree;
    net_cfg.sh_in_dim = d;
    net_cfg.width = cfg.width;
    net_cfg.knn_k = cfg.knn_k;
    net_cfg.group_seed = cfg.seed;
    SetNetwork net(net_cfg, rng);

    std::vector<Vec> kds;
    double mean_kd = 0.0;
    for (const auto& r : stage1) {
        kds.push_back(kdist(r.set.positions, cfg.knn_k));
        mean_kd += kds.back().mean();
    }
    net.set_scale_bias(mean_kd / static_cast<double>(stage1.size()));

    auto refs = net.params();
    nn::Adam opt(cfg.lr);
    const std::size_t j = scenes.size();
    std::vector<std::size_t> order(j);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // deterministic shuffle per epoch
        for (std::size_t i = j; i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(i))]);
        }
        double epoch_loss = 0.0, epoch_aux = 0.0, mse_acc = 0.0;
        std::size_t scene_cursor = 0;
        while (scene_cursor < j) {
            nn::zero_grads(refs);
            const std::size_t batch_end =
                std::min(j, scene_cursor + static_cast<std::size_t>(cfg.batch_size));
            for (; scene_cursor < batch_end; ++scene_cursor) {
                const auto& scene = scenes[order[scene_cursor]];
                const auto& s1 = stage1[order[scene_cursor]];
                const RawAttributeSet raw = net.forward(s1.set.positions, s1.set.sh_coeffs);
                const GaussianAttributeSet set = activate(raw);
                AttributeGrads grads(set);
                const auto stats = detail::scene_epoch(scene, set, kds[order[scene_cursor]],
                                                       cfg.w_aux, grads);
                if (!std::isfinite(stats.loss)) {
                    throw TrainingDiverged("stage 2 loss is not finite", epoch);
                }
                epoch_loss += stats.loss;
                epoch_aux += stats.aux;
                mse_acc += std::pow(10.0, -stats.psnr / 10.0);
                const auto raw_grads = activate_backward(raw, set, grads.opacities, grads.scales,
                                                         grads.rotations, grads.sh_coeffs);
                net.backward(raw_grads);
            }
            opt.step(refs);
        }
        if (log_out && (epoch % cfg.log_every == 0 || epoch == cfg.epochs)) {
            const double m = mse_acc / static_cast<double>(j);
            log_out->entries.push_back({epoch, epoch_loss / static_cast<double>(j),
                                        m <= 0.0 ? std::numeric_limits<double>::infinity()
                                                 : 10.0 * std::log10(1.0 / m),
                                        epoch_aux / static_cast<double>(j)});
        }
    }

    std::vector<ProxyGTRecord> out;
    for (std::size_t s = 0; s < j; ++s) {
        ProxyGTRecord rec;
        rec.scene_id = stage1[s].scene_id;
        rec.stage1_set = stage1[s].set;
        rec.unified_set = activate(net.forward(stage1[s].set.positions, stage1[s].set.sh_coeffs));
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace hugdiff
