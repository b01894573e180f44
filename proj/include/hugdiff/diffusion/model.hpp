// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hugdiff/conditioning/backview.hpp"
#include "hugdiff/conditioning/features.hpp"
#include "hugdiff/conditioning/positions.hpp"
#include "hugdiff/conditioning/visibility.hpp"
#include "hugdiff/diffusion/schedule.hpp"
#include "hugdiff/nets/diffuser.hpp"
#include "hugdiff/proxygt/stage2.hpp"

namespace hugdiff {

struct DiffusionModelConfig {
    int sh_degree = 1;
    int width = 96;
    int prior_points = 300; // index-embedding table size
    int num_parts = 24;
    BodySemanticConfig semantic;
    int timesteps = 100;
    double beta_start = 1e-4;
    double beta_end = 0.065; // keeps alpha_bar(T) under 0.05 at T=100
    ScheduleKind schedule_kind = ScheduleKind::Linear;
    double clip_c0 = 1.5; // covers the SH range of [0,1] colors at degree 1
    std::uint64_t init_seed = 11;
};

// Everything trainable for the attribute generation phase: the image
// encoder and semantic embedders (shared conditioning), the SH noise
// predictor, and the extra-step head.
struct GsDiffusionModel {
    DiffusionModelConfig cfg;
    DiffusionSchedule sched;
    std::unique_ptr<ImageEncoder> encoder;
    std::unique_ptr<BodySemanticEmbedder> embedder;
    std::unique_ptr<AttributeDiffuser> diffuser;
    std::unique_ptr<AttributeHeadNet> extra_head;

    static GsDiffusionModel create(const DiffusionModelConfig& cfg, const BodyPrior& prior_like) {
        GsDiffusionModel m;
        m.cfg = cfg;
        m.sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end, cfg.schedule_kind);
        Rng rng(cfg.init_seed);
        m.encoder = std::make_unique<ImageEncoder>(rng);
        m.embedder = std::make_unique<BodySemanticEmbedder>(prior_like, cfg.semantic, rng);
        DiffuserConfig dc;
        dc.sh_degree = cfg.sh_degree;
        dc.beta_dim = PixelAlignedFeatures::dim();
        dc.gamma_dim = m.embedder->dim();
        dc.width = cfg.width;
        dc.group_seed = cfg.init_seed ^ 0x9e37;
        m.diffuser = std::make_unique<AttributeDiffuser>(dc, rng);
        HeadNetConfig hc;
        hc.sh_degree = cfg.sh_degree;
        hc.beta_dim = dc.beta_dim;
        hc.gamma_dim = dc.gamma_dim;
        hc.takes_sh_input = true;
        hc.width = cfg.width;
        hc.group_seed = cfg.init_seed ^ 0x51ed;
        m.extra_head = std::make_unique<AttributeHeadNet>(hc, rng);
        return m;
    }

    std::vector<nn::TensorRef> conditioning_params() {
        std::vector<nn::TensorRef> refs;
        encoder->collect("encoder", refs);
        embedder->collect("embedder", refs);
        return refs;
    }
    std::vector<nn::TensorRef> sh_phase_params() {
        auto refs = conditioning_params();
        diffuser->collect("diffuser", refs);
        return refs;
    }
    std::vector<nn::TensorRef> extra_phase_params() {
        auto refs = conditioning_params();
        extra_head->collect("extra", refs);
        return refs;
    }
    std::vector<nn::TensorRef> all_params() {
        auto refs = conditioning_params();
        diffuser->collect("diffuser", refs);
        extra_head->collect("extra", refs);
        return refs;
    }
};

// One scene prepared for diffusion training or inference: the conditioning
// inputs that do not depend on trainable parameters.
struct ConditioningContext {
    std::string scene_id;
    Mat positions;
    Image front_image;
    CameraView front_view;
    Image back_image;
    CameraView back_cam;
    std::vector<bool> visibility;
    const BodyPrior* prior = nullptr;
    GaussianAttributeSet proxy; // targets; empty positions at pure inference
};

inline ConditioningContext make_conditioning_context(const SceneCapture& scene,
                                                     const GaussianAttributeSet& proxy,
                                                     const BackViewProvider* provider,
                                                     int input_view_index = 0) {
    ConditioningContext ctx;
    ctx.scene_id = scene.scene_id;
    ctx.positions = proxy.positions;
    ctx.front_image = scene.images.at(static_cast<std::size_t>(input_view_index));
    ctx.front_view = scene.views.at(static_cast<std::size_t>(input_view_index));
    const auto bv = back_view(ctx.front_view, scene.body_prior, provider);
    ctx.back_image = bv.image;
    ctx.back_cam = bv.camera;
    ctx.visibility = partition_visibility(ctx.positions, ctx.front_view);
    ctx.prior = &scene.body_prior;
    ctx.proxy = proxy;
    return ctx;
}

// Runs the trainable conditioning for one context with the current encoder
// and embedder parameters. The returned sampler handle carries the caches
// needed to push gradients back.
struct ConditioningForward {
    ConditioningBundle bundle;
    PixelAlignedFeatures paf;
};

inline ConditioningForward conditioning_forward(ImageEncoder& encoder,
                                                BodySemanticEmbedder& embedder,
                                                const ConditioningContext& ctx) {
    ConditioningForward out;
    out.bundle.positions = ctx.positions;
    out.bundle.visibility = ctx.visibility;
    out.bundle.pixel_aligned = out.paf.forward(encoder, ctx.front_image, ctx.back_image,
                                               ctx.positions, ctx.visibility, ctx.front_view,
                                               ctx.back_cam);
    out.bundle.body_semantic = embedder.forward(ctx.positions, *ctx.prior);
    out.bundle.validate();
    return out;
}

inline ConditioningForward conditioning_forward(GsDiffusionModel& model,
                                                const ConditioningContext& ctx) {
    return conditioning_forward(*model.encoder, *model.embedder, ctx);
}

inline ConditionInputs to_condition_inputs(const ConditioningBundle& bundle) {
    return ConditionInputs{bundle.positions, bundle.pixel_aligned, bundle.body_semantic};
}

// ---------------------------------------------------------------------------
// SH diffusion phase (noise prediction)
// ---------------------------------------------------------------------------

// Single training step over a batch of contexts: uniform t, fresh noise,
// mean squared error between true and predicted noise. Gradients reach the
// diffuser, the encoder, and the embedders.
inline double train_step_sh(GsDiffusionModel& model,
                            const std::vector<const ConditioningContext*>& batch,
                            std::vector<nn::TensorRef>& refs, nn::Adam& opt, Rng& rng) {
    if (batch.empty()) throw MissingCondition("sh train step needs at least one scene");
    nn::zero_grads(refs);
    double total = 0.0;
    for (const auto* ctx : batch) {
        if (!ctx->prior || ctx->proxy.size() == 0) {
            throw MissingCondition("scene " + ctx->scene_id + " lacks proxy attributes");
        }
        auto cond = conditioning_forward(model, *ctx);
        const Mat& c0 = ctx->proxy.sh_coeffs;
        const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(model.sched.timesteps)));
        Mat noise(c0.rows(), c0.cols());
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
        const Mat ct = q_sample(c0, t, noise, model.sched);
        const Mat eps_hat = model.diffuser->forward(ct, to_condition_inputs(cond.bundle), t);
        const Mat diff = eps_hat - noise;
        const double count = static_cast<double>(diff.size());
        total += diff.squaredNorm() / count;
        const Mat d_eps = (2.0 / count / static_cast<double>(batch.size())) * diff;
        const auto in_grads = model.diffuser->backward(d_eps);
        cond.paf.backward(*model.encoder, in_grads.d_beta);
        model.embedder->backward(in_grads.d_gamma);
    }
    opt.step(refs);
    return total / static_cast<double>(batch.size());
}

// Ancestral sampling of SH coefficients for one conditioning bundle.
inline Mat sample_sh(GsDiffusionModel& model, const ConditioningBundle& bundle,
                     std::uint64_t seed) {
    const Eigen::Index n = bundle.positions.rows();
    const int d = sh_dim(model.cfg.sh_degree);
    Rng rng(seed);
    Mat x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const auto cond = to_condition_inputs(bundle);
    for (int t = model.sched.timesteps; t >= 1; --t) {
        const Mat eps_hat = model.diffuser->forward(x, cond, t);
        if (!eps_hat.allFinite()) throw SamplingDiverged("noise prediction is not finite", t);
        const auto step = posterior_step(x, eps_hat, t, model.sched, model.cfg.clip_c0);
        x = step.mean;
        if (step.sigma > 0.0) {
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += step.sigma * rng.normal();
        }
        if (!x.allFinite()) throw SamplingDiverged("sample is not finite", t);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Extra step (residual removal + opacity/scale/rotation regression)
// ---------------------------------------------------------------------------

// Applies the trained head once: c = c0 - predicted residual, remaining
// attributes activated from the raw heads, assembled over the bundle
// positions.
inline GaussianAttributeSet extra_step(GsDiffusionModel& model, const Mat& c0,
                                       const ConditioningBundle& bundle) {
    const auto out = model.extra_head->forward(c0, to_condition_inputs(bundle));
    RawAttributeSet raw;
    raw.positions = bundle.positions;
    raw.sh_degree = model.cfg.sh_degree;
    raw.sh_coeffs = c0 - out.sh_out;
    raw.opacities_raw = out.opacities_raw;
    raw.scales_raw = out.scales_raw;
    raw.rotations_raw = out.rotations_raw;
    return activate(raw);
}

struct ExtraStepPolicy {
    double gt_probability = 0.5; // use jittered proxy SH with this probability
    double gt_noise_sigma = 0.05;
    std::uint64_t sample_seed = 1234; // seeds the frozen-diffuser branch
    int refresh_every = 50;           // steps between fresh frozen samples per scene
};

// Frozen-diffuser samples are expensive (T forwards each), so the policy
// refreshes them periodically instead of per step.
struct FrozenSampleCache {
    std::map<std::string, Mat> samples;
    int step = 0;
};

struct ExtraStepLossParts {
    double total = 0.0;
    double sh = 0.0, opacity = 0.0, scale = 0.0, rotation = 0.0;
};

// One training step of the extra-step head over a batch. The input c0
// follows the mixing policy; gradients flow to the head, the encoder and
// the embedders but never into the SH diffuser.
inline ExtraStepLossParts train_extra_step(GsDiffusionModel& model,
                                           const std::vector<const ConditioningContext*>& batch,
                                           std::vector<nn::TensorRef>& refs, nn::Adam& opt,
                                           const ExtraStepPolicy& policy, Rng& rng,
                                           FrozenSampleCache* cache = nullptr) {
    if (batch.empty()) throw MissingCondition("extra step needs at least one scene");
    nn::zero_grads(refs);
    ExtraStepLossParts parts;
    for (const auto* ctx : batch) {
        auto cond = conditioning_forward(model, *ctx);
        const auto& proxy = ctx->proxy;
        const Eigen::Index n = proxy.size();

        Mat c0;
        if (rng.uniform() < policy.gt_probability) {
            c0 = proxy.sh_coeffs;
            for (Eigen::Index i = 0; i < c0.size(); ++i)
                c0.data()[i] += policy.gt_noise_sigma * rng.normal();
        } else if (cache) {
            // frozen-diffuser branch: no gradients are requested from it
            auto& slot = cache->samples[ctx->scene_id];
            if (slot.size() == 0 || cache->step % std::max(1, policy.refresh_every) == 0) {
                slot = sample_sh(model, cond.bundle, policy.sample_seed ^ rng.next_u64());
            }
            c0 = slot;
        } else {
            c0 = sample_sh(model, cond.bundle, policy.sample_seed ^ rng.next_u64());
        }

        const auto out = model.extra_head->forward(c0, to_condition_inputs(cond.bundle));
        RawAttributeSet raw;
        raw.positions = proxy.positions;
        raw.sh_degree = model.cfg.sh_degree;
        raw.sh_coeffs = c0 - out.sh_out;
        raw.opacities_raw = out.opacities_raw;
        raw.scales_raw = out.scales_raw;
        raw.rotations_raw = out.rotations_raw;
        const auto set = activate(raw);

        // sign-align the target quaternions (double cover)
        Mat q_target = proxy.rotations;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (set.rotations.row(i).dot(q_target.row(i)) < 0.0) q_target.row(i) *= -1.0;
        }

        const double inv_batch = 1.0 / static_cast<double>(batch.size());
        const Mat d_sh_full = set.sh_coeffs - proxy.sh_coeffs;
        const Vec d_op_full = set.opacities - proxy.opacities;
        const Mat d_sc_full = set.scales - proxy.scales;
        const Mat d_q_full = set.rotations - q_target;
        parts.sh += d_sh_full.squaredNorm() / static_cast<double>(d_sh_full.size());
        parts.opacity += d_op_full.squaredNorm() / static_cast<double>(n);
        parts.scale += d_sc_full.squaredNorm() / static_cast<double>(d_sc_full.size());
        parts.rotation += d_q_full.squaredNorm() / static_cast<double>(d_q_full.size());

        const auto raw_grads = activate_backward(
            raw, set, (2.0 / static_cast<double>(n)) * d_op_full,
            (2.0 / static_cast<double>(d_sc_full.size())) * d_sc_full,
            (2.0 / static_cast<double>(d_q_full.size())) * d_q_full,
            (2.0 / static_cast<double>(d_sh_full.size())) * d_sh_full);
        // c = c0 - sh_out, so the head's sh output sees the negated gradient
        const auto in_grads = model.extra_head->backward(
            (-inv_batch) * raw_grads.sh_coeffs, inv_batch * raw_grads.opacities_raw,
            inv_batch * raw_grads.scales_raw, inv_batch * raw_grads.rotations_raw);
        cond.paf.backward(*model.encoder, inv_batch * in_grads.d_beta);
        model.embedder->backward(inv_batch * in_grads.d_gamma);
    }
    if (cache) ++cache->step;
    opt.step(refs);
    const double inv = 1.0 / static_cast<double>(batch.size());
    parts.sh *= inv;
    parts.opacity *= inv;
    parts.scale *= inv;
    parts.rotation *= inv;
    parts.total = parts.sh + parts.opacity + parts.scale + parts.rotation;
    return parts;
}

// ---------------------------------------------------------------------------
// Full single-image inference
// ---------------------------------------------------------------------------

struct InferenceInputs {
    Image image;
    CameraView camera;
    std::optional<Image> depth;   // meters; required unless gt positions given
    const BodyPrior* prior = nullptr;
    const BackViewProvider* back_provider = nullptr;
    std::optional<Mat> gt_positions; // training-time passthrough
    int n_points = 2000;
    std::uint64_t seed = 99;
};

// Composes position generation, conditioning, SH sampling and the extra
// step into one attribute set. Stage failures propagate with their stage
// named in the message.
inline GaussianAttributeSet infer_full(GsDiffusionModel& model, const InferenceInputs& in) {
    Mat positions;
    if (in.gt_positions.has_value()) {
        positions = generate_positions_from_gt(*in.gt_positions);
    } else {
        if (!in.depth.has_value()) throw EmptyDepth("position generation: no depth map provided");
        if (!in.prior) throw MissingCondition("position generation: no body prior");
        PositionGenOptions pg;
        pg.n = in.n_points;
        pg.seed = in.seed ^ 0x70f5;
        positions = generate_positions(in.camera, *in.depth, *in.prior, pg);
    }

    ConditioningContext ctx;
    ctx.scene_id = "inference";
    ctx.positions = positions;
    ctx.front_image = in.image;
    ctx.front_view = in.camera;
    if (!in.prior) throw MissingCondition("conditioning: no body prior");
    const auto bv = back_view(in.camera, *in.prior, in.back_provider);
    ctx.back_image = bv.image;
    ctx.back_cam = bv.camera;
    ctx.visibility = partition_visibility(positions, in.camera);
    ctx.prior = in.prior;

    auto cond = conditioning_forward(model, ctx);
    const Mat c0 = sample_sh(model, cond.bundle, in.seed);
    return extra_step(model, c0, cond.bundle);
}

} // namespace hugdiff
