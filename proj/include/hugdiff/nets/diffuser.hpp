// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hugdiff/core/types.hpp"
#include "hugdiff/nets/backbone.hpp"

namespace hugdiff {

// Per-point conditioning block shared by the diffusion nets: positional
// encoding of the (fixed) positions, pixel-aligned features and
// body-semantic features, concatenated per point.
struct ConditionInputs {
    Mat positions;      // N x 3
    Mat pixel_aligned;  // N x F_beta
    Mat body_semantic;  // N x F_gamma
};

// Noise predictor over SH coefficients, conditioned per point and on the
// timestep.
struct DiffuserConfig {
    int sh_degree = 1;
    int beta_dim = 0;
    int gamma_dim = 0;
    int width = 96;
    int pe_freqs = 6;
    std::uint64_t group_seed = 2;
};

class AttributeDiffuser {
public:
    DiffuserConfig cfg;

    AttributeDiffuser(const DiffuserConfig& cfg, Rng& rng) : cfg(cfg) {
        BackboneConfig bc;
        bc.in_dim = sh_dim(cfg.sh_degree) + positional_encoding_dim(cfg.pe_freqs) + cfg.beta_dim +
                    cfg.gamma_dim;
        bc.width = cfg.width;
        bc.with_time = true;
        bc.group_seed = cfg.group_seed;
        backbone_ = PointSetBackbone(bc, rng);
        head_.init(rng, cfg.width, sh_dim(cfg.sh_degree));
    }

    Mat forward(const Mat& noisy_sh, const ConditionInputs& cond, double t) {
        const Eigen::Index n = noisy_sh.rows();
        const Mat pe = positional_encoding(cond.positions, cfg.pe_freqs);
        Mat feats(n, noisy_sh.cols() + pe.cols() + cfg.beta_dim + cfg.gamma_dim);
        feats.leftCols(noisy_sh.cols()) = noisy_sh;
        feats.middleCols(noisy_sh.cols(), pe.cols()) = pe;
        feats.middleCols(noisy_sh.cols() + pe.cols(), cfg.beta_dim) = cond.pixel_aligned;
        feats.rightCols(cfg.gamma_dim) = cond.body_semantic;
        const Mat h = backbone_.forward(cond.positions, feats, t);
        return head_.forward(h);
    }

    // Returns gradients with respect to the conditioning features so the
    // encoder and embedders can train jointly.
    struct InputGrads {
        Mat d_noisy_sh;
        Mat d_beta;
        Mat d_gamma;
    };

    InputGrads backward(const Mat& d_eps) {
        const Mat d_h = head_.backward(d_eps);
        const Mat d_feats = backbone_.backward(d_h);
        const int d = sh_dim(cfg.sh_degree);
        const int pe = positional_encoding_dim(cfg.pe_freqs);
        InputGrads g;
        g.d_noisy_sh = d_feats.leftCols(d);
        g.d_beta = d_feats.middleCols(d + pe, cfg.beta_dim);
        g.d_gamma = d_feats.rightCols(cfg.gamma_dim);
        return g;
    }

    void collect(const std::string& prefix, std::vector<nn::TensorRef>& out) {
        backbone_.collect(prefix + ".bb", out);
        head_.collect(prefix + ".head", out);
    }

    std::vector<nn::TensorRef> params() {
        std::vector<nn::TensorRef> refs;
        collect("diffuser", refs);
        return refs;
    }

private:
    PointSetBackbone backbone_;
    nn::Linear head_;
};

// Shared shape for the extra-step head (consumes sampled SH) and the plain
// regression model (consumes conditions only): backbone plus an SH-sized
// head and raw opacity/scale/rotation heads off one trunk.
struct HeadNetConfig {
    int sh_degree = 1;
    int beta_dim = 0;
    int gamma_dim = 0;
    bool takes_sh_input = true; // extra step: yes; regression model: no
    int width = 96;
    int pe_freqs = 6;
    std::uint64_t group_seed = 3;
};

class AttributeHeadNet {
public:
    HeadNetConfig cfg;

    struct Outputs {
        Mat sh_out; // residual noise (extra step) or raw SH (regression)
        Vec opacities_raw;
        Mat scales_raw;
        Mat rotations_raw;
    };

    AttributeHeadNet(const HeadNetConfig& cfg, Rng& rng) : cfg(cfg) {
        BackboneConfig bc;
        bc.in_dim = (cfg.takes_sh_input ? sh_dim(cfg.sh_degree) : 0) +
                    positional_encoding_dim(cfg.pe_freqs) + cfg.beta_dim + cfg.gamma_dim;
        bc.width = cfg.width;
        bc.with_time = false;
        bc.group_seed = cfg.group_seed;
        backbone_ = PointSetBackbone(bc, rng);
        const int h = cfg.width;
        sh_head_.init(rng, h, sh_dim(cfg.sh_degree));
        trunk_.init(rng, h, h);
        head_opacity_.init(rng, h, 1);
        head_scale_.init(rng, h, 3);
        head_rotation_.init(rng, h, 4);
        head_opacity_.b(0, 0) = 2.0;
        head_rotation_.b(0, 0) = 1.0;
        head_scale_.b.row(0).setConstant(std::log(0.01));
        if (cfg.takes_sh_input) {
            // the residual starts near zero so an untrained extra step is a
            // near-identity on the sampled coefficients
            sh_head_.w *= 0.01;
        }
    }

    void set_scale_bias(double scale) {
        head_scale_.b.row(0).setConstant(std::log(std::clamp(scale, kScaleMin, kScaleMax)));
    }

    Outputs forward(const Mat& sh_in, const ConditionInputs& cond) {
        const Eigen::Index n = cond.positions.rows();
        const Mat pe = positional_encoding(cond.positions, cfg.pe_freqs);
        const int d_in = cfg.takes_sh_input ? static_cast<int>(sh_in.cols()) : 0;
        Mat feats(n, d_in + pe.cols() + cfg.beta_dim + cfg.gamma_dim);
        if (cfg.takes_sh_input) feats.leftCols(d_in) = sh_in;
        feats.middleCols(d_in, pe.cols()) = pe;
        feats.middleCols(d_in + pe.cols(), cfg.beta_dim) = cond.pixel_aligned;
        feats.rightCols(cfg.gamma_dim) = cond.body_semantic;
        point_feats_ = backbone_.forward(cond.positions, feats);

        trunk_pre_ = trunk_.forward(point_feats_);
        trunk_act_ = nn::silu(trunk_pre_);

        Outputs out;
        out.sh_out = sh_head_.forward(point_feats_);
        out.opacities_raw = head_opacity_.forward(trunk_act_).col(0);
        out.scales_raw = head_scale_.forward(trunk_act_);
        out.rotations_raw = head_rotation_.forward(trunk_act_);
        return out;
    }

    struct InputGrads {
        Mat d_sh_in;
        Mat d_beta;
        Mat d_gamma;
    };

    InputGrads backward(const Mat& d_sh_out, const Vec& d_opacities, const Mat& d_scales,
                        const Mat& d_rotations) {
        Mat d_point = sh_head_.backward(d_sh_out);
        Mat d_trunk_act = head_opacity_.backward(d_opacities);
        d_trunk_act += head_scale_.backward(d_scales);
        d_trunk_act += head_rotation_.backward(d_rotations);
        d_point += trunk_.backward(nn::silu_backward(trunk_pre_, d_trunk_act));
        const Mat d_feats = backbone_.backward(d_point);
        const int d_in = cfg.takes_sh_input ? sh_dim(cfg.sh_degree) : 0;
        const int pe = positional_encoding_dim(cfg.pe_freqs);
        InputGrads g;
        if (cfg.takes_sh_input) g.d_sh_in = d_feats.leftCols(d_in);
        g.d_beta = d_feats.middleCols(d_in + pe, cfg.beta_dim);
        g.d_gamma = d_feats.rightCols(cfg.gamma_dim);
        return g;
    }

    void collect(const std::string& prefix, std::vector<nn::TensorRef>& out) {
        backbone_.collect(prefix + ".bb", out);
        sh_head_.collect(prefix + ".sh", out);
        trunk_.collect(prefix + ".trunk", out);
        head_opacity_.collect(prefix + ".opacity", out);
        head_scale_.collect(prefix + ".scale", out);
        head_rotation_.collect(prefix + ".rotation", out);
    }

    std::vector<nn::TensorRef> params() {
        std::vector<nn::TensorRef> refs;
        collect("headnet", refs);
        return refs;
    }

private:
    PointSetBackbone backbone_;
    nn::Linear sh_head_, trunk_, head_opacity_, head_scale_, head_rotation_;
    Mat point_feats_, trunk_pre_, trunk_act_;
};

} // namespace hugdiff
