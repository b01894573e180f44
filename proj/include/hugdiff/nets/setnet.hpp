// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hugdiff/core/types.hpp"
#include "hugdiff/nets/backbone.hpp"

namespace hugdiff {

// Stage network: maps fixed positions (plus optional per-point SH features)
// to the raw non-position attributes. Decoder heads follow the contract:
// one head for SH, a shared trunk with separate opacity/scale/rotation
// heads, the trunk consuming a k-nearest-neighbor graph of the positions.
struct SetNetworkConfig {
    int sh_degree = 1;
    int sh_in_dim = 0; // stage 2 feeds stage-1 SH coefficients here
    int width = 64;
    int pe_freqs = 6;
    int knn_k = 4;
    std::uint64_t group_seed = 1;
};

class SetNetwork {
public:
    SetNetworkConfig cfg;

    SetNetwork(const SetNetworkConfig& cfg, Rng& rng) : cfg(cfg) {
        BackboneConfig bc;
        bc.in_dim = positional_encoding_dim(cfg.pe_freqs) + cfg.sh_in_dim;
        bc.width = cfg.width;
        bc.with_time = false;
        bc.group_seed = cfg.group_seed;
        backbone_ = PointSetBackbone(bc, rng);
        const int h = cfg.width;
        const int d = sh_dim(cfg.sh_degree);
        sh1_.init(rng, h, h);
        sh2_.init(rng, h, d);
        // zero output head: coefficient components the data never touches
        // stay at zero instead of frozen init noise
        sh2_.w.setZero();
        trunk_.init(rng, h + 4, h);
        head_opacity_.init(rng, h, 1);
        head_scale_.init(rng, h, 3);
        head_rotation_.init(rng, h, 4);
        // identity rotation default keeps an untrained net renderable
        head_rotation_.b(0, 0) = 1.0;
        head_scale_.b.row(0).setConstant(std::log(0.01));
    }

    // Data-dependent bias so initial splat radii roughly match the local
    // point spacing.
    void set_scale_bias(double scale) {
        head_scale_.b.row(0).setConstant(std::log(std::clamp(scale, kScaleMin, kScaleMax)));
    }

    // `sh_in` may be empty when cfg.sh_in_dim == 0.
    RawAttributeSet forward(const Mat& positions, const Mat& sh_in = Mat()) {
        const Eigen::Index n = positions.rows();
        Mat feats = positional_encoding(positions, cfg.pe_freqs);
        if (cfg.sh_in_dim > 0) {
            Mat joined(n, feats.cols() + sh_in.cols());
            joined.leftCols(feats.cols()) = feats;
            joined.rightCols(sh_in.cols()) = sh_in;
            feats = std::move(joined);
        }
        point_feats_ = backbone_.forward(positions, feats);

        sh1_pre_ = sh1_.forward(point_feats_);
        sh1_act_ = nn::silu(sh1_pre_);

        // trunk input: backbone features + local geometry from the kNN graph
        geo_ = knn_geometry(positions);
        trunk_x_.resize(n, cfg.width + 4);
        trunk_x_.leftCols(cfg.width) = point_feats_;
        trunk_x_.rightCols(4) = geo_;
        trunk_pre_ = trunk_.forward(trunk_x_);
        trunk_act_ = nn::silu(trunk_pre_);

        RawAttributeSet raw;
        raw.positions = positions;
        raw.sh_degree = cfg.sh_degree;
        raw.sh_coeffs = sh2_.forward(sh1_act_);
        raw.opacities_raw = head_opacity_.forward(trunk_act_).col(0);
        raw.scales_raw = head_scale_.forward(trunk_act_);
        raw.rotations_raw = head_rotation_.forward(trunk_act_);
        return raw;
    }

    // Accumulates parameter gradients; returns nothing because positions are
    // fixed inputs by design.
    void backward(const ActivationGrads& d_raw) {
        Mat d_sh1_act = sh2_.backward(d_raw.sh_coeffs);
        Mat d_point = sh1_.backward(nn::silu_backward(sh1_pre_, d_sh1_act));

        Mat d_trunk_act = head_opacity_.backward(d_raw.opacities_raw);
        d_trunk_act += head_scale_.backward(d_raw.scales_raw);
        d_trunk_act += head_rotation_.backward(d_raw.rotations_raw);
        const Mat d_trunk_x = trunk_.backward(nn::silu_backward(trunk_pre_, d_trunk_act));
        d_point += d_trunk_x.leftCols(cfg.width);

        backbone_.backward(d_point);
    }

    void collect(const std::string& prefix, std::vector<nn::TensorRef>& out) {
        backbone_.collect(prefix + ".bb", out);
        sh1_.collect(prefix + ".sh1", out);
        sh2_.collect(prefix + ".sh2", out);
        trunk_.collect(prefix + ".trunk", out);
        head_opacity_.collect(prefix + ".opacity", out);
        head_scale_.collect(prefix + ".scale", out);
        head_rotation_.collect(prefix + ".rotation", out);
    }

    std::vector<nn::TensorRef> params() {
        std::vector<nn::TensorRef> refs;
        collect("setnet", refs);
        return refs;
    }

private:
    Mat knn_geometry(const Mat& positions) const {
        const Eigen::Index n = positions.rows();
        Mat geo = Mat::Zero(n, 4);
        if (n <= 1) return geo;
        const int k = static_cast<int>(std::min<Eigen::Index>(cfg.knn_k, n - 1));
        const auto graph = knn_graph(positions, k);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vec3 mean_off = Vec3::Zero();
            double mean_dist = 0.0;
            for (const int j : graph.neighbors[static_cast<std::size_t>(i)]) {
                const Vec3 off = (positions.row(j) - positions.row(i)).transpose();
                mean_off += off;
                mean_dist += off.norm();
            }
            mean_off /= k;
            mean_dist /= k;
            geo.block<1, 3>(i, 0) = mean_off.transpose();
            geo(i, 3) = mean_dist;
        }
        return geo;
    }

    PointSetBackbone backbone_;
    nn::Linear sh1_, sh2_, trunk_, head_opacity_, head_scale_, head_rotation_;
    Mat point_feats_, sh1_pre_, sh1_act_, geo_, trunk_x_, trunk_pre_, trunk_act_;
};

} // namespace hugdiff
