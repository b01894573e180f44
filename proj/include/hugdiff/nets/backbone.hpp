// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hugdiff/nets/nn.hpp"
#include "hugdiff/nets/pointops.hpp"

namespace hugdiff {

// Hierarchical set encoder-decoder over a fixed point cloud: per-point
// embedding, an anchor level built by farthest-point sampling with kNN
// grouping, a global pooling level, then a decoder that interpolates back
// to points with skip links. The optional time embedding is injected
// additively at every level. All grouping and pooling runs in canonical
// (coordinate-sorted) order, so outputs commute bit-exactly with input
// permutations for a fixed grouping seed.
struct BackboneConfig {
    int in_dim = 39;
    int width = 64;
    bool with_time = false;
    int time_dim = 128;
    int anchor_div = 4; // anchors = max(1, N / anchor_div)
    int group_k = 8;
    std::uint64_t group_seed = 0;
};

class PointSetBackbone {
public:
    BackboneConfig cfg;

    PointSetBackbone() = default;
    PointSetBackbone(const BackboneConfig& cfg, Rng& rng) : cfg(cfg) { init(rng); }

    void init(Rng& rng) {
        const int h = cfg.width;
        lin_in_.init(rng, cfg.in_dim, h);
        lin_pair_.init(rng, h + 3, h);
        lin_enc1_.init(rng, h, h);
        lin_g1_.init(rng, h, h);
        lin_g2_.init(rng, h, h);
        lin_dec1_.init(rng, 2 * h, h);
        lin_dec0_.init(rng, 2 * h, h);
        if (cfg.with_time) {
            for (auto* t : time_projs()) t->init(rng, cfg.time_dim, h);
        }
    }

    int out_dim() const { return cfg.width; }

    // `points` N x 3 drives grouping; `feats` N x in_dim carries the data.
    Mat forward(const Mat& points, const Mat& feats, double t = 0.0) {
        const Eigen::Index n = points.rows();
        const int h = cfg.width;
        if (cfg.with_time) temb_ = nn::time_embedding(t, cfg.time_dim);

        pre0_ = lin_in_.forward(feats);
        if (cfg.with_time) add_time(pre0_, tp0_);
        h0_ = nn::silu(pre0_);

        // anchor level
        const int m = std::max(1, static_cast<int>(n) / cfg.anchor_div);
        anchor_idx_ = farthest_point_sample(points, m, cfg.group_seed);
        anchor_pts_.resize(static_cast<Eigen::Index>(anchor_idx_.size()), 3);
        for (std::size_t a = 0; a < anchor_idx_.size(); ++a)
            anchor_pts_.row(static_cast<Eigen::Index>(a)) = points.row(anchor_idx_[a]);
        groups_ = knn_to_queries(points, anchor_pts_, cfg.group_k);

        const int keff = static_cast<int>(groups_.empty() ? 0 : groups_[0].size());
        pair_x_.resize(static_cast<Eigen::Index>(anchor_idx_.size()) * keff, h + 3);
        for (std::size_t a = 0; a < groups_.size(); ++a)
            for (int t2 = 0; t2 < keff; ++t2) {
                const int j = groups_[a][static_cast<std::size_t>(t2)];
                const auto row = static_cast<Eigen::Index>(a) * keff + t2;
                pair_x_.block(row, 0, 1, h) = h0_.row(j);
                pair_x_.block(row, h, 1, 3) = points.row(j) - anchor_pts_.row(static_cast<Eigen::Index>(a));
            }
        pair_pre_ = lin_pair_.forward(pair_x_);
        pair_u_ = nn::silu(pair_pre_);
        pooled_ = Mat::Zero(static_cast<Eigen::Index>(groups_.size()), h);
        for (std::size_t a = 0; a < groups_.size(); ++a) {
            for (int t2 = 0; t2 < keff; ++t2)
                pooled_.row(static_cast<Eigen::Index>(a)) += pair_u_.row(static_cast<Eigen::Index>(a) * keff + t2);
            pooled_.row(static_cast<Eigen::Index>(a)) /= std::max(1, keff);
        }
        pre1_ = lin_enc1_.forward(pooled_);
        if (cfg.with_time) add_time(pre1_, tp1_);
        h1_ = nn::silu(pre1_);

        // global level (mean over the anchor sequence)
        grow_pre_ = lin_g1_.forward(h1_);
        grow_ = nn::silu(grow_pre_);
        Mat g = Mat::Zero(1, h);
        for (Eigen::Index a = 0; a < grow_.rows(); ++a) g += grow_.row(a);
        g /= static_cast<double>(grow_.rows());
        g2_pre_ = lin_g2_.forward(g);
        if (cfg.with_time) add_time(g2_pre_, tp2_);
        g2_ = nn::silu(g2_pre_);

        // decode to anchors
        dec1_x_.resize(h1_.rows(), 2 * h);
        dec1_x_.leftCols(h) = h1_;
        dec1_x_.rightCols(h) = g2_.replicate(h1_.rows(), 1);
        dec1_pre_ = lin_dec1_.forward(dec1_x_);
        if (cfg.with_time) add_time(dec1_pre_, tp3_);
        hd1_ = nn::silu(dec1_pre_);

        // decode to points with the h0 skip
        interp_ = build_interpolation(anchor_pts_, points);
        const Mat up = interpolate(hd1_, interp_);
        dec0_x_.resize(n, 2 * h);
        dec0_x_.leftCols(h) = h0_;
        dec0_x_.rightCols(h) = up;
        dec0_pre_ = lin_dec0_.forward(dec0_x_);
        if (cfg.with_time) add_time(dec0_pre_, tp4_);
        return nn::silu(dec0_pre_);
    }

    // Returns d(loss)/d(feats); parameter gradients accumulate internally.
    Mat backward(const Mat& d_out) {
        const int h = cfg.width;
        const Eigen::Index n = d_out.rows();
        Mat d_pre0_total = Mat::Zero(n, h);

        Mat d_dec0_pre = nn::silu_backward(dec0_pre_, d_out);
        if (cfg.with_time) time_backward(d_dec0_pre, tp4_);
        const Mat d_dec0_x = lin_dec0_.backward(d_dec0_pre);
        Mat d_h0 = d_dec0_x.leftCols(h);
        const Mat d_up = d_dec0_x.rightCols(h);

        Mat d_hd1 = Mat::Zero(hd1_.rows(), h);
        interpolate_backward(d_up, interp_, d_hd1);

        Mat d_dec1_pre = nn::silu_backward(dec1_pre_, d_hd1);
        if (cfg.with_time) time_backward(d_dec1_pre, tp3_);
        const Mat d_dec1_x = lin_dec1_.backward(d_dec1_pre);
        Mat d_h1 = d_dec1_x.leftCols(h);
        Mat d_g2 = Mat::Zero(1, h);
        for (Eigen::Index a = 0; a < d_dec1_x.rows(); ++a) d_g2 += d_dec1_x.row(a).rightCols(h);

        Mat d_g2_pre = nn::silu_backward(g2_pre_, d_g2);
        if (cfg.with_time) time_backward(d_g2_pre, tp2_);
        const Mat d_g = lin_g2_.backward(d_g2_pre);
        Mat d_grow = d_g.replicate(grow_.rows(), 1) / static_cast<double>(grow_.rows());
        const Mat d_grow_pre = nn::silu_backward(grow_pre_, d_grow);
        d_h1 += lin_g1_.backward(d_grow_pre);

        Mat d_pre1 = nn::silu_backward(pre1_, d_h1);
        if (cfg.with_time) time_backward(d_pre1, tp1_);
        const Mat d_pooled = lin_enc1_.backward(d_pre1);

        const int keff = static_cast<int>(groups_.empty() ? 0 : groups_[0].size());
        Mat d_pair_u(pair_u_.rows(), h);
        for (std::size_t a = 0; a < groups_.size(); ++a)
            for (int t2 = 0; t2 < keff; ++t2)
                d_pair_u.row(static_cast<Eigen::Index>(a) * keff + t2) =
                    d_pooled.row(static_cast<Eigen::Index>(a)) / std::max(1, keff);
        const Mat d_pair_pre = nn::silu_backward(pair_pre_, d_pair_u);
        const Mat d_pair_x = lin_pair_.backward(d_pair_pre);
        for (std::size_t a = 0; a < groups_.size(); ++a)
            for (int t2 = 0; t2 < keff; ++t2) {
                const int j = groups_[a][static_cast<std::size_t>(t2)];
                d_h0.row(j) += d_pair_x.block(static_cast<Eigen::Index>(a) * keff + t2, 0, 1, h);
            }

        d_pre0_total = nn::silu_backward(pre0_, d_h0);
        if (cfg.with_time) time_backward(d_pre0_total, tp0_);
        return lin_in_.backward(d_pre0_total);
    }

    void collect(const std::string& prefix, std::vector<nn::TensorRef>& out) {
        lin_in_.collect(prefix + ".in", out);
        lin_pair_.collect(prefix + ".pair", out);
        lin_enc1_.collect(prefix + ".enc1", out);
        lin_g1_.collect(prefix + ".g1", out);
        lin_g2_.collect(prefix + ".g2", out);
        lin_dec1_.collect(prefix + ".dec1", out);
        lin_dec0_.collect(prefix + ".dec0", out);
        if (cfg.with_time) {
            tp0_.collect(prefix + ".t0", out);
            tp1_.collect(prefix + ".t1", out);
            tp2_.collect(prefix + ".t2", out);
            tp3_.collect(prefix + ".t3", out);
            tp4_.collect(prefix + ".t4", out);
        }
    }

private:
    void add_time(Mat& pre, nn::Linear& proj) {
        const Mat shift = proj.apply(temb_);
        pre.rowwise() += shift.row(0);
    }
    void time_backward(const Mat& d_pre, nn::Linear& proj) {
        Mat d_shift = Mat::Zero(1, d_pre.cols());
        for (Eigen::Index r = 0; r < d_pre.rows(); ++r) d_shift += d_pre.row(r);
        proj.cache_x = temb_;
        proj.backward(d_shift);
    }
    std::vector<nn::Linear*> time_projs() { return {&tp0_, &tp1_, &tp2_, &tp3_, &tp4_}; }

    nn::Linear lin_in_, lin_pair_, lin_enc1_, lin_g1_, lin_g2_, lin_dec1_, lin_dec0_;
    nn::Linear tp0_, tp1_, tp2_, tp3_, tp4_;

    // forward caches
    Mat temb_;
    Mat pre0_, h0_;
    std::vector<int> anchor_idx_;
    Mat anchor_pts_;
    std::vector<std::vector<int>> groups_;
    Mat pair_x_, pair_pre_, pair_u_, pooled_, pre1_, h1_;
    Mat grow_pre_, grow_, g2_pre_, g2_;
    Mat dec1_x_, dec1_pre_, hd1_;
    Interpolation interp_;
    Mat dec0_x_, dec0_pre_;
};

} // namespace hugdiff
