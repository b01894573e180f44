// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "hugdiff/conditioning/body_prior.hpp"
#include "hugdiff/conditioning/encoder.hpp"
#include "hugdiff/nets/pointops.hpp"
#include "hugdiff/render/camera.hpp"

namespace hugdiff {

// The diffusion condition: fixed positions plus per-point pixel-aligned and
// body-semantic features with the visibility partition.
struct ConditioningBundle {
    Mat positions;      // N x 3
    Mat pixel_aligned;  // N x F_beta
    Mat body_semantic;  // N x F_gamma
    std::vector<bool> visibility;

    void validate() const {
        const Eigen::Index n = positions.rows();
        if (pixel_aligned.rows() != n || body_semantic.rows() != n ||
            static_cast<Eigen::Index>(visibility.size()) != n) {
            throw ShapeError("conditioning bundle fields disagree on point count");
        }
        if (!pixel_aligned.allFinite() || !body_semantic.allFinite()) {
            throw InvalidAttribute("non-finite conditioning feature", 0);
        }
    }
};

namespace detail {

// One bilinear tap into a feature map; weights of off-image corners are
// dropped (zero contribution, zero gradient).
struct BilinearTap {
    std::array<Eigen::Index, 4> rows{};
    std::array<double, 4> w{};
    int count = 0;
};

inline BilinearTap bilinear_tap(double u, double v, int stride, int map_h, int map_w) {
    BilinearTap tap;
    // map texel (i, j) is centered at ((j + 0.5) * stride, (i + 0.5) * stride)
    const double gx = u / stride - 0.5;
    const double gy = v / stride - 0.5;
    const int x0 = static_cast<int>(std::floor(gx));
    const int y0 = static_cast<int>(std::floor(gy));
    const double fx = gx - x0, fy = gy - y0;
    const double weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int k = 0; k < 4; ++k) {
        if (xs[k] < 0 || xs[k] >= map_w || ys[k] < 0 || ys[k] >= map_h) continue;
        tap.rows[static_cast<std::size_t>(tap.count)] = static_cast<Eigen::Index>(ys[k]) * map_w + xs[k];
        tap.w[static_cast<std::size_t>(tap.count)] = weights[k];
        ++tap.count;
    }
    return tap;
}

} // namespace detail

// Pixel-aligned features: each point projects into the front and the back
// camera and bilinearly samples every encoder scale of both images;
// beta = [front feats, back feats, visibility flag]. Points projecting
// outside an image sample zeros there. Keeps sampling caches so gradients
// can flow back into the encoder.
class PixelAlignedFeatures {
public:
    static int dim() { return 2 * ImageEncoder::feature_dim() + 1; }

    Mat forward(ImageEncoder& encoder, const Image& front_image, const Image& back_image,
                const Mat& positions, const std::vector<bool>& visibility,
                const CameraView& cam_front, const CameraView& cam_back) {
        act_front_ = encoder.encode(front_image);
        act_back_ = encoder.encode(back_image);
        const Eigen::Index n = positions.rows();
        Mat beta = Mat::Zero(n, dim());
        taps_front_.assign(static_cast<std::size_t>(n), {});
        taps_back_.assign(static_cast<std::size_t>(n), {});
        sample_side(act_front_, positions, cam_front, 0, beta, taps_front_);
        sample_side(act_back_, positions, cam_back, ImageEncoder::feature_dim(), beta, taps_back_);
        for (Eigen::Index i = 0; i < n; ++i)
            beta(i, dim() - 1) = visibility[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        return beta;
    }

    // Scatters d_beta back into the encoder parameters.
    void backward(ImageEncoder& encoder, const Mat& d_beta) {
        std::array<Mat, 3> d_front, d_back;
        for (int l = 0; l < 3; ++l) {
            d_front[static_cast<std::size_t>(l)] = Mat::Zero(act_front_.maps[static_cast<std::size_t>(l)].rows(),
                                                             act_front_.maps[static_cast<std::size_t>(l)].cols());
            d_back[static_cast<std::size_t>(l)] = Mat::Zero(act_back_.maps[static_cast<std::size_t>(l)].rows(),
                                                            act_back_.maps[static_cast<std::size_t>(l)].cols());
        }
        scatter_side(d_beta, 0, taps_front_, d_front);
        scatter_side(d_beta, ImageEncoder::feature_dim(), taps_back_, d_back);
        encoder.backward(act_front_, d_front);
        encoder.backward(act_back_, d_back);
    }

private:
    struct PointTaps {
        std::array<detail::BilinearTap, 3> per_scale;
        bool inside = false;
    };

    static void sample_side(const EncoderActivations& act, const Mat& positions,
                            const CameraView& cam, int col_offset, Mat& beta,
                            std::vector<PointTaps>& taps) {
        const Mat3 w = cam.rotation();
        const Vec3 t = cam.translation();
        for (Eigen::Index i = 0; i < positions.rows(); ++i) {
            const Vec3 pc = w * positions.row(i).transpose() + t;
            if (pc.z() <= 0.0) continue;
            const double u = cam.fx * pc.x() / pc.z() + cam.cx;
            const double v = cam.fy * pc.y() / pc.z() + cam.cy;
            if (u < 0.0 || u >= cam.width || v < 0.0 || v >= cam.height) continue;
            auto& pt = taps[static_cast<std::size_t>(i)];
            pt.inside = true;
            int col = col_offset;
            for (int l = 0; l < 3; ++l) {
                const auto& map = act.maps[static_cast<std::size_t>(l)];
                const int ch = static_cast<int>(map.cols());
                auto& tap = pt.per_scale[static_cast<std::size_t>(l)];
                tap = detail::bilinear_tap(u, v, ImageEncoder::kStrides[static_cast<std::size_t>(l)],
                                           act.map_h[static_cast<std::size_t>(l)],
                                           act.map_w[static_cast<std::size_t>(l)]);
                for (int k = 0; k < tap.count; ++k)
                    beta.block(i, col, 1, ch) += tap.w[static_cast<std::size_t>(k)] *
                                                 map.row(tap.rows[static_cast<std::size_t>(k)]);
                col += ch;
            }
        }
    }

    static void scatter_side(const Mat& d_beta, int col_offset, const std::vector<PointTaps>& taps,
                             std::array<Mat, 3>& d_maps) {
        for (Eigen::Index i = 0; i < d_beta.rows(); ++i) {
            const auto& pt = taps[static_cast<std::size_t>(i)];
            if (!pt.inside) continue;
            int col = col_offset;
            for (int l = 0; l < 3; ++l) {
                auto& dm = d_maps[static_cast<std::size_t>(l)];
                const int ch = static_cast<int>(dm.cols());
                const auto& tap = pt.per_scale[static_cast<std::size_t>(l)];
                for (int k = 0; k < tap.count; ++k)
                    dm.row(tap.rows[static_cast<std::size_t>(k)]) +=
                        tap.w[static_cast<std::size_t>(k)] * d_beta.block(i, col, 1, ch);
                col += ch;
            }
        }
    }

    EncoderActivations act_front_, act_back_;
    std::vector<PointTaps> taps_front_, taps_back_;
};

// Nearest-template lookup feeding the semantic embeddings.
struct SemanticLookup {
    std::vector<int> index;
    Vec distance;
    std::vector<int> label;
};

inline SemanticLookup semantic_lookup(const Mat& positions, const BodyPrior& prior) {
    prior.validate();
    const auto nearest = knn_to_queries(prior.template_points, positions, 1);
    SemanticLookup out;
    out.index.resize(static_cast<std::size_t>(positions.rows()));
    out.distance.resize(positions.rows());
    out.label.resize(static_cast<std::size_t>(positions.rows()));
    for (Eigen::Index i = 0; i < positions.rows(); ++i) {
        const int m = nearest[static_cast<std::size_t>(i)][0];
        out.index[static_cast<std::size_t>(i)] = m;
        out.distance[i] = (positions.row(i) - prior.template_points.row(m)).norm();
        out.label[static_cast<std::size_t>(i)] = prior.part_labels[static_cast<std::size_t>(m)];
    }
    return out;
}

// gamma = concat(embed_index, embed_distance, embed_label); trainable
// tables and a small head, dims 16/8/16 by default.
struct BodySemanticConfig {
    int index_dim = 16;
    int dist_dim = 8;
    int label_dim = 16;
};

class BodySemanticEmbedder {
public:
    BodySemanticConfig cfg;

    BodySemanticEmbedder(const BodyPrior& prior, const BodySemanticConfig& cfg, Rng& rng)
        : cfg(cfg) {
        index_emb_.init(rng, static_cast<int>(prior.size()), cfg.index_dim);
        label_emb_.init(rng, prior.num_parts, cfg.label_dim);
        dist_lin_.init(rng, 1, cfg.dist_dim);
    }

    int dim() const { return cfg.index_dim + cfg.dist_dim + cfg.label_dim; }

    Mat forward(const Mat& positions, const BodyPrior& prior) {
        const auto lookup = semantic_lookup(positions, prior);
        const Eigen::Index n = positions.rows();
        Mat gamma(n, dim());
        gamma.leftCols(cfg.index_dim) = index_emb_.forward(lookup.index);
        dist_pre_ = dist_lin_.forward(lookup.distance);
        gamma.middleCols(cfg.index_dim, cfg.dist_dim) = nn::silu(dist_pre_);
        gamma.rightCols(cfg.label_dim) = label_emb_.forward(lookup.label);
        return gamma;
    }

    void backward(const Mat& d_gamma) {
        index_emb_.backward(d_gamma.leftCols(cfg.index_dim));
        dist_lin_.backward(
            nn::silu_backward(dist_pre_, d_gamma.middleCols(cfg.index_dim, cfg.dist_dim)));
        label_emb_.backward(d_gamma.rightCols(cfg.label_dim));
    }

    void collect(const std::string& prefix, std::vector<nn::TensorRef>& out) {
        index_emb_.collect(prefix + ".index", out);
        dist_lin_.collect(prefix + ".dist", out);
        label_emb_.collect(prefix + ".label", out);
    }

private:
    nn::Embedding index_emb_, label_emb_;
    nn::Linear dist_lin_;
    Mat dist_pre_;
};

} // namespace hugdiff
