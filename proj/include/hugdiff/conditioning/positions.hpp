// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "hugdiff/common/error.hpp"
#include "hugdiff/conditioning/body_prior.hpp"
#include "hugdiff/nets/pointops.hpp"
#include "hugdiff/render/camera.hpp"
#include "hugdiff/render/image.hpp"

namespace hugdiff {

// Back-projects foreground depth pixels (depth > 0, meters) to a world-space
// partial cloud.
inline Mat backproject_depth(const Image& depth, const CameraView& cam) {
    if (depth.width != cam.width || depth.height != cam.height || depth.channels != 1) {
        throw ShapeError("depth map resolution does not match the camera");
    }
    const Mat3 r = cam.rotation();
    const Vec3 t = cam.translation();
    const Mat3 rt = r.transpose();
    std::vector<Vec3> pts;
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            const double z = depth.at(y, x, 0);
            if (!(z > 0.0) || !std::isfinite(z)) continue;
            const Vec3 pc((x + 0.5 - cam.cx) / cam.fx * z, (y + 0.5 - cam.cy) / cam.fy * z, z);
            pts.push_back(rt * (pc - t));
        }
    Mat out(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    return out;
}

struct PositionGenOptions {
    int n = 2000;
    std::uint64_t seed = 17;
    double snap_blend = 0.5; // weight of the nearest prior point when snapping
};

// Training-time passthrough: the proxy positions are the positions.
inline Mat generate_positions_from_gt(const Mat& proxy_positions) { return proxy_positions; }

// Inference-time position generation: back-project the depth map, complete
// the occluded side by mirroring through the plane that splits the subject
// front/back (through the prior centroid, normal along the horizontal
// camera axis), snap mirrored points toward the prior, merge, upsample by
// midpoint insertion and farthest-point-sample to exactly n.
inline Mat generate_positions(const CameraView& input_view, const Image& depth,
                              const BodyPrior& prior, const PositionGenOptions& opts) {
    const Mat partial = backproject_depth(depth, input_view);
    if (partial.rows() == 0) throw EmptyDepth("depth map has no foreground pixels");
    prior.validate();

    const Vec3 up = prior.up_axis.normalized();
    Vec3 fwd = input_view.forward();
    fwd -= up * fwd.dot(up);
    if (fwd.norm() < 1e-9) fwd = Vec3(0, 0, 1) - up * up.z();
    fwd.normalize();
    const Vec3 c = prior.centroid();

    // mirror and snap toward the prior surface
    Mat mirrored(partial.rows(), 3);
    for (Eigen::Index i = 0; i < partial.rows(); ++i) {
        const Vec3 p = partial.row(i).transpose();
        const Vec3 m = p - 2.0 * fwd.dot(p - c) * fwd;
        mirrored.row(i) = m.transpose();
    }
    const auto nearest = knn_to_queries(prior.template_points, mirrored, 1);
    for (Eigen::Index i = 0; i < mirrored.rows(); ++i) {
        const Vec3 m = mirrored.row(i).transpose();
        const Vec3 q = prior.template_points.row(nearest[static_cast<std::size_t>(i)][0]).transpose();
        mirrored.row(i) = ((1.0 - opts.snap_blend) * m + opts.snap_blend * q).transpose();
    }

    Mat merged(partial.rows() + mirrored.rows(), 3);
    merged.topRows(partial.rows()) = partial;
    merged.bottomRows(mirrored.rows()) = mirrored;

    // midpoint insertion on nearest-neighbor edges until enough points exist
    while (merged.rows() < opts.n) {
        const auto graph = merged.rows() > 1 ? knn_graph(merged, 1) : KnnGraph{};
        if (merged.rows() <= 1) {
            throw InsufficientPoints("cannot upsample a single-point cloud");
        }
        Mat denser(merged.rows() * 2, 3);
        denser.topRows(merged.rows()) = merged;
        for (Eigen::Index i = 0; i < merged.rows(); ++i) {
            const int j = graph.neighbors[static_cast<std::size_t>(i)][0];
            denser.row(merged.rows() + i) = 0.5 * (merged.row(i) + merged.row(j));
        }
        merged = std::move(denser);
    }

    const auto idx = farthest_point_sample(merged, opts.n, opts.seed);
    Mat out(opts.n, 3);
    for (int i = 0; i < opts.n; ++i) out.row(i) = merged.row(idx[static_cast<std::size_t>(i)]);
    return out;
}

} // namespace hugdiff
