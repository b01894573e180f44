// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "hugdiff/core/types.hpp"
#include "hugdiff/render/camera.hpp"

namespace hugdiff {

// Visible/invisible partition from a point-depth buffer: each point splats
// its depth into a 3x3 footprint; a point is visible iff its depth stays
// within `tau` of the buffer minimum at its own pixel. Non-positive `tau`
// selects the default of 1% of the point-set bounding-box diagonal.
inline std::vector<bool> partition_visibility(const Mat& positions, const CameraView& cam,
                                              double tau = -1.0) {
    const Eigen::Index n = positions.rows();
    std::vector<bool> visible(static_cast<std::size_t>(n), false);
    if (n == 0) return visible;
    if (tau <= 0.0) {
        const Vec3 lo = positions.colwise().minCoeff().transpose();
        const Vec3 hi = positions.colwise().maxCoeff().transpose();
        tau = 0.01 * (hi - lo).norm();
    }
    const Mat3 w = cam.rotation();
    const Vec3 t = cam.translation();
    std::vector<double> buffer(static_cast<std::size_t>(cam.width) * cam.height,
                               std::numeric_limits<double>::infinity());
    std::vector<int> px(static_cast<std::size_t>(n), -1), py(static_cast<std::size_t>(n), -1);
    std::vector<double> depth(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 pc = w * positions.row(i).transpose() + t;
        if (pc.z() <= 0.0) continue;
        const int x = static_cast<int>(std::floor(cam.fx * pc.x() / pc.z() + cam.cx));
        const int y = static_cast<int>(std::floor(cam.fy * pc.y() / pc.z() + cam.cy));
        px[static_cast<std::size_t>(i)] = x;
        py[static_cast<std::size_t>(i)] = y;
        depth[static_cast<std::size_t>(i)] = pc.z();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int xx = x + dx, yy = y + dy;
                if (xx < 0 || xx >= cam.width || yy < 0 || yy >= cam.height) continue;
                auto& slot = buffer[static_cast<std::size_t>(yy) * cam.width + xx];
                slot = std::min(slot, pc.z());
            }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (px[u] < 0 || px[u] >= cam.width || py[u] < 0 || py[u] >= cam.height) continue;
        if (depth[u] <= 0.0) continue;
        const double front = buffer[static_cast<std::size_t>(py[u]) * cam.width + px[u]];
        visible[u] = depth[u] <= front + tau;
    }
    return visible;
}

} // namespace hugdiff
