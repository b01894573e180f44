// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "hugdiff/common/error.hpp"
#include "hugdiff/core/types.hpp"
#include "hugdiff/nets/pointops.hpp"

namespace hugdiff {

// Per point, mean Euclidean distance to its k nearest neighbors (self
// excluded).
inline Vec kdist(const Mat& positions, int k) {
    const Eigen::Index n = positions.rows();
    if (n <= k) {
        throw InsufficientPoints("kdist needs more than k=" + std::to_string(k) +
                                 " points, have " + std::to_string(n));
    }
    const auto graph = knn_graph(positions, k);
    Vec out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const int j : graph.neighbors[static_cast<std::size_t>(i)])
            acc += (positions.row(i) - positions.row(j)).norm();
        out[i] = acc / k;
    }
    return out;
}

// Gaussian radius: arithmetic mean of the three scale components.
inline Vec radius(const Mat& scales) {
    return scales.rowwise().mean();
}

struct AuxConstraintLoss {
    double value = 0.0;
    Mat d_scales;  // N x 3
    Vec d_opacities;
};

// sum_n (radius(s_n) - kdist_n)^2 + sum_n (alpha_n - 1)^2, over activated
// values. `kd` is kdist(positions, k), precomputed because positions are
// fixed.
inline AuxConstraintLoss aux_constraint_loss(const Mat& scales, const Vec& opacities,
                                             const Vec& kd, bool with_gradient = true) {
    const Eigen::Index n = scales.rows();
    if (opacities.size() != n || kd.size() != n) {
        throw ShapeError("aux constraint operands disagree on length");
    }
    AuxConstraintLoss out;
    if (with_gradient) {
        out.d_scales = Mat::Zero(n, 3);
        out.d_opacities = Vec::Zero(n);
    }
    const Vec r = radius(scales);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dr = r[i] - kd[i];
        const double da = opacities[i] - 1.0;
        out.value += dr * dr + da * da;
        if (with_gradient) {
            out.d_scales.row(i).setConstant(2.0 * dr / 3.0); // d radius / d s_c = 1/3
            out.d_opacities[i] = 2.0 * da;
        }
    }
    return out;
}

} // namespace hugdiff
