// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "hugdiff/common/error.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff {

// Rotation matrix from a unit quaternion (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
         2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
         2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

// Sigma = R diag(s)^2 R^T. Eigenvalues are the squared scales.
inline Mat3 covariance_from_scale_rotation(const Vec3& scale, const Vec4& rotation) {
    if (scale.minCoeff() <= 0.0) {
        throw InvalidAttribute("scale must be strictly positive", 0);
    }
    if (std::abs(rotation.norm() - 1.0) > 1e-6) {
        throw NormalizationError("quaternion norm " + std::to_string(rotation.norm()) +
                                 " too far from 1");
    }
    const Mat3 r = quat_to_rotation(rotation);
    const Mat3 m = r * scale.asDiagonal();
    return m * m.transpose();
}

// dR/dq_k for a unit quaternion, needed when backpropagating through the
// covariance assembly.
inline void quat_rotation_grads(const Vec4& q, Mat3 dr[4]) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    dr[0] << 0, -z, y,
             z, 0, -x,
             -y, x, 0;
    dr[0] *= 2.0;
    dr[1] << 0, y, z,
             y, -2.0 * x, -w,
             z, w, -2.0 * x;
    dr[1] *= 2.0;
    dr[2] << -2.0 * y, x, w,
             x, 0, z,
             -w, z, -2.0 * y;
    dr[2] *= 2.0;
    dr[3] << -2.0 * z, -w, x,
             w, -2.0 * z, y,
             x, y, 0;
    dr[3] *= 2.0;
}

// Backward of covariance_from_scale_rotation. `d_sigma` is the upstream
// gradient on the 3x3 covariance (treated entrywise). Outputs gradients on
// the scale vector and the unit quaternion.
inline void covariance_backward(const Vec3& scale, const Vec4& rotation, const Mat3& d_sigma,
                                Vec3& d_scale, Vec4& d_rotation) {
    const Mat3 r = quat_to_rotation(rotation);
    const Mat3 m = r * scale.asDiagonal();
    // Sigma = M M^T  =>  dL/dM = (G + G^T) M
    const Mat3 dm = (d_sigma + d_sigma.transpose()) * m;
    const Mat3 drm = dm * scale.asDiagonal(); // dL/dR
    const Mat3 dsm = r.transpose() * dm;      // diag gives dL/ds
    d_scale = dsm.diagonal();
    Mat3 dr[4];
    quat_rotation_grads(rotation, dr);
    for (int k = 0; k < 4; ++k) d_rotation[k] = (drm.array() * dr[k].array()).sum();
}

} // namespace hugdiff
