// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "hugdiff/common/error.hpp"

namespace hugdiff {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

inline int sh_dim(int degree) { return 3 * (degree + 1) * (degree + 1); }

// Activated per-primitive attributes. Rows are primitives.
//   positions: N x 3 (scene units, meters)
//   opacities: N     in [0, 1]
//   scales:    N x 3 per-axis standard deviations, strictly positive
//   rotations: N x 4 unit quaternions (w, x, y, z)
//   sh_coeffs: N x d with d = 3*(sh_degree+1)^2, layout [basis][rgb]
struct GaussianAttributeSet {
    Mat positions;
    Vec opacities;
    Mat scales;
    Mat rotations;
    Mat sh_coeffs;
    int sh_degree = 1;

    Eigen::Index size() const { return positions.rows(); }

    // Throws ShapeError / InvalidAttribute / NormalizationError when an
    // invariant is broken; tolerance on unit quaternions is 1e-6.
    void validate() const {
        const Eigen::Index n = positions.rows();
        if (positions.cols() != 3 || opacities.size() != n || scales.rows() != n ||
            scales.cols() != 3 || rotations.rows() != n || rotations.cols() != 4 ||
            sh_coeffs.rows() != n) {
            throw ShapeError("attribute arrays disagree on shape");
        }
        if (sh_coeffs.cols() != sh_dim(sh_degree)) {
            throw ShapeError("sh_coeffs has " + std::to_string(sh_coeffs.cols()) +
                             " columns, expected " + std::to_string(sh_dim(sh_degree)) +
                             " for degree " + std::to_string(sh_degree));
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!positions.row(i).allFinite() || !scales.row(i).allFinite() ||
                !rotations.row(i).allFinite() || !sh_coeffs.row(i).allFinite() ||
                !std::isfinite(opacities[i])) {
                throw InvalidAttribute("non-finite attribute", static_cast<std::size_t>(i));
            }
            if (opacities[i] < 0.0 || opacities[i] > 1.0) {
                throw InvalidAttribute("opacity outside [0,1]", static_cast<std::size_t>(i));
            }
            if (scales.row(i).minCoeff() <= 0.0) {
                throw InvalidAttribute("non-positive scale", static_cast<std::size_t>(i));
            }
            const double norm = rotations.row(i).norm();
            if (std::abs(norm - 1.0) > 1e-6) {
                throw NormalizationError("quaternion at index " + std::to_string(i) +
                                         " has norm " + std::to_string(norm));
            }
        }
    }

    bool operator==(const GaussianAttributeSet& o) const {
        return sh_degree == o.sh_degree && positions == o.positions &&
               opacities == o.opacities && scales == o.scales && rotations == o.rotations &&
               sh_coeffs == o.sh_coeffs;
    }
};

// Pre-activation attributes as produced by network heads. Same layout as
// GaussianAttributeSet but with unbounded opacity/scale and unnormalized
// rotations; activate() maps them into the valid domains.
struct RawAttributeSet {
    Mat positions;
    Vec opacities_raw;
    Mat scales_raw;
    Mat rotations_raw;
    Mat sh_coeffs;
    int sh_degree = 1;

    Eigen::Index size() const { return positions.rows(); }
};

// Upper clamp on activated scales; forbids degenerate giant splats from
// untrained networks.
inline constexpr double kScaleMax = 0.1;
inline constexpr double kScaleMin = 1e-6;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// sigmoid for opacity, clamped exp for scale, normalization for rotation
// (zero vector maps to identity). Positions and SH pass through.
inline GaussianAttributeSet activate(const RawAttributeSet& raw) {
    const Eigen::Index n = raw.positions.rows();
    if (raw.opacities_raw.size() != n || raw.scales_raw.rows() != n ||
        raw.rotations_raw.rows() != n || raw.sh_coeffs.rows() != n) {
        throw ShapeError("raw attribute arrays disagree on shape");
    }
    GaussianAttributeSet out;
    out.positions = raw.positions;
    out.sh_coeffs = raw.sh_coeffs;
    out.sh_degree = raw.sh_degree;
    out.opacities.resize(n);
    out.scales.resize(n, 3);
    out.rotations.resize(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(raw.opacities_raw[i]) || !raw.scales_raw.row(i).allFinite() ||
            !raw.rotations_raw.row(i).allFinite() || !raw.positions.row(i).allFinite() ||
            !raw.sh_coeffs.row(i).allFinite()) {
            throw InvalidAttribute("non-finite raw value", static_cast<std::size_t>(i));
        }
        out.opacities[i] = sigmoid(raw.opacities_raw[i]);
        for (int a = 0; a < 3; ++a) {
            out.scales(i, a) = std::clamp(std::exp(raw.scales_raw(i, a)), kScaleMin, kScaleMax);
        }
        const double norm = raw.rotations_raw.row(i).norm();
        if (norm == 0.0) {
            out.rotations.row(i) << 1.0, 0.0, 0.0, 0.0;
        } else {
            out.rotations.row(i) = raw.rotations_raw.row(i) / norm;
        }
    }
    return out;
}

// Chain rule through activate(). Given gradients with respect to the
// activated values, returns gradients with respect to the raw ones.
// `activated` must be activate(raw) for the same raw set.
struct ActivationGrads {
    Vec opacities_raw;
    Mat scales_raw;
    Mat rotations_raw;
    Mat sh_coeffs;
};

inline ActivationGrads activate_backward(const RawAttributeSet& raw,
                                         const GaussianAttributeSet& activated,
                                         const Vec& d_opacity, const Mat& d_scale,
                                         const Mat& d_rotation, const Mat& d_sh) {
    const Eigen::Index n = raw.positions.rows();
    ActivationGrads g;
    g.opacities_raw.resize(n);
    g.scales_raw.resize(n, 3);
    g.rotations_raw.resize(n, 4);
    g.sh_coeffs = d_sh;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = activated.opacities[i];
        g.opacities_raw[i] = d_opacity[i] * a * (1.0 - a);
        for (int c = 0; c < 3; ++c) {
            const double e = std::exp(raw.scales_raw(i, c));
            const bool clamped = e <= kScaleMin || e >= kScaleMax;
            g.scales_raw(i, c) = clamped ? 0.0 : d_scale(i, c) * e;
        }
        const double norm = raw.rotations_raw.row(i).norm();
        if (norm == 0.0) {
            g.rotations_raw.row(i).setZero();
        } else {
            const Vec4 q = activated.rotations.row(i).transpose();
            const Vec4 dq = d_rotation.row(i).transpose();
            g.rotations_raw.row(i) = ((dq - q * q.dot(dq)) / norm).transpose();
        }
    }
    return g;
}

} // namespace hugdiff
