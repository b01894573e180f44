// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hugdiff/core/covariance.hpp"
#include "hugdiff/core/sh.hpp"
#include "hugdiff/core/types.hpp"
#include "hugdiff/render/camera.hpp"

namespace hugdiff {

// Isotropic low-pass floor added to every projected covariance (px^2).
inline constexpr double kCov2dFloor = 0.3;
// Splat/pixel overlap cutoff at 3 sigma.
inline constexpr double kCutoffSigmaSq = 9.0;

struct ProjectedSplat {
    Eigen::Vector2d mean2d;       // pixels
    Eigen::Matrix2d cov2d;        // pixels^2, includes the low-pass floor
    Eigen::Matrix2d conic;        // cov2d^{-1}
    double depth = 0.0;           // camera z, scene units
    Vec3 color = Vec3::Zero();    // sh_to_color at the camera ray direction
    Vec3 color_pre_clamp = Vec3::Zero();
    Vec3 view_dir = Vec3::Zero(); // unit, camera center -> point
    double view_dist = 0.0;
    Vec3 p_cam = Vec3::Zero();
};

struct Projection {
    std::vector<ProjectedSplat> splats; // one per primitive, valid where mask
    std::vector<bool> mask;             // false if depth outside [near, far]
};

inline Projection project(const GaussianAttributeSet& attrs, const CameraView& cam) {
    const Eigen::Index n = attrs.size();
    Projection out;
    out.splats.resize(static_cast<std::size_t>(n));
    out.mask.assign(static_cast<std::size_t>(n), false);
    const Mat3 w = cam.rotation();
    const Vec3 t = cam.translation();
    const Vec3 cam_center = cam.center();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 p = attrs.positions.row(i).transpose();
        const Vec3 pc = w * p + t;
        if (pc.z() < cam.near || pc.z() > cam.far) continue;
        ProjectedSplat& s = out.splats[static_cast<std::size_t>(i)];
        s.p_cam = pc;
        s.depth = pc.z();
        const double inv_z = 1.0 / pc.z();
        s.mean2d = {cam.fx * pc.x() * inv_z + cam.cx, cam.fy * pc.y() * inv_z + cam.cy};
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx * inv_z, 0.0, -cam.fx * pc.x() * inv_z * inv_z,
               0.0, cam.fy * inv_z, -cam.fy * pc.y() * inv_z * inv_z;
        const Mat3 sigma = covariance_from_scale_rotation(attrs.scales.row(i).transpose(),
                                                          attrs.rotations.row(i).transpose());
        const Eigen::Matrix<double, 2, 3> tw = jac * w;
        s.cov2d = tw * sigma * tw.transpose();
        s.cov2d += kCov2dFloor * Eigen::Matrix2d::Identity();
        s.conic = s.cov2d.inverse();
        const Vec3 delta = p - cam_center;
        s.view_dist = delta.norm();
        s.view_dir = delta / s.view_dist;
        s.color = sh_to_color(attrs.sh_coeffs.row(i), s.view_dir, attrs.sh_degree,
                              &s.color_pre_clamp);
        out.mask[static_cast<std::size_t>(i)] = true;
    }
    return out;
}

// Per-splat upstream gradients produced by the rasterizer backward pass.
struct SplatGrads {
    Eigen::Vector2d d_mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d d_cov2d = Eigen::Matrix2d::Zero();
    Vec3 d_color = Vec3::Zero();
    double d_alpha = 0.0;
};

// Gradients with respect to every activated attribute.
struct AttributeGrads {
    Mat positions;
    Vec opacities;
    Mat scales;
    Mat rotations;
    Mat sh_coeffs;

    explicit AttributeGrads(const GaussianAttributeSet& attrs)
        : positions(Mat::Zero(attrs.positions.rows(), 3)),
          opacities(Vec::Zero(attrs.size())),
          scales(Mat::Zero(attrs.size(), 3)),
          rotations(Mat::Zero(attrs.size(), 4)),
          sh_coeffs(Mat::Zero(attrs.sh_coeffs.rows(), attrs.sh_coeffs.cols())) {}
};

// Chains rasterizer-level gradients back onto the attributes: through the
// projection Jacobian (both the mean path and the cov2d path), the
// covariance assembly, and the SH color evaluation.
inline void project_backward(const GaussianAttributeSet& attrs, const CameraView& cam,
                             const Projection& proj, const std::vector<SplatGrads>& upstream,
                             AttributeGrads& grads) {
    const Mat3 w = cam.rotation();
    for (Eigen::Index i = 0; i < attrs.size(); ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (!proj.mask[u]) continue;
        const ProjectedSplat& s = proj.splats[u];
        const SplatGrads& g = upstream[u];

        grads.opacities[i] += g.d_alpha;

        const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
        const double inv_z = 1.0 / z;
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx * inv_z, 0.0, -cam.fx * x * inv_z * inv_z,
               0.0, cam.fy * inv_z, -cam.fy * y * inv_z * inv_z;

        // cov2d = (J W) Sigma (J W)^T + floor
        const Mat3 sigma = covariance_from_scale_rotation(attrs.scales.row(i).transpose(),
                                                          attrs.rotations.row(i).transpose());
        const Eigen::Matrix<double, 2, 3> tw = jac * w;
        const Mat3 d_sigma = tw.transpose() * g.d_cov2d * tw;
        const Eigen::Matrix<double, 2, 3> d_tw = (g.d_cov2d + g.d_cov2d.transpose()) * tw * sigma;
        const Eigen::Matrix<double, 2, 3> d_jac = d_tw * w.transpose();

        Vec3 d_scale;
        Vec4 d_rot;
        covariance_backward(attrs.scales.row(i).transpose(), attrs.rotations.row(i).transpose(),
                            d_sigma, d_scale, d_rot);
        grads.scales.row(i) += d_scale.transpose();
        grads.rotations.row(i) += d_rot.transpose();

        // mean2d path into camera-space position
        Vec3 d_pcam = jac.transpose() * g.d_mean2d;
        // cov2d path: J itself depends on (x, y, z)
        const double iz2 = inv_z * inv_z;
        const double iz3 = iz2 * inv_z;
        d_pcam.x() += d_jac(0, 2) * (-cam.fx * iz2);
        d_pcam.y() += d_jac(1, 2) * (-cam.fy * iz2);
        d_pcam.z() += d_jac(0, 0) * (-cam.fx * iz2) + d_jac(1, 1) * (-cam.fy * iz2) +
                      d_jac(0, 2) * (2.0 * cam.fx * x * iz3) + d_jac(1, 2) * (2.0 * cam.fy * y * iz3);
        Vec3 d_pos = w.transpose() * d_pcam;

        // color path: SH coefficients and, through the view direction, position
        Eigen::RowVectorXd d_sh_row = Eigen::RowVectorXd::Zero(attrs.sh_coeffs.cols());
        const Vec3 d_dir = sh_to_color_backward(attrs.sh_coeffs.row(i), s.view_dir,
                                                attrs.sh_degree, s.color_pre_clamp, g.d_color,
                                                d_sh_row);
        grads.sh_coeffs.row(i) += d_sh_row;
        d_pos += (d_dir - s.view_dir * s.view_dir.dot(d_dir)) / s.view_dist;

        grads.positions.row(i) += d_pos.transpose();
    }
}

} // namespace hugdiff
