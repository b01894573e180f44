// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "hugdiff/common/error.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff {

// Real spherical harmonics basis, graphics convention and ordering
// (degree <= 3). Values match the constants used by splatting renderers.
namespace shc {
inline constexpr double C0 = 0.28209479177387814;
inline constexpr double C1 = 0.4886025119029199;
inline constexpr double C2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                 -1.0925484305920792, 0.5462742152960396};
inline constexpr double C3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                 0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                 -0.5900435899266435};
} // namespace shc

inline int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

// Evaluates the basis functions at a unit direction. `out` must hold
// (degree+1)^2 values.
inline void sh_basis(const Vec3& dir, int degree, double* out) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    out[0] = shc::C0;
    if (degree < 1) return;
    out[1] = -shc::C1 * y;
    out[2] = shc::C1 * z;
    out[3] = -shc::C1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    out[4] = shc::C2[0] * xy;
    out[5] = shc::C2[1] * yz;
    out[6] = shc::C2[2] * (2.0 * zz - xx - yy);
    out[7] = shc::C2[3] * xz;
    out[8] = shc::C2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = shc::C3[0] * y * (3.0 * xx - yy);
    out[10] = shc::C3[1] * xy * z;
    out[11] = shc::C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = shc::C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = shc::C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = shc::C3[5] * z * (xx - yy);
    out[15] = shc::C3[6] * x * (xx - 3.0 * yy);
}

// Partial derivatives of each basis function with respect to the direction
// components. `dx/dy/dz` each hold (degree+1)^2 values.
inline void sh_basis_grad(const Vec3& dir, int degree, double* dx, double* dy, double* dz) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    dx[0] = dy[0] = dz[0] = 0.0;
    if (degree < 1) return;
    dx[1] = 0.0;          dy[1] = -shc::C1;     dz[1] = 0.0;
    dx[2] = 0.0;          dy[2] = 0.0;          dz[2] = shc::C1;
    dx[3] = -shc::C1;     dy[3] = 0.0;          dz[3] = 0.0;
    if (degree < 2) return;
    dx[4] = shc::C2[0] * y; dy[4] = shc::C2[0] * x; dz[4] = 0.0;
    dx[5] = 0.0;            dy[5] = shc::C2[1] * z; dz[5] = shc::C2[1] * y;
    dx[6] = -2.0 * shc::C2[2] * x; dy[6] = -2.0 * shc::C2[2] * y; dz[6] = 4.0 * shc::C2[2] * z;
    dx[7] = shc::C2[3] * z; dy[7] = 0.0;            dz[7] = shc::C2[3] * x;
    dx[8] = 2.0 * shc::C2[4] * x; dy[8] = -2.0 * shc::C2[4] * y; dz[8] = 0.0;
    if (degree < 3) return;
    dx[9] = shc::C3[0] * 6.0 * x * y;
    dy[9] = shc::C3[0] * (3.0 * x * x - 3.0 * y * y);
    dz[9] = 0.0;
    dx[10] = shc::C3[1] * y * z;
    dy[10] = shc::C3[1] * x * z;
    dz[10] = shc::C3[1] * x * y;
    dx[11] = shc::C3[2] * (-2.0 * x * y);
    dy[11] = shc::C3[2] * (4.0 * z * z - x * x - 3.0 * y * y);
    dz[11] = shc::C3[2] * 8.0 * y * z;
    dx[12] = shc::C3[3] * (-6.0 * x * z);
    dy[12] = shc::C3[3] * (-6.0 * y * z);
    dz[12] = shc::C3[3] * (6.0 * z * z - 3.0 * x * x - 3.0 * y * y);
    dx[13] = shc::C3[4] * (4.0 * z * z - 3.0 * x * x - y * y);
    dy[13] = shc::C3[4] * (-2.0 * x * y);
    dz[13] = shc::C3[4] * 8.0 * x * z;
    dx[14] = shc::C3[5] * 2.0 * x * z;
    dy[14] = shc::C3[5] * (-2.0 * y * z);
    dz[14] = shc::C3[5] * (x * x - y * y);
    dx[15] = shc::C3[6] * (3.0 * x * x - 3.0 * y * y);
    dy[15] = shc::C3[6] * (-6.0 * x * y);
    dz[15] = 0.0;
}

// Contracts a per-primitive SH coefficient vector (layout [basis][rgb])
// against the basis at `view_dir`, then applies the +0.5 offset and clamps
// to [0,1]. `pre_clamp`, when given, receives the unclamped values so
// callers can mask gradients.
inline Vec3 sh_to_color(const Eigen::Ref<const Eigen::RowVectorXd>& sh, const Vec3& view_dir,
                        int degree, Vec3* pre_clamp = nullptr) {
    const int nb = sh_basis_count(degree);
    if (sh.size() != 3 * nb) {
        throw ShapeError("sh vector has " + std::to_string(sh.size()) + " entries, expected " +
                         std::to_string(3 * nb) + " for degree " + std::to_string(degree));
    }
    std::array<double, 16> basis{};
    sh_basis(view_dir, degree, basis.data());
    Vec3 c = Vec3::Zero();
    for (int b = 0; b < nb; ++b) {
        for (int ch = 0; ch < 3; ++ch) c[ch] += basis[b] * sh[3 * b + ch];
    }
    c.array() += 0.5;
    if (pre_clamp) *pre_clamp = c;
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

// Backward pass of sh_to_color. `d_color` is the upstream gradient on the
// clamped output; gradients are zeroed on clamped channels. Appends into
// `d_sh` (row of size 3*nb) and returns the gradient with respect to the
// (unit) view direction.
inline Vec3 sh_to_color_backward(const Eigen::Ref<const Eigen::RowVectorXd>& sh,
                                 const Vec3& view_dir, int degree, const Vec3& pre_clamp,
                                 const Vec3& d_color, Eigen::Ref<Eigen::RowVectorXd> d_sh) {
    const int nb = sh_basis_count(degree);
    std::array<double, 16> basis{}, bx{}, by{}, bz{};
    sh_basis(view_dir, degree, basis.data());
    sh_basis_grad(view_dir, degree, bx.data(), by.data(), bz.data());
    Vec3 d_dir = Vec3::Zero();
    for (int ch = 0; ch < 3; ++ch) {
        const bool clamped = pre_clamp[ch] < 0.0 || pre_clamp[ch] > 1.0;
        const double g = clamped ? 0.0 : d_color[ch];
        if (g == 0.0) continue;
        for (int b = 0; b < nb; ++b) {
            d_sh[3 * b + ch] += g * basis[b];
            const double coef = sh[3 * b + ch];
            d_dir.x() += g * coef * bx[b];
            d_dir.y() += g * coef * by[b];
            d_dir.z() += g * coef * bz[b];
        }
    }
    return d_dir;
}

} // namespace hugdiff
