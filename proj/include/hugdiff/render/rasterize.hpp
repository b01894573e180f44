// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hugdiff/common/error.hpp"
#include "hugdiff/render/image.hpp"
#include "hugdiff/render/project.hpp"

namespace hugdiff {

namespace detail {

// Splat order and per-pixel candidate lists. Splats are globally sorted by
// (depth, primitive index); pushing them into per-pixel buckets in that
// order keeps every bucket depth-sorted.
struct RasterPlan {
    std::vector<std::uint32_t> order;                // visible splats, sorted
    std::vector<std::vector<std::uint32_t>> pixels;  // candidate splat ids per pixel
};

inline RasterPlan plan_raster(const Projection& proj, int width, int height) {
    RasterPlan plan;
    for (std::uint32_t i = 0; i < proj.splats.size(); ++i) {
        if (proj.mask[i]) plan.order.push_back(i);
    }
    std::sort(plan.order.begin(), plan.order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double da = proj.splats[a].depth, db = proj.splats[b].depth;
        if (da != db) return da < db;
        return a < b;
    });
    plan.pixels.assign(static_cast<std::size_t>(width) * height, {});
    for (const std::uint32_t id : plan.order) {
        const ProjectedSplat& s = proj.splats[id];
        // conservative 3-sigma bounding box from the largest eigenvalue
        const double a = s.cov2d(0, 0), b = s.cov2d(0, 1), c = s.cov2d(1, 1);
        const double half_tr = 0.5 * (a + c);
        const double det_root = std::sqrt(std::max(0.0, half_tr * half_tr - (a * c - b * b)));
        const double radius = 3.0 * std::sqrt(std::max(1e-12, half_tr + det_root));
        const int x0 = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - radius - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean2d.x() + radius - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - radius - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean2d.y() + radius - 0.5)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                plan.pixels[static_cast<std::size_t>(y) * width + x].push_back(id);
    }
    return plan;
}

} // namespace detail

// Front-to-back alpha compositing of depth-sorted splats over a black
// background. Contribution of splat i at a pixel is
// g_i = alpha_i * exp(-0.5 * d^T cov2d^{-1} d), cut off at the 3-sigma
// ellipse; color accumulates with transmittance prod(1 - g_j).
inline RenderedImage rasterize(const GaussianAttributeSet& attrs, const CameraView& cam,
                               const Projection& proj) {
    RenderedImage out;
    out.rgb = Image(cam.height, cam.width, 3);
    out.alpha = Image(cam.height, cam.width, 1);
    const auto plan = detail::plan_raster(proj, cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const auto& bucket = plan.pixels[static_cast<std::size_t>(y) * cam.width + x];
            if (bucket.empty()) continue;
            const Eigen::Vector2d pix(x + 0.5, y + 0.5);
            double transmittance = 1.0;
            Vec3 rgb = Vec3::Zero();
            double alpha_acc = 0.0;
            for (const std::uint32_t id : bucket) {
                const ProjectedSplat& s = proj.splats[id];
                const Eigen::Vector2d d = pix - s.mean2d;
                const double q = d.dot(s.conic * d);
                if (q > kCutoffSigmaSq) continue;
                const double g = attrs.opacities[id] * std::exp(-0.5 * q);
                rgb += s.color * (g * transmittance);
                alpha_acc += g * transmittance;
                transmittance *= (1.0 - g);
            }
            for (int c = 0; c < 3; ++c) out.rgb.at(y, x, c) = std::min(1.0, std::max(0.0, rgb[c]));
            out.alpha.at(y, x, 0) = std::min(1.0, std::max(0.0, alpha_acc));
        }
    }
    return out;
}

inline RenderedImage render(const GaussianAttributeSet& attrs, const CameraView& cam) {
    attrs.validate();
    cam.validate();
    return rasterize(attrs, cam, project(attrs, cam));
}

// Backward pass of rasterize + project. `upstream` is dL/d(rgb) with shape
// H x W x 3; the clamp to [0,1] applied to the composited color is treated
// as identity inside (0,1) and zero-gradient outside.
inline AttributeGrads render_gradients(const GaussianAttributeSet& attrs, const CameraView& cam,
                                       const Image& upstream) {
    attrs.validate();
    cam.validate();
    if (upstream.height != cam.height || upstream.width != cam.width || upstream.channels != 3) {
        throw ShapeError("upstream gradient shape does not match camera resolution");
    }
    for (const double v : upstream.data) {
        if (!std::isfinite(v)) throw InvalidGradient("non-finite upstream gradient");
    }

    const Projection proj = project(attrs, cam);
    const auto plan = detail::plan_raster(proj, cam.width, cam.height);
    std::vector<SplatGrads> splat_grads(proj.splats.size());

    std::vector<double> gs, qs, trans;
    std::vector<std::uint32_t> hit;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const auto& bucket = plan.pixels[static_cast<std::size_t>(y) * cam.width + x];
            if (bucket.empty()) continue;
            const Eigen::Vector2d pix(x + 0.5, y + 0.5);
            const Vec3 dpix(upstream.at(y, x, 0), upstream.at(y, x, 1), upstream.at(y, x, 2));

            // forward replay for this pixel
            gs.clear(); qs.clear(); trans.clear(); hit.clear();
            double transmittance = 1.0;
            Vec3 rgb = Vec3::Zero();
            for (const std::uint32_t id : bucket) {
                const ProjectedSplat& s = proj.splats[id];
                const Eigen::Vector2d d = pix - s.mean2d;
                const double q = d.dot(s.conic * d);
                if (q > kCutoffSigmaSq) continue;
                const double g = attrs.opacities[id] * std::exp(-0.5 * q);
                hit.push_back(id);
                gs.push_back(g);
                qs.push_back(q);
                trans.push_back(transmittance);
                rgb += s.color * (g * transmittance);
                transmittance *= (1.0 - g);
            }
            if (hit.empty()) continue;
            // final clamp mask
            Vec3 dpix_eff = dpix;
            for (int c = 0; c < 3; ++c) {
                if (rgb[c] < 0.0 || rgb[c] > 1.0) dpix_eff[c] = 0.0;
            }

            // reverse sweep; `behind` is the composite of everything after i
            // with the shared transmittance factor removed
            Vec3 behind = Vec3::Zero();
            for (int k = static_cast<int>(hit.size()) - 1; k >= 0; --k) {
                const std::uint32_t id = hit[static_cast<std::size_t>(k)];
                const ProjectedSplat& s = proj.splats[id];
                const double g = gs[static_cast<std::size_t>(k)];
                const double q = qs[static_cast<std::size_t>(k)];
                const double ti = trans[static_cast<std::size_t>(k)];
                SplatGrads& sg = splat_grads[id];

                sg.d_color += dpix_eff * (g * ti);
                const double dg = ti * (dpix_eff.dot(s.color) - dpix_eff.dot(behind));
                const double epow = std::exp(-0.5 * q);
                sg.d_alpha += dg * epow;
                const double dq = dg * attrs.opacities[id] * epow * (-0.5);
                const Eigen::Vector2d d = pix - s.mean2d;
                const Eigen::Vector2d conic_d = s.conic * d;
                sg.d_mean2d += -dq * 2.0 * conic_d;
                // q = d^T conic d, conic = cov2d^{-1}
                const Eigen::Matrix2d d_conic = dq * (d * d.transpose());
                sg.d_cov2d += -s.conic * d_conic * s.conic;

                behind = s.color * g + (1.0 - g) * behind;
            }
        }
    }

    AttributeGrads grads(attrs);
    project_backward(attrs, cam, proj, splat_grads, grads);
    return grads;
}

} // namespace hugdiff
