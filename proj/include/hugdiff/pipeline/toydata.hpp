// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hugdiff/core/sh.hpp"
#include "hugdiff/proxygt/constraints.hpp"
#include "hugdiff/proxygt/scene.hpp"
#include "hugdiff/render/rasterize.hpp"

namespace hugdiff {

// Synthetic desk-scale subjects: textured spheres with calibrated ring
// cameras. Target images are rendered from a dense splat approximation of
// the surface, so they live in the same function class the pipeline fits.

struct ToySceneOptions {
    int resolution = 64;
    int n_views = 8;
    int dense_points = 3000;       // splats used to render the target images
    int prior_points = 300;
    double radius = 0.5;
    double camera_distance = 2.2;
    double elevation_deg = 20.0;   // cameras alternate -e/0/+e so vertical
                                   // view directions are probed
    bool azimuth_symmetric = false; // texture independent of longitude
    std::uint64_t seed = 7;
};

namespace detail {

struct ToyTexture {
    double fr1, fr2, pr1, pr2;
    double fg1, fg2, pg1, pg2;
    double fb1, fb2, pb1, pb2;
    bool symmetric;

    Vec3 color(double lat, double lon) const {
        const double u = symmetric ? 0.0 : lon;
        const double r = 0.5 + 0.32 * std::sin(fr1 * lat + pr1) * std::cos(symmetric ? 0.0 : fr2 * u + pr2);
        const double g = 0.5 + 0.32 * std::sin(fg1 * lat + pg1) * std::cos(symmetric ? 0.0 : fg2 * u + pg2);
        const double b = 0.5 + 0.32 * std::sin(fb1 * lat + pb1) * std::cos(symmetric ? 0.0 : fb2 * u + pb2);
        return Vec3(std::clamp(r, 0.05, 0.95), std::clamp(g, 0.05, 0.95),
                    std::clamp(b, 0.05, 0.95));
    }
};

inline ToyTexture make_texture(Rng& rng, bool symmetric) {
    auto freq = [&] { return 1.0 + std::floor(rng.uniform(0.0, 2.999)); };
    auto phase = [&] { return rng.uniform(0.0, 6.28318530717958647692); };
    ToyTexture t{freq(), freq(), phase(), phase(), freq(), freq(), phase(), phase(),
                 freq(), freq(), phase(), phase(), symmetric};
    return t;
}

} // namespace detail

// Dense splat set for a colored point sample: saturated opacity, isotropic
// radius from the local spacing, identity rotations, dc-only color.
inline GaussianAttributeSet splats_from_samples(const SampledSurface& samples, int sh_degree = 1,
                                                double radius_factor = 0.7) {
    const Eigen::Index n = samples.positions.rows();
    GaussianAttributeSet set;
    set.sh_degree = sh_degree;
    set.positions = samples.positions;
    set.opacities = Vec::Constant(n, 0.999);
    const Vec kd = kdist(samples.positions, 4);
    set.scales.resize(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
        set.scales.row(i).setConstant(std::clamp(kd[i] * radius_factor, kScaleMin, kScaleMax));
    set.rotations = Mat::Zero(n, 4);
    set.rotations.col(0).setOnes();
    set.sh_coeffs = Mat::Zero(n, sh_dim(sh_degree));
    for (Eigen::Index i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            set.sh_coeffs(i, c) = (samples.colors(i, c) - 0.5) / shc::C0;
    return set;
}

// UV sphere mesh with per-vertex procedural colors.
inline TriangleMesh toy_sphere_mesh(const ToySceneOptions& opts, Rng& rng) {
    const auto tex = detail::make_texture(rng, opts.azimuth_symmetric);
    const int stacks = 24, slices = 48;
    TriangleMesh mesh;
    mesh.vertices.resize((stacks + 1) * (slices + 1), 3);
    mesh.vertex_colors.resize(mesh.vertices.rows(), 3);
    for (int s = 0; s <= stacks; ++s) {
        const double lat = -1.5707963267948966 + 3.141592653589793 * s / stacks;
        for (int l = 0; l <= slices; ++l) {
            const double lon = 2.0 * 3.141592653589793 * l / slices;
            const Eigen::Index v = static_cast<Eigen::Index>(s) * (slices + 1) + l;
            mesh.vertices.row(v) << opts.radius * std::cos(lat) * std::sin(lon),
                opts.radius * std::sin(lat), opts.radius * std::cos(lat) * std::cos(lon);
            mesh.vertex_colors.row(v) = tex.color(lat, lon).transpose();
        }
    }
    std::vector<Eigen::Vector3i> faces;
    for (int s = 0; s < stacks; ++s)
        for (int l = 0; l < slices; ++l) {
            const int a = s * (slices + 1) + l;
            const int b = a + 1;
            const int c = a + (slices + 1);
            const int d = c + 1;
            faces.emplace_back(a, c, b);
            faces.emplace_back(b, c, d);
        }
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(static_cast<Eigen::Index>(i)) = faces[i];
    return mesh;
}

inline std::vector<CameraView> toy_ring_cameras(const ToySceneOptions& opts) {
    std::vector<CameraView> cams;
    for (int k = 0; k < opts.n_views; ++k) {
        const double az = 2.0 * 3.141592653589793 * k / opts.n_views;
        const double el = (k % 3 - 1) * opts.elevation_deg * 3.141592653589793 / 180.0;
        const Vec3 eye(opts.camera_distance * std::cos(el) * std::sin(az),
                       opts.camera_distance * std::sin(el),
                       -opts.camera_distance * std::cos(el) * std::cos(az));
        cams.push_back(look_at_camera(eye, Vec3(0, 0, 0), Vec3(0, 1, 0),
                                      opts.resolution * 1.2, opts.resolution * 1.2,
                                      opts.resolution, opts.resolution, 0.05, 20.0));
    }
    return cams;
}

inline BodyPrior toy_body_prior(const SurfaceSource& surface, const ToySceneOptions& opts,
                                std::uint64_t seed) {
    const auto samples = sample_surface(surface, opts.prior_points, seed);
    BodyPrior prior;
    prior.template_points = samples.positions;
    prior.num_parts = 24;
    prior.up_axis = Vec3(0, 1, 0);
    double ylo = samples.positions.col(1).minCoeff();
    double yhi = samples.positions.col(1).maxCoeff();
    if (!(yhi > ylo)) yhi = ylo + 1.0;
    prior.part_labels.resize(static_cast<std::size_t>(samples.positions.rows()));
    for (Eigen::Index i = 0; i < samples.positions.rows(); ++i) {
        int band = static_cast<int>((samples.positions(i, 1) - ylo) / (yhi - ylo) * 24);
        prior.part_labels[static_cast<std::size_t>(i)] = std::clamp(band, 0, 23);
    }
    return prior;
}

inline SceneCapture make_toy_scene(const std::string& scene_id, const ToySceneOptions& opts) {
    Rng rng(opts.seed);
    SceneCapture scene;
    scene.scene_id = scene_id;
    scene.surface = SurfaceSource::from_mesh(toy_sphere_mesh(opts, rng));
    scene.views = toy_ring_cameras(opts);
    const auto dense = sample_surface(scene.surface, opts.dense_points, opts.seed ^ 0x5a5a);
    const auto dense_set = splats_from_samples(dense);
    for (const auto& cam : scene.views) {
        scene.images.push_back(render(dense_set, cam).rgb);
    }
    scene.body_prior = toy_body_prior(scene.surface, opts, opts.seed ^ 0xb0d7);
    return scene;
}

// Ground-truth depth for one view: nearest-depth buffer of dense surface
// samples; zero marks background. `footprint` is the splat radius in
// pixels (0 keeps each sample on its own pixel for crisper depth).
inline Image render_groundtruth_depth(const SurfaceSource& surface, const CameraView& cam,
                                      int dense_points = 6000, std::uint64_t seed = 99,
                                      int footprint = 1) {
    const auto samples = sample_surface(surface, dense_points, seed);
    Image depth(cam.height, cam.width, 1, 0.0);
    Image best(cam.height, cam.width, 1, std::numeric_limits<double>::infinity());
    const Mat3 w = cam.rotation();
    const Vec3 t = cam.translation();
    for (Eigen::Index i = 0; i < samples.positions.rows(); ++i) {
        const Vec3 pc = w * samples.positions.row(i).transpose() + t;
        if (pc.z() <= cam.near || pc.z() > cam.far) continue;
        const int px = static_cast<int>(std::floor(cam.fx * pc.x() / pc.z() + cam.cx));
        const int py = static_cast<int>(std::floor(cam.fy * pc.y() / pc.z() + cam.cy));
        for (int dy = -footprint; dy <= footprint; ++dy)
            for (int dx = -footprint; dx <= footprint; ++dx) {
                const int x = px + dx, y = py + dy;
                if (x < 0 || x >= cam.width || y < 0 || y >= cam.height) continue;
                if (pc.z() < best.at(y, x, 0)) {
                    best.at(y, x, 0) = pc.z();
                    depth.at(y, x, 0) = pc.z();
                }
            }
    }
    return depth;
}

} // namespace hugdiff
