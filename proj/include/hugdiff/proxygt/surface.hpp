// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "hugdiff/common/error.hpp"
#include "hugdiff/common/rng.hpp"
#include "hugdiff/core/types.hpp"
#include "hugdiff/nets/pointops.hpp"

namespace hugdiff {

struct TriangleMesh {
    Mat vertices;          // V x 3
    Eigen::MatrixXi faces; // F x 3
    Mat vertex_colors;     // V x 3 or empty
};

struct ColoredCloud {
    Mat points; // P x 3
    Mat colors; // P x 3 or empty
};

// Ground-truth body surface: a triangle mesh or a dense colored point cloud.
struct SurfaceSource {
    enum class Kind { Mesh, Cloud } kind = Kind::Cloud;
    TriangleMesh mesh;
    ColoredCloud cloud;

    static SurfaceSource from_mesh(TriangleMesh m) {
        SurfaceSource s;
        s.kind = Kind::Mesh;
        s.mesh = std::move(m);
        return s;
    }
    static SurfaceSource from_cloud(ColoredCloud c) {
        SurfaceSource s;
        s.kind = Kind::Cloud;
        s.cloud = std::move(c);
        return s;
    }
};

struct SampledSurface {
    Mat positions; // N x 3
    Mat colors;    // N x 3, mid-gray when the source carries no color
};

namespace detail {

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

} // namespace detail

// Area-weighted uniform sampling on meshes; farthest-point subsampling on
// point clouds. Deterministic per seed.
inline SampledSurface sample_surface(const SurfaceSource& source, int n, std::uint64_t seed) {
    if (n <= 0) throw InsufficientPoints("requested sample count must be positive");
    SampledSurface out;
    out.positions.resize(n, 3);
    out.colors = Mat::Constant(n, 3, 0.5);
    Rng rng(seed);

    if (source.kind == SurfaceSource::Kind::Mesh) {
        const auto& mesh = source.mesh;
        const Eigen::Index nf = mesh.faces.rows();
        if (nf == 0) throw EmptySurface("mesh has no faces");
        std::vector<double> cumulative(static_cast<std::size_t>(nf));
        double total = 0.0;
        for (Eigen::Index f = 0; f < nf; ++f) {
            const Vec3 a = mesh.vertices.row(mesh.faces(f, 0)).transpose();
            const Vec3 b = mesh.vertices.row(mesh.faces(f, 1)).transpose();
            const Vec3 c = mesh.vertices.row(mesh.faces(f, 2)).transpose();
            total += detail::triangle_area(a, b, c);
            cumulative[static_cast<std::size_t>(f)] = total;
        }
        if (total <= 0.0) throw EmptySurface("mesh has zero area");
        const bool colored = mesh.vertex_colors.rows() == mesh.vertices.rows();
        for (int i = 0; i < n; ++i) {
            const double r = rng.uniform() * total;
            const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), r);
            const Eigen::Index f = static_cast<Eigen::Index>(it - cumulative.begin());
            // uniform barycentric coordinates
            const double su = std::sqrt(rng.uniform());
            const double v = rng.uniform();
            const double w0 = 1.0 - su;
            const double w1 = su * (1.0 - v);
            const double w2 = su * v;
            const int i0 = mesh.faces(f, 0), i1 = mesh.faces(f, 1), i2 = mesh.faces(f, 2);
            out.positions.row(i) = w0 * mesh.vertices.row(i0) + w1 * mesh.vertices.row(i1) +
                                   w2 * mesh.vertices.row(i2);
            if (colored) {
                out.colors.row(i) = w0 * mesh.vertex_colors.row(i0) +
                                    w1 * mesh.vertex_colors.row(i1) +
                                    w2 * mesh.vertex_colors.row(i2);
            }
        }
        return out;
    }

    const auto& cloud = source.cloud;
    if (cloud.points.rows() == 0) throw EmptySurface("point cloud is empty");
    if (cloud.points.rows() < n) {
        throw InsufficientPoints("cloud holds " + std::to_string(cloud.points.rows()) +
                                 " points, requested " + std::to_string(n));
    }
    const auto idx = farthest_point_sample(cloud.points, n, seed);
    const bool colored = cloud.colors.rows() == cloud.points.rows();
    for (int i = 0; i < n; ++i) {
        out.positions.row(i) = cloud.points.row(idx[static_cast<std::size_t>(i)]);
        if (colored) out.colors.row(i) = cloud.colors.row(idx[static_cast<std::size_t>(i)]);
    }
    return out;
}

inline Mat sample_positions(const SurfaceSource& source, int n, std::uint64_t seed) {
    return sample_surface(source, n, seed).positions;
}

} // namespace hugdiff
