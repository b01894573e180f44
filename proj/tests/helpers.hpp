// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>

#include "hugdiff/common/rng.hpp"
#include "hugdiff/core/types.hpp"
#include "hugdiff/render/camera.hpp"

namespace testutil {

using hugdiff::CameraView;
using hugdiff::GaussianAttributeSet;
using hugdiff::Mat;
using hugdiff::RawAttributeSet;
using hugdiff::Rng;
using hugdiff::Vec;
using hugdiff::Vec3;

// Random activated set placed inside a box in front of the default camera.
inline GaussianAttributeSet random_set(Rng& rng, int n, int degree = 1,
                                       double spread = 0.5, double scale_lo = 0.02,
                                       double scale_hi = 0.08) {
    GaussianAttributeSet s;
    s.sh_degree = degree;
    const int d = hugdiff::sh_dim(degree);
    s.positions.resize(n, 3);
    s.opacities.resize(n);
    s.scales.resize(n, 3);
    s.rotations.resize(n, 4);
    s.sh_coeffs.resize(n, d);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) s.positions(i, c) = rng.uniform(-spread, spread);
        s.opacities[i] = rng.uniform(0.15, 0.9);
        for (int c = 0; c < 3; ++c) s.scales(i, c) = rng.uniform(scale_lo, scale_hi);
        double norm = 0.0;
        for (int c = 0; c < 4; ++c) {
            s.rotations(i, c) = rng.normal();
            norm += s.rotations(i, c) * s.rotations(i, c);
        }
        s.rotations.row(i) /= std::sqrt(norm);
        for (int c = 0; c < d; ++c) s.sh_coeffs(i, c) = rng.uniform(-0.8, 0.8);
    }
    return s;
}

inline CameraView test_camera(int width = 32, int height = 32, double dist = 2.0,
                              double focal = 0.0) {
    if (focal <= 0.0) focal = width * 1.2;
    return hugdiff::look_at_camera(Vec3(0, 0, -dist), Vec3(0, 0, 0), Vec3(0, 1, 0), focal,
                                   focal, width, height, 0.05, 20.0);
}

// rel-err with absolute floor, the contract used by every gradient check.
inline bool grad_close(double analytic, double fd, double rel = 1e-3, double floor_abs = 1e-6) {
    const double diff = std::abs(analytic - fd);
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    return diff <= std::max(floor_abs, rel * scale);
}

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x0, double h = 1e-4) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("hugdiff-" + tag + "-" + std::to_string(++counter));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace testutil
