// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch.hpp>

#include "hugdiff/render/loss.hpp"
#include "hugdiff/render/rasterize.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

using namespace hugdiff;

TEST_CASE("projection of an on-axis point lands on the principal point") {
    auto cam = testutil::test_camera(64, 64, 1.0, 100.0);
    Rng rng(1);
    auto set = testutil::random_set(rng, 1, 1);
    set.positions.row(0) << 0, 0, 0; // camera looks at the origin from distance 1
    const auto proj = project(set, cam);
    REQUIRE(proj.mask[0]);
    CHECK(proj.splats[0].mean2d.x() == Approx(cam.cx));
    CHECK(proj.splats[0].mean2d.y() == Approx(cam.cy));
    CHECK(proj.splats[0].depth == Approx(1.0));
}

TEST_CASE("on-axis isotropic splat projects to the closed-form covariance") {
    auto cam = testutil::test_camera(64, 64, 2.0, 120.0);
    Rng rng(2);
    auto set = testutil::random_set(rng, 1, 1);
    set.positions.row(0) << 0, 0, 0;
    set.scales.row(0) << 0.05, 0.05, 0.05;
    set.rotations.row(0) << 1, 0, 0, 0;
    const auto proj = project(set, cam);
    REQUIRE(proj.mask[0]);
    const double expected = std::pow(120.0 * 0.05 / 2.0, 2) + kCov2dFloor;
    CHECK(proj.splats[0].cov2d(0, 0) == Approx(expected).epsilon(1e-9));
    CHECK(proj.splats[0].cov2d(1, 1) == Approx(expected).epsilon(1e-9));
    CHECK(std::abs(proj.splats[0].cov2d(0, 1)) < 1e-12);
}

TEST_CASE("splats behind the camera are masked out, never raised") {
    auto cam = testutil::test_camera();
    Rng rng(3);
    auto set = testutil::random_set(rng, 2, 1);
    set.positions.row(0) << 0, 0, -5; // behind (camera sits at z=-2 looking at +z)
    set.positions.row(1) << 0, 0, 0;
    const auto proj = project(set, cam);
    CHECK_FALSE(proj.mask[0]);
    CHECK(proj.mask[1]);
}

TEST_CASE("rendering an empty set gives black rgb and zero alpha") {
    auto cam = testutil::test_camera(16, 16);
    GaussianAttributeSet set;
    set.sh_degree = 1;
    set.positions.resize(0, 3);
    set.opacities.resize(0);
    set.scales.resize(0, 3);
    set.rotations.resize(0, 4);
    set.sh_coeffs.resize(0, 12);
    const auto img = render(set, cam);
    for (double v : img.rgb.data) CHECK(v == 0.0);
    for (double v : img.alpha.data) CHECK(v == 0.0);
}

TEST_CASE("a saturated on-axis splat paints its own color at the center") {
    auto cam = testutil::test_camera(33, 33, 1.0, 40.0);
    Rng rng(4);
    auto set = testutil::random_set(rng, 1, 0);
    set.positions.row(0) << 0, 0, 0;
    set.opacities[0] = 1.0;
    set.scales.row(0) << 0.09, 0.09, 0.09; // huge footprint at this focal length
    set.rotations.row(0) << 1, 0, 0, 0;
    set.sh_coeffs.row(0) << 0.9, -0.4, 0.2;
    const auto img = render(set, cam);
    Vec3 pre;
    const Vec3 color = sh_to_color(set.sh_coeffs.row(0), Vec3(0, 0, 1), 0, &pre);
    // center pixel: transmittance saturates in one hit since g = 1 there
    const int cx = 16, cy = 16;
    for (int c = 0; c < 3; ++c) CHECK(img.rgb.at(cy, cx, c) == Approx(color[c]).margin(1e-9));
    CHECK(img.alpha.at(cy, cx, 0) == Approx(1.0).margin(1e-12));
}

TEST_CASE("fast rasterizer equals the naive per-pixel oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(10));
        auto set = testutil::random_set(rng, n, trial % 2);
        auto cam = testutil::test_camera(16, 16);
        const auto fast = render(set, cam);
        const auto naive = oracle::render_naive(set, cam);
        double max_diff = 0.0;
        for (std::size_t i = 0; i < fast.rgb.size(); ++i)
            max_diff = std::max(max_diff, std::abs(fast.rgb.data[i] - naive.data[i]));
        CHECK(max_diff < 1e-5);
    }
}

TEST_CASE("alpha stays in range and rgb is clamped") {
    Rng rng(6);
    auto set = testutil::random_set(rng, 40, 1);
    set.opacities.setConstant(0.99);
    auto cam = testutil::test_camera(24, 24);
    const auto img = render(set, cam);
    for (double v : img.alpha.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (double v : img.rgb.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("equal-depth same-color splats composite independently of order") {
    Rng rng(7);
    auto cam = testutil::test_camera(24, 24);
    const int n = 6;
    auto set = testutil::random_set(rng, n, 0);
    for (int i = 0; i < n; ++i) {
        set.positions(i, 2) = 0.0; // exactly equal camera depth
        set.sh_coeffs.row(i) << 0.4, 0.1, -0.2;
    }
    const auto base = render(set, cam);
    // reversed primitive order
    GaussianAttributeSet rev = set;
    for (int i = 0; i < n; ++i) {
        rev.positions.row(i) = set.positions.row(n - 1 - i);
        rev.opacities[i] = set.opacities[n - 1 - i];
        rev.scales.row(i) = set.scales.row(n - 1 - i);
        rev.rotations.row(i) = set.rotations.row(n - 1 - i);
        rev.sh_coeffs.row(i) = set.sh_coeffs.row(n - 1 - i);
    }
    const auto flipped = render(rev, cam);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < base.rgb.size(); ++i)
        max_diff = std::max(max_diff, std::abs(base.rgb.data[i] - flipped.rgb.data[i]));
    CHECK(max_diff <= 1e-6);

    // determinism: identical input renders bitwise identically
    const auto again = render(set, cam);
    CHECK(again.rgb.data == base.rgb.data);
}

TEST_CASE("doubling focal length and resolution keeps the covered fraction") {
    Rng rng(8);
    auto set = testutil::random_set(rng, 30, 0, 0.3);
    auto cam1 = testutil::test_camera(32, 32, 2.0, 40.0);
    auto cam2 = testutil::test_camera(64, 64, 2.0, 80.0);
    auto covered = [](const RenderedImage& img) {
        int n = 0;
        for (double v : img.alpha.data)
            if (v > 0.05) ++n;
        return static_cast<double>(n) / static_cast<double>(img.alpha.size());
    };
    const double f1 = covered(render(set, cam1));
    const double f2 = covered(render(set, cam2));
    CHECK(std::abs(f1 - f2) < 0.02);
}

TEST_CASE("zero upstream gradient yields zero attribute gradients") {
    Rng rng(9);
    auto set = testutil::random_set(rng, 5, 1);
    auto cam = testutil::test_camera(16, 16);
    Image upstream(16, 16, 3, 0.0);
    const auto grads = render_gradients(set, cam, upstream);
    CHECK(grads.positions.cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.opacities.cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.scales.cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.rotations.cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.sh_coeffs.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("render gradients reject non-finite upstream") {
    Rng rng(10);
    auto set = testutil::random_set(rng, 2, 1);
    auto cam = testutil::test_camera(8, 8);
    Image upstream(8, 8, 3, 0.0);
    upstream.data[5] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(render_gradients(set, cam, upstream), InvalidGradient);
}

namespace {

// F(attrs) = sum(U * render(attrs).rgb) with a fixed random U.
double weighted_render(const GaussianAttributeSet& set, const CameraView& cam,
                       const Image& weights) {
    const auto img = render(set, cam);
    double acc = 0.0;
    for (std::size_t i = 0; i < img.rgb.size(); ++i) acc += img.rgb.data[i] * weights.data[i];
    return acc;
}

} // namespace

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(11);
    auto cam = testutil::test_camera(16, 16);
    auto set = testutil::random_set(rng, 4, 1);
    Image weights(16, 16, 3);
    for (auto& v : weights.data) v = rng.uniform(-1, 1);

    const auto grads = render_gradients(set, cam, weights);
    const double h = 1e-4;

    SECTION("positions") {
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) {
                auto f = [&](double x) {
                    auto s2 = set;
                    s2.positions(i, c) = x;
                    return weighted_render(s2, cam, weights);
                };
                const double fd = testutil::central_diff(f, set.positions(i, c), h);
                INFO("position " << i << "," << c);
                CHECK(testutil::grad_close(grads.positions(i, c), fd));
            }
    }
    SECTION("opacities") {
        for (int i = 0; i < 4; ++i) {
            auto f = [&](double x) {
                auto s2 = set;
                s2.opacities[i] = x;
                return weighted_render(s2, cam, weights);
            };
            const double fd = testutil::central_diff(f, set.opacities[i], h);
            INFO("opacity " << i);
            CHECK(testutil::grad_close(grads.opacities[i], fd));
        }
    }
    SECTION("scales") {
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 3; ++c) {
                auto f = [&](double x) {
                    auto s2 = set;
                    s2.scales(i, c) = x;
                    return weighted_render(s2, cam, weights);
                };
                const double fd = testutil::central_diff(f, set.scales(i, c), h);
                INFO("scale " << i << "," << c);
                CHECK(testutil::grad_close(grads.scales(i, c), fd));
            }
    }
    SECTION("rotations through the normalization chain") {
        // raw quaternions; gradient = activation backward of the unit-quat grads
        Mat raw = set.rotations * 1.7; // non-unit raw input
        RawAttributeSet rawset;
        rawset.positions = set.positions;
        rawset.sh_degree = set.sh_degree;
        rawset.sh_coeffs = set.sh_coeffs;
        rawset.opacities_raw = Vec::Zero(4);
        rawset.scales_raw = Mat::Zero(4, 3);
        rawset.rotations_raw = raw;
        const auto act = activate_backward(rawset, set, Vec::Zero(4), Mat::Zero(4, 3),
                                           grads.rotations, Mat::Zero(4, 12));
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 4; ++c) {
                auto f = [&](double x) {
                    auto r2 = raw;
                    r2(i, c) = x;
                    auto s2 = set;
                    for (int k = 0; k < 4; ++k) {
                        Eigen::RowVector4d q = r2.row(k);
                        s2.rotations.row(k) = q / q.norm();
                    }
                    return weighted_render(s2, cam, weights);
                };
                const double fd = testutil::central_diff(f, raw(i, c), h);
                INFO("rotation " << i << "," << c);
                CHECK(testutil::grad_close(act.rotations_raw(i, c), fd));
            }
    }
    SECTION("sh coefficients") {
        for (int i = 0; i < 4; ++i)
            for (int c = 0; c < 12; ++c) {
                auto f = [&](double x) {
                    auto s2 = set;
                    s2.sh_coeffs(i, c) = x;
                    return weighted_render(s2, cam, weights);
                };
                const double fd = testutil::central_diff(f, set.sh_coeffs(i, c), h);
                INFO("sh " << i << "," << c);
                CHECK(testutil::grad_close(grads.sh_coeffs(i, c), fd));
            }
    }
}

TEST_CASE("photometric loss is zero for identical images") {
    Image a(12, 12, 3, 0.3);
    const auto loss = photometric_loss(a, a);
    CHECK(loss.value == Approx(0.0).margin(1e-12));
}

TEST_CASE("photometric loss splits into the expected L1 and SSIM parts") {
    Rng rng(12);
    Image rendered(16, 16, 3);
    for (auto& v : rendered.data) v = rng.uniform(0.0, 0.85);
    Image target = rendered;
    for (auto& v : target.data) v += 0.1;
    const auto loss = photometric_loss(rendered, target);
    CHECK(loss.l1 == Approx(0.1).epsilon(1e-9));
    const double ssim_oracle = oracle::ssim_same_naive(rendered, target);
    CHECK(loss.ssim == Approx(ssim_oracle).margin(1e-9));
    CHECK(loss.value ==
          Approx((1 - kPhotometricLambda) * 0.1 + kPhotometricLambda * (1 - ssim_oracle))
              .margin(1e-9));
}

TEST_CASE("photometric loss rejects shape mismatches") {
    Image a(8, 8, 3), b(8, 9, 3);
    CHECK_THROWS_AS(photometric_loss(a, b), ShapeError);
}

TEST_CASE("photometric gradient matches finite differences at 8x8") {
    Rng rng(13);
    Image rendered(8, 8, 3), target(8, 8, 3);
    for (auto& v : rendered.data) v = rng.uniform(0.1, 0.9);
    for (auto& v : target.data) v = rng.uniform(0.1, 0.9);
    const auto loss = photometric_loss(rendered, target);
    for (std::size_t i = 0; i < rendered.size(); i += 7) {
        auto f = [&](double x) {
            Image r2 = rendered;
            r2.data[i] = x;
            return photometric_loss(r2, target, kPhotometricLambda, false).value;
        };
        const double fd = testutil::central_diff(f, rendered.data[i], 1e-5);
        INFO("pixel " << i);
        CHECK(testutil::grad_close(loss.d_rendered.data[i], fd));
    }
}
