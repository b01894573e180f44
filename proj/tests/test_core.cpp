// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch.hpp>

#include <Eigen/Eigenvalues>
#include <filesystem>
#include <fstream>

#include "hugdiff/core/covariance.hpp"
#include "hugdiff/core/io.hpp"
#include "hugdiff/core/sh.hpp"
#include "hugdiff/core/types.hpp"

#include "helpers.hpp"
#include "oracles.hpp"

using namespace hugdiff;

namespace {

RawAttributeSet random_raw(Rng& rng, int n, int degree = 1) {
    RawAttributeSet r;
    r.sh_degree = degree;
    r.positions.resize(n, 3);
    r.opacities_raw.resize(n);
    r.scales_raw.resize(n, 3);
    r.rotations_raw.resize(n, 4);
    r.sh_coeffs.resize(n, sh_dim(degree));
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) r.positions(i, c) = rng.uniform(-1, 1);
        r.opacities_raw[i] = rng.uniform(-8, 8);
        for (int c = 0; c < 3; ++c) r.scales_raw(i, c) = rng.uniform(-16, 2);
        for (int c = 0; c < 4; ++c) r.rotations_raw(i, c) = rng.normal() * 2.0;
        for (int c = 0; c < sh_dim(degree); ++c) r.sh_coeffs(i, c) = rng.normal();
    }
    return r;
}

} // namespace

TEST_CASE("activate maps raw values into the valid domains") {
    RawAttributeSet raw;
    raw.sh_degree = 0;
    raw.positions = Mat::Zero(3, 3);
    raw.opacities_raw = Vec::Zero(3);
    raw.scales_raw = Mat::Zero(3, 3);
    raw.rotations_raw = Mat::Zero(3, 4);
    raw.sh_coeffs = Mat::Zero(3, 3);

    raw.opacities_raw << 0.0, 4.0, -4.0;
    raw.scales_raw.row(0) << std::log(0.01), std::log(0.01), std::log(0.01);
    raw.rotations_raw.row(0) << 2.0, 0.0, 0.0, 0.0;
    raw.rotations_raw.row(1) << 0.0, 0.0, 0.0, 0.0; // zero maps to identity
    raw.rotations_raw.row(2) << 1.0, 1.0, 1.0, 1.0;

    const auto set = activate(raw);
    CHECK(set.opacities[0] == Approx(0.5));
    CHECK(set.scales(0, 0) == Approx(0.01));
    CHECK(set.rotations(0, 0) == Approx(1.0));
    CHECK(set.rotations(0, 1) == 0.0);
    CHECK(set.rotations(1, 0) == 1.0);
    CHECK(set.rotations.row(2).norm() == Approx(1.0));
    CHECK_NOTHROW(set.validate());
}

TEST_CASE("activate rejects non-finite raw values naming the index") {
    Rng rng(7);
    auto raw = random_raw(rng, 4);
    raw.opacities_raw[2] = std::numeric_limits<double>::quiet_NaN();
    try {
        activate(raw);
        FAIL("expected InvalidAttribute");
    } catch (const InvalidAttribute& e) {
        CHECK(e.index == 2);
    }
}

TEST_CASE("activated outputs always satisfy the set invariants") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        auto raw = random_raw(rng, 8, trial % 3);
        const auto set = activate(raw);
        CHECK_NOTHROW(set.validate());
        CHECK(set.positions == raw.positions);
        CHECK(set.sh_coeffs == raw.sh_coeffs);
    }
}

TEST_CASE("activation backward matches finite differences") {
    Rng rng(13);
    auto raw = random_raw(rng, 5);
    // keep scales inside the clamp window so the derivative is smooth
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 3; ++c) raw.scales_raw(i, c) = rng.uniform(-5.0, -2.5);
    const auto set = activate(raw);

    // scalar functional: random weighted sum of activated values
    Vec w_op(5);
    Mat w_sc(5, 3), w_rot(5, 4);
    for (int i = 0; i < 5; ++i) {
        w_op[i] = rng.normal();
        for (int c = 0; c < 3; ++c) w_sc(i, c) = rng.normal();
        for (int c = 0; c < 4; ++c) w_rot(i, c) = rng.normal();
    }
    auto value = [&](const RawAttributeSet& r) {
        const auto s = activate(r);
        double acc = s.opacities.dot(w_op);
        acc += (s.scales.array() * w_sc.array()).sum();
        acc += (s.rotations.array() * w_rot.array()).sum();
        return acc;
    };
    const auto grads = activate_backward(raw, set, w_op, w_sc, w_rot,
                                         Mat::Zero(5, sh_dim(1)));
    for (int i = 0; i < 5; ++i) {
        for (int c = 0; c < 4; ++c) {
            auto f = [&](double x) {
                auto r2 = raw;
                r2.rotations_raw(i, c) = x;
                return value(r2);
            };
            const double fd = testutil::central_diff(f, raw.rotations_raw(i, c));
            CHECK(testutil::grad_close(grads.rotations_raw(i, c), fd));
        }
        auto fo = [&](double x) {
            auto r2 = raw;
            r2.opacities_raw[i] = x;
            return value(r2);
        };
        CHECK(testutil::grad_close(grads.opacities_raw[i],
                                   testutil::central_diff(fo, raw.opacities_raw[i])));
        for (int c = 0; c < 3; ++c) {
            auto fs = [&](double x) {
                auto r2 = raw;
                r2.scales_raw(i, c) = x;
                return value(r2);
            };
            CHECK(testutil::grad_close(grads.scales_raw(i, c),
                                       testutil::central_diff(fs, raw.scales_raw(i, c))));
        }
    }
}

TEST_CASE("covariance of identity rotation and unit scales is the identity") {
    const Mat3 sigma = covariance_from_scale_rotation(Vec3(1, 1, 1), Vec4(1, 0, 0, 0));
    CHECK((sigma - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance for a 90 degree z rotation permutes the squared scales") {
    const double s2 = std::sqrt(0.5);
    const Mat3 sigma = covariance_from_scale_rotation(Vec3(2, 1, 1), Vec4(s2, 0, 0, s2));
    Mat3 expected;
    expected << 1, 0, 0, 0, 4, 0, 0, 0, 1;
    CHECK((sigma - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("covariance eigenvalues equal the squared scales") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 scale(rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0));
        Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q.normalize();
        const Mat3 sigma = covariance_from_scale_rotation(scale, q);
        CHECK((sigma - sigma.transpose()).cwiseAbs().maxCoeff() < 1e-9);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(sigma);
        Vec3 expected = scale.cwiseProduct(scale);
        std::sort(expected.data(), expected.data() + 3);
        for (int c = 0; c < 3; ++c) CHECK(eig.eigenvalues()[c] == Approx(expected[c]).margin(1e-9));
    }
}

TEST_CASE("covariance is invariant under quaternion sign flip") {
    Rng rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        Vec3 scale(rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0));
        Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q.normalize();
        const Mat3 a = covariance_from_scale_rotation(scale, q);
        const Mat3 b = covariance_from_scale_rotation(scale, -q);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("covariance rejects non-unit quaternions") {
    CHECK_THROWS_AS(covariance_from_scale_rotation(Vec3(1, 1, 1), Vec4(1.1, 0, 0, 0)),
                    NormalizationError);
}

TEST_CASE("sh_to_color applies the dc offset convention") {
    Eigen::RowVectorXd sh = Eigen::RowVectorXd::Zero(12);
    const Vec3 color = sh_to_color(sh, Vec3(0, 0, 1), 1);
    CHECK(color[0] == Approx(0.5));
    CHECK(color[1] == Approx(0.5));
    CHECK(color[2] == Approx(0.5));
}

TEST_CASE("degree zero red channel follows Y00") {
    Eigen::RowVectorXd sh(3);
    sh << 0.7, 0.0, 0.0;
    const Vec3 color = sh_to_color(sh, Vec3(1, 0, 0).normalized(), 0);
    CHECK(color[0] == Approx(0.7 * 0.2820948 + 0.5).epsilon(1e-6));
    CHECK(color[1] == Approx(0.5));
}

TEST_CASE("degree zero color is constant over directions") {
    Rng rng(23);
    Eigen::RowVectorXd sh(3);
    sh << 0.3, -0.2, 0.9;
    const Vec3 ref = sh_to_color(sh, Vec3(0, 0, 1), 0);
    for (int i = 0; i < 25; ++i) {
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        d.normalize();
        CHECK((sh_to_color(sh, d, 0) - ref).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("degree one colors at +z and -z differ by twice the z band") {
    Rng rng(29);
    Eigen::RowVectorXd sh(12);
    for (int i = 0; i < 12; ++i) sh[i] = rng.uniform(-0.3, 0.3);
    Vec3 pre_p, pre_m;
    sh_to_color(sh, Vec3(0, 0, 1), 1, &pre_p);
    sh_to_color(sh, Vec3(0, 0, -1), 1, &pre_m);
    // only the (basis 2) z band flips sign between the two directions
    for (int ch = 0; ch < 3; ++ch) {
        const double expected = 2.0 * shc::C1 * sh[6 + ch];
        CHECK(pre_p[ch] - pre_m[ch] == Approx(expected).margin(1e-12));
    }
}

TEST_CASE("sh_to_color validates dimensions") {
    Eigen::RowVectorXd sh = Eigen::RowVectorXd::Zero(9);
    CHECK_THROWS_AS(sh_to_color(sh, Vec3(0, 0, 1), 1), ShapeError);
}

TEST_CASE("sh_to_color agrees with the oracle basis evaluation") {
    Rng rng(31);
    for (int deg = 0; deg <= 3; ++deg) {
        Eigen::RowVectorXd sh(sh_dim(deg));
        for (int i = 0; i < sh.size(); ++i) sh[i] = rng.uniform(-1, 1);
        Vec3 d(rng.normal(), rng.normal(), rng.normal());
        d.normalize();
        const Vec3 got = sh_to_color(sh, d, deg);
        const Eigen::Vector3d want = oracle::sh_color(sh, d, deg);
        CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("hgda round trip preserves float payloads bit-exactly") {
    Rng rng(37);
    // draw values on the float32 grid so the in-memory set is exactly
    // representable
    auto set = testutil::random_set(rng, 20, 1);
    auto snap = [](Mat& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<float>(m(i, j));
    };
    snap(set.positions);
    snap(set.scales);
    snap(set.sh_coeffs);
    for (Eigen::Index i = 0; i < set.opacities.size(); ++i)
        set.opacities[i] = static_cast<float>(set.opacities[i]);
    for (Eigen::Index i = 0; i < set.size(); ++i) {
        Eigen::RowVector4d q = set.rotations.row(i);
        q /= q.norm();
        for (int c = 0; c < 4; ++c) q[c] = static_cast<float>(q[c]);
        // renormalize in float grid until stable
        set.rotations.row(i) = q;
    }
    testutil::TempDir dir("hgda");
    const auto path = dir.path / "set.hgda";
    save_set(set, path);
    const auto loaded = load_set(path);
    CHECK(loaded.positions == set.positions);
    CHECK(loaded.opacities == set.opacities);
    CHECK(loaded.scales == set.scales);
    CHECK(loaded.rotations == set.rotations);
    CHECK(loaded.sh_coeffs == set.sh_coeffs);

    const auto path2 = dir.path / "set2.hgda";
    save_set(loaded, path2);
    const auto twice = load_set(path2);
    CHECK(twice == loaded);

    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("hgda rejects wrong magic") {
    Rng rng(41);
    auto buf = encode_set(testutil::random_set(rng, 3));
    buf[0] = 'X';
    try {
        decode_set(buf);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 0);
    }
}

TEST_CASE("hgda rejects truncated payload with the offending offset") {
    Rng rng(43);
    auto buf = encode_set(testutil::random_set(rng, 5));
    buf.resize(buf.size() - 7);
    try {
        decode_set(buf);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == buf.size());
    }
}

TEST_CASE("hgda payload size follows the format arithmetic") {
    Rng rng(47);
    auto set = testutil::random_set(rng, 128, 1);
    const auto buf = encode_set(set);
    CHECK(buf.size() == 16u + 128u * (3 + 1 + 3 + 4 + 12) * 4u);

    // full-scale point count: n * (3+1+3+4+12) float32 plus the header
    auto big = testutil::random_set(rng, 20000, 1);
    const auto big_buf = encode_set(big);
    CHECK(big_buf.size() == 16u + 20000u * 23u * 4u);
}

TEST_CASE("ply export writes a parseable header with the right vertex count") {
    Rng rng(53);
    auto set = testutil::random_set(rng, 10, 1);
    testutil::TempDir dir("ply");
    const auto path = dir.path / "set.ply";
    export_ply(set, path);
    std::ifstream f(path, std::ios::binary);
    std::string line;
    std::getline(f, line);
    CHECK(line == "ply");
    bool found_count = false, found_end = false;
    int props = 0;
    while (std::getline(f, line) && line != "end_header") {
        if (line == "element vertex 10") found_count = true;
        if (line.rfind("property float", 0) == 0) ++props;
    }
    found_end = (line == "end_header");
    CHECK(found_count);
    CHECK(found_end);
    CHECK(props == 9 + 9 + 1 + 3 + 4); // base + f_rest(deg1) + opacity + scales + rot
    // body must hold exactly count * props float32s
    const auto header_end = f.tellg();
    f.seekg(0, std::ios::end);
    CHECK(f.tellg() - header_end == 10 * props * 4);
}
