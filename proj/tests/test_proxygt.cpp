// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch.hpp>

#include "hugdiff/pipeline/toydata.hpp"
#include "hugdiff/proxygt/constraints.hpp"
#include "hugdiff/proxygt/stage1.hpp"
#include "hugdiff/proxygt/stage2.hpp"
#include "hugdiff/proxygt/stats.hpp"
#include "hugdiff/proxygt/surface.hpp"

#include "helpers.hpp"

using namespace hugdiff;

namespace {

TriangleMesh unit_square() {
    TriangleMesh mesh;
    mesh.vertices.resize(4, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0;
    mesh.faces.resize(2, 3);
    mesh.faces << 0, 1, 2, 0, 2, 3;
    return mesh;
}

} // namespace

TEST_CASE("mesh sampling spreads uniformly over a unit square") {
    const auto source = SurfaceSource::from_mesh(unit_square());
    // 1000 trials of 4 samples: count quadrant hits
    int counts[4] = {0, 0, 0, 0};
    for (int trial = 0; trial < 1000; ++trial) {
        const Mat pts = sample_positions(source, 4, 1000 + static_cast<std::uint64_t>(trial));
        for (int i = 0; i < 4; ++i) {
            const int qx = pts(i, 0) < 0.5 ? 0 : 1;
            const int qy = pts(i, 1) < 0.5 ? 0 : 1;
            counts[2 * qy + qx]++;
        }
    }
    // 4000 draws, each quadrant expects 1000; a 5-sigma binomial band is
    // about +-137
    for (int q = 0; q < 4; ++q) {
        CHECK(counts[q] > 1000 - 140);
        CHECK(counts[q] < 1000 + 140);
    }
}

TEST_CASE("mesh sampling is deterministic per seed") {
    const auto source = SurfaceSource::from_mesh(unit_square());
    const Mat a = sample_positions(source, 16, 42);
    const Mat b = sample_positions(source, 16, 42);
    const Mat c = sample_positions(source, 16, 43);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("cloud sampling with n equal to the cloud size returns a permutation") {
    Rng rng(301);
    ColoredCloud cloud;
    cloud.points.resize(20, 3);
    for (Eigen::Index i = 0; i < cloud.points.size(); ++i) cloud.points.data()[i] = rng.uniform(-1, 1);
    const Mat pts = sample_positions(SurfaceSource::from_cloud(cloud), 20, 5);
    // every original point appears exactly once
    std::vector<bool> seen(20, false);
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            if ((pts.row(i) - cloud.points.row(j)).norm() == 0.0) {
                CHECK_FALSE(seen[static_cast<std::size_t>(j)]);
                seen[static_cast<std::size_t>(j)] = true;
            }
        }
    }
    for (int j = 0; j < 20; ++j) CHECK(seen[static_cast<std::size_t>(j)]);
}

TEST_CASE("degenerate surfaces are rejected") {
    TriangleMesh mesh; // no faces
    CHECK_THROWS_AS(sample_positions(SurfaceSource::from_mesh(mesh), 4, 1), EmptySurface);
    ColoredCloud cloud;
    CHECK_THROWS_AS(sample_positions(SurfaceSource::from_cloud(cloud), 4, 1), EmptySurface);
    ColoredCloud small;
    small.points = Mat::Zero(3, 3);
    CHECK_THROWS_AS(sample_positions(SurfaceSource::from_cloud(small), 5, 1), InsufficientPoints);
}

TEST_CASE("kdist of three collinear points with k=1") {
    Mat pts(3, 3);
    pts << 0, 0, 0, 1, 0, 0, 2, 0, 0;
    const Vec d = kdist(pts, 1);
    CHECK(d[0] == Approx(1.0));
    CHECK(d[1] == Approx(1.0));
    CHECK(d[2] == Approx(1.0));
}

TEST_CASE("kdist of a grid interior point with k=4 is the spacing") {
    const double h = 0.25;
    std::vector<Vec3> pts;
    for (int x = -2; x <= 2; ++x)
        for (int y = -2; y <= 2; ++y) pts.emplace_back(x * h, y * h, 0.0);
    Mat m(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    const Vec d = kdist(m, 4);
    // the center point (0,0,0) has 4 axis neighbors at distance h
    Eigen::Index center = -1;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (m.row(i).norm() == 0.0) center = i;
    REQUIRE(center >= 0);
    CHECK(d[center] == Approx(h));
}

TEST_CASE("kdist matches the n-squared brute force oracle") {
    Rng rng(303);
    const int n = 40, k = 5;
    Mat pts(n, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.uniform(-1, 1);
    const Vec fast = kdist(pts, k);
    for (int i = 0; i < n; ++i) {
        std::vector<double> dists;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            dists.push_back((pts.row(i) - pts.row(j)).norm());
        }
        std::sort(dists.begin(), dists.end());
        double mean = 0.0;
        for (int t = 0; t < k; ++t) mean += dists[static_cast<std::size_t>(t)];
        mean /= k;
        CHECK(fast[i] == Approx(mean).margin(1e-12));
    }
}

TEST_CASE("kdist requires more points than neighbors") {
    Mat pts = Mat::Zero(3, 3);
    CHECK_THROWS_AS(kdist(pts, 3), InsufficientPoints);
}

TEST_CASE("radius is the mean of the scale components") {
    Mat scales(2, 3);
    scales << 0.2, 0.2, 0.2, 1.0, 2.0, 3.0;
    const Vec r = radius(scales);
    CHECK(r[0] == Approx(0.2));
    CHECK(r[1] == Approx(2.0));

    Rng rng(305);
    Mat rand_scales(100, 3);
    for (Eigen::Index i = 0; i < rand_scales.size(); ++i) rand_scales.data()[i] = rng.uniform(0.01, 1.0);
    const Vec fast = radius(rand_scales);
    for (int i = 0; i < 100; ++i) {
        const double want = (rand_scales(i, 0) + rand_scales(i, 1) + rand_scales(i, 2)) / 3.0;
        CHECK(fast[i] == Approx(want).margin(1e-15));
    }
}

TEST_CASE("aux constraint vanishes exactly at the target configuration") {
    Rng rng(307);
    Mat pts(12, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.uniform(-1, 1);
    const Vec kd = kdist(pts, 4);
    Mat scales(12, 3);
    for (int i = 0; i < 12; ++i) scales.row(i).setConstant(kd[i]);
    const Vec opac = Vec::Ones(12);
    const auto loss = aux_constraint_loss(scales, opac, kd);
    CHECK(loss.value == Approx(0.0).margin(1e-18));
}

TEST_CASE("aux constraint arithmetic on a single gaussian") {
    Mat scales(1, 3);
    scales.row(0).setConstant(0.3); // radius = 0.3
    Vec kd(1);
    kd[0] = 0.2; // radius - kdist = 0.1
    Vec opac(1);
    opac[0] = 0.8;
    const auto loss = aux_constraint_loss(scales, opac, kd);
    CHECK(loss.value == Approx(0.05).margin(1e-12)); // 0.01 + 0.04
}

TEST_CASE("aux constraint gradient matches finite differences") {
    Rng rng(309);
    Mat pts(8, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.uniform(-1, 1);
    const Vec kd = kdist(pts, 3);
    Mat scales(8, 3);
    for (Eigen::Index i = 0; i < scales.size(); ++i) scales.data()[i] = rng.uniform(0.05, 0.5);
    Vec opac(8);
    for (int i = 0; i < 8; ++i) opac[i] = rng.uniform(0.1, 0.99);
    const auto loss = aux_constraint_loss(scales, opac, kd);
    for (int i = 0; i < 8; ++i) {
        for (int c = 0; c < 3; ++c) {
            auto f = [&](double v) {
                Mat s2 = scales;
                s2(i, c) = v;
                return aux_constraint_loss(s2, opac, kd, false).value;
            };
            CHECK(testutil::grad_close(loss.d_scales(i, c),
                                       testutil::central_diff(f, scales(i, c), 1e-5)));
        }
        auto fo = [&](double v) {
            Vec o2 = opac;
            o2[i] = v;
            return aux_constraint_loss(scales, o2, kd, false).value;
        };
        CHECK(testutil::grad_close(loss.d_opacities[i], testutil::central_diff(fo, opac[i], 1e-5)));
    }
}

TEST_CASE("stage 1 smoke: loss decreases and the output set is valid") {
    ToySceneOptions opts;
    opts.resolution = 32;
    opts.n_views = 4;
    opts.dense_points = 800;
    opts.seed = 21;
    const auto scene = make_toy_scene("smoke", opts);
    const Mat positions = sample_positions(scene.surface, 80, 11);

    Stage1Config cfg;
    cfg.epochs = 60;
    cfg.lr = 5e-3;
    cfg.width = 32;
    cfg.seed = 3;
    const auto result = stage1_overfit(scene, positions, cfg);
    CHECK_NOTHROW(result.set.validate());
    CHECK(result.set.positions == positions);
    REQUIRE(result.log.entries.size() >= 2);
    CHECK(result.log.entries.back().loss < result.log.entries.front().loss);
    CHECK(result.log.entries.back().psnr > result.log.entries.front().psnr);
}

TEST_CASE("stage 2 requires matching SH degrees") {
    ToySceneOptions opts;
    opts.resolution = 16;
    opts.n_views = 2;
    opts.dense_points = 300;
    const auto scene = make_toy_scene("deg", opts);
    Stage1Result a, b;
    a.scene_id = "a";
    Rng rng(1);
    a.set = testutil::random_set(rng, 10, 1);
    b.scene_id = "b";
    b.set = testutil::random_set(rng, 10, 0);
    Stage2Config cfg;
    CHECK_THROWS_AS(stage2_unify({scene, scene}, {a, b}, cfg), ConfigError);
}

TEST_CASE("stage 2 with one scene does not lose more than 1 dB of train psnr") {
    ToySceneOptions opts;
    opts.resolution = 32;
    opts.n_views = 4;
    opts.dense_points = 800;
    opts.seed = 29;
    const auto scene = make_toy_scene("solo", opts);
    const Mat positions = sample_positions(scene.surface, 80, 13);

    Stage1Config cfg1;
    cfg1.epochs = 150;
    cfg1.lr = 5e-3;
    cfg1.width = 32;
    cfg1.seed = 5;
    const auto s1 = stage1_overfit(scene, positions, cfg1);

    Stage2Config cfg2;
    cfg2.epochs = 150;
    cfg2.lr = 5e-3;
    cfg2.width = 32;
    cfg2.seed = 6;
    const auto records = stage2_unify({scene}, {s1}, cfg2);
    REQUIRE(records.size() == 1);
    CHECK(records[0].unified_set.positions == positions);
    CHECK(records[0].stage1_set.positions == positions);

    auto train_psnr = [&](const GaussianAttributeSet& set) {
        double acc = 0.0;
        for (std::size_t k = 0; k < scene.views.size(); ++k)
            acc += mse(render(set, scene.views[k]).rgb, scene.images[k]);
        return 10.0 * std::log10(1.0 / (acc / static_cast<double>(scene.views.size())));
    };
    const double p1 = train_psnr(s1.set);
    const double p2 = train_psnr(records[0].unified_set);
    INFO("stage1 " << p1 << " dB, stage2 " << p2 << " dB");
    CHECK(p2 >= p1 - 1.0);
}

TEST_CASE("distribution stats: identical sets have zero across-scene variance") {
    Rng rng(311);
    const auto set = testutil::random_set(rng, 15, 1);
    const auto report = distribution_stats({set, set, set});
    for (const auto& [name, v] : report.variance_of_min) CHECK(v == 0.0);
    for (const auto& [name, v] : report.variance_of_max) CHECK(v == 0.0);
}

TEST_CASE("distribution stats: sh minima {0,1} give population variance 0.25") {
    Rng rng(313);
    auto a = testutil::random_set(rng, 10, 0);
    auto b = a;
    a.sh_coeffs.setConstant(0.0);
    a.sh_coeffs(0, 0) = 2.0; // min stays 0
    b.sh_coeffs.setConstant(1.0);
    b.sh_coeffs(0, 0) = 2.0; // min stays 1
    const auto report = distribution_stats({a, b});
    CHECK(report.variance_of_min.at("sh") == Approx(0.25));
}

TEST_CASE("distribution stats are invariant to scene order") {
    Rng rng(317);
    const auto a = testutil::random_set(rng, 12, 1);
    const auto b = testutil::random_set(rng, 12, 1);
    const auto c = testutil::random_set(rng, 12, 1);
    const auto r1 = distribution_stats({a, b, c});
    const auto r2 = distribution_stats({c, a, b});
    for (const auto& [name, v] : r1.variance_of_min) CHECK(v == r2.variance_of_min.at(name));
    for (const auto& [name, v] : r1.variance_of_max) CHECK(v == r2.variance_of_max.at(name));
}

TEST_CASE("seed variance experiment with one run reports one value") {
    ToySceneOptions opts;
    opts.resolution = 16;
    opts.n_views = 2;
    opts.dense_points = 300;
    opts.seed = 31;
    const auto scene = make_toy_scene("one", opts);
    const Mat positions = sample_positions(scene.surface, 40, 17);
    Stage1Config cfg;
    cfg.epochs = 5;
    cfg.lr = 5e-3;
    cfg.width = 16;
    const auto vals = seed_variance_experiment(scene, positions, 1, FitMode::Network, cfg);
    CHECK(vals.size() == 1);
}
