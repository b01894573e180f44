// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>

#include "hugdiff/common/error.hpp"
#include "hugdiff/conditioning/body_prior.hpp"
#include "hugdiff/pipeline/toydata.hpp"
#include "hugdiff/proxygt/surface.hpp"
#include "hugdiff/render/camera.hpp"
#include "hugdiff/render/rasterize.hpp"

namespace hugdiff {

// The input camera rotated 180 degrees about the subject's vertical axis
// through the body-prior centroid.
inline CameraView mirrored_camera(const CameraView& cam, const BodyPrior& prior) {
    const Vec3 up = prior.up_axis.normalized();
    const Vec3 c = prior.centroid();
    // 180-degree rotation about `up`: A = 2 uu^T - I (involutive)
    const Mat3 a = 2.0 * up * up.transpose() - Mat3::Identity();
    Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
    t.topLeftCorner<3, 3>() = a;
    t.topRightCorner<3, 1>() = c - a * c;
    CameraView out = cam;
    out.world_to_camera = cam.world_to_camera * t; // w2c' = w2c . T^{-1}, T involutive
    return out;
}

// Source of the occluded-side image. The desk-scale pipeline renders the
// ground-truth surface; a generative provider can be plugged in through the
// same interface.
class BackViewProvider {
public:
    virtual ~BackViewProvider() = default;
    virtual Image provide(const CameraView& back_cam) const = 0;
};

// Renders a dense splat approximation of the ground-truth surface.
class GroundTruthBackViewProvider : public BackViewProvider {
public:
    GroundTruthBackViewProvider(const SurfaceSource& surface, int dense_points = 3000,
                                std::uint64_t seed = 77) {
        const auto samples = sample_surface(surface, dense_points, seed);
        splats_ = splats_from_samples(samples);
    }

    explicit GroundTruthBackViewProvider(GaussianAttributeSet splats)
        : splats_(std::move(splats)) {}

    Image provide(const CameraView& back_cam) const override {
        return render(splats_, back_cam).rgb;
    }

private:
    GaussianAttributeSet splats_;
};

// Serves a pre-rendered or externally generated image.
class FixedBackViewProvider : public BackViewProvider {
public:
    explicit FixedBackViewProvider(Image image) : image_(std::move(image)) {}

    Image provide(const CameraView& back_cam) const override {
        if (image_.width != back_cam.width || image_.height != back_cam.height) {
            throw MissingBackView("supplied back image is " + std::to_string(image_.width) + "x" +
                                  std::to_string(image_.height) + " but the mirrored camera needs " +
                                  std::to_string(back_cam.width) + "x" +
                                  std::to_string(back_cam.height));
        }
        return image_;
    }

private:
    Image image_;
};

struct BackView {
    Image image;
    CameraView camera;
};

inline BackView back_view(const CameraView& input_view, const BodyPrior& prior,
                          const BackViewProvider* provider) {
    if (!provider) throw MissingBackView("no back view provider configured");
    BackView out;
    out.camera = mirrored_camera(input_view, prior);
    out.image = provider->provide(out.camera);
    return out;
}

} // namespace hugdiff
