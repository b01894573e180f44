// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hugdiff/common/error.hpp"
#include "hugdiff/conditioning/body_prior.hpp"
#include "hugdiff/proxygt/surface.hpp"
#include "hugdiff/render/camera.hpp"
#include "hugdiff/render/image.hpp"

namespace hugdiff {

// One captured subject: calibrated views with target images, the
// ground-truth surface, and the posed body prior.
struct SceneCapture {
    std::string scene_id;
    std::vector<CameraView> views;
    std::vector<Image> images; // H x W x 3, index-aligned with views
    SurfaceSource surface;
    BodyPrior body_prior;

    void validate() const {
        if (views.size() < 2) throw IngestError("scene " + scene_id + " needs at least 2 views");
        if (views.size() != images.size()) {
            throw IngestError("scene " + scene_id + " has " + std::to_string(views.size()) +
                              " cameras but " + std::to_string(images.size()) + " images");
        }
        for (std::size_t k = 0; k < views.size(); ++k) {
            views[k].validate();
            if (images[k].width != views[k].width || images[k].height != views[k].height) {
                throw IngestError("scene " + scene_id + " view " + std::to_string(k) +
                                  ": image is " + std::to_string(images[k].width) + "x" +
                                  std::to_string(images[k].height) + " but camera expects " +
                                  std::to_string(views[k].width) + "x" +
                                  std::to_string(views[k].height));
            }
            if (images[k].channels != 3) {
                throw IngestError("scene " + scene_id + " view " + std::to_string(k) +
                                  ": image must be rgb");
            }
        }
        body_prior.validate();
    }
};

} // namespace hugdiff
