// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hugdiff/common/error.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff {

// Pinhole camera: intrinsics in pixels, world-to-camera rigid transform,
// resolution and depth clip range.
struct CameraView {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
    int width = 0, height = 0;
    double near = 0.01, far = 100.0;

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 center() const { return -rotation().transpose() * translation(); }
    // Optical axis in world coordinates.
    Vec3 forward() const { return rotation().row(2).transpose(); }

    void validate() const {
        if (fx <= 0.0 || fy <= 0.0) throw ShapeError("camera focal lengths must be positive");
        if (width <= 0 || height <= 0) throw ShapeError("camera resolution must be positive");
        if (!(near < far)) throw ShapeError("camera near plane must precede far plane");
        const Mat3 r = rotation();
        if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
            throw NormalizationError("camera rotation block is not orthonormal");
        }
    }
};

// A camera positioned at `eye` looking toward `target`.
inline CameraView look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                                 double fy, int width, int height, double near = 0.01,
                                 double far = 100.0) {
    const Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up).normalized();
    const Vec3 down = fwd.cross(right);
    CameraView cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.far = far;
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = fwd.transpose();
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

inline nlohmann::json camera_to_json(const CameraView& cam) {
    nlohmann::json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    std::vector<double> w2c(16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) w2c[static_cast<std::size_t>(r * 4 + c)] = cam.world_to_camera(r, c);
    j["w2c"] = w2c;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["near"] = cam.near;
    j["far"] = cam.far;
    return j;
}

inline CameraView camera_from_json(const nlohmann::json& j) {
    CameraView cam;
    try {
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.near = j.at("near").get<double>();
        cam.far = j.at("far").get<double>();
        const auto w2c = j.at("w2c").get<std::vector<double>>();
        if (w2c.size() != 16) throw ShapeError("w2c must hold 16 row-major floats");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) cam.world_to_camera(r, c) = w2c[static_cast<std::size_t>(r * 4 + c)];
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(std::string("bad camera json: ") + e.what());
    }
    cam.validate();
    return cam;
}

inline std::vector<CameraView> load_cameras(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("cannot parse " + path.string() + ": " + e.what());
    }
    std::vector<CameraView> cams;
    if (j.is_array()) {
        for (const auto& item : j) cams.push_back(camera_from_json(item));
    } else {
        cams.push_back(camera_from_json(j));
    }
    return cams;
}

inline void save_cameras(const std::vector<CameraView>& cams, const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cams) j.push_back(camera_to_json(c));
    std::ofstream f(path);
    if (!f) throw IngestError("cannot open " + path.string() + " for writing");
    f << j.dump(2) << "\n";
}

} // namespace hugdiff
