// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>

#include <fmt/core.h>

#include "hugdiff/pipeline/meshio.hpp"
#include "hugdiff/pipeline/toydata.hpp"
#include "hugdiff/proxygt/scene.hpp"

namespace hugdiff {

// Dataset layout on disk:
//   <root>/scenes/<id>/cameras.json
//   <root>/scenes/<id>/images/view_%03d.png
//   <root>/scenes/<id>/surface.(obj|ply)
//   <root>/scenes/<id>/body_prior.json
//   <root>/scenes/<id>/depth_%03d.f32      (optional)

inline std::filesystem::path scene_dir(const std::filesystem::path& root, const std::string& id) {
    return root / "scenes" / id;
}

inline SceneCapture load_scene(const std::filesystem::path& root, const std::string& id) {
    const auto dir = scene_dir(root, id);
    SceneCapture scene;
    scene.scene_id = id;
    const auto cam_path = dir / "cameras.json";
    if (!std::filesystem::exists(cam_path)) {
        throw IngestError("scene " + id + ": missing " + cam_path.string());
    }
    scene.views = load_cameras(cam_path);
    for (std::size_t k = 0; k < scene.views.size(); ++k) {
        const auto img_path = dir / "images" / fmt::format("view_{:03d}.png", k);
        if (!std::filesystem::exists(img_path)) {
            throw IngestError("scene " + id + ": missing image " + img_path.string());
        }
        scene.images.push_back(read_png(img_path));
    }
    const auto obj = dir / "surface.obj";
    const auto ply = dir / "surface.ply";
    if (std::filesystem::exists(obj)) {
        scene.surface = load_surface(obj);
    } else if (std::filesystem::exists(ply)) {
        scene.surface = load_surface(ply);
    } else {
        throw IngestError("scene " + id + ": missing surface.obj or surface.ply");
    }
    const auto prior_path = dir / "body_prior.json";
    if (!std::filesystem::exists(prior_path)) {
        throw IngestError("scene " + id + ": missing " + prior_path.string());
    }
    scene.body_prior = load_body_prior(prior_path);
    scene.validate();
    return scene;
}

// Loads every scene under <root>/scenes, sorted by id. `only` restricts to
// the listed ids when non-empty.
inline std::vector<SceneCapture> ingest_dataset(const std::filesystem::path& root,
                                                const std::vector<std::string>& only = {}) {
    const auto scenes_dir = root / "scenes";
    if (!std::filesystem::is_directory(scenes_dir)) {
        throw IngestError("dataset root lacks a scenes/ directory: " + root.string());
    }
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(scenes_dir)) {
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    std::vector<SceneCapture> scenes;
    for (const auto& id : ids) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        scenes.push_back(load_scene(root, id));
    }
    if (!only.empty() && scenes.size() != only.size()) {
        for (const auto& id : only) {
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
                throw IngestError("dataset has no scene named " + id);
            }
        }
    }
    return scenes;
}

// Writes a scene in the dataset layout (used by the toy generator).
inline void write_scene(const SceneCapture& scene, const std::filesystem::path& root,
                        bool with_depth = true) {
    const auto dir = scene_dir(root, scene.scene_id);
    std::filesystem::create_directories(dir / "images");
    save_cameras(scene.views, dir / "cameras.json");
    for (std::size_t k = 0; k < scene.images.size(); ++k) {
        write_png(scene.images[k], dir / "images" / fmt::format("view_{:03d}.png", k));
    }
    if (scene.surface.kind == SurfaceSource::Kind::Mesh) {
        save_obj(scene.surface.mesh, dir / "surface.obj");
    } else {
        // cloud scenes round-trip through ply
        std::ofstream f(dir / "surface.ply", std::ios::binary);
        const auto& cloud = scene.surface.cloud;
        f << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.points.rows()
          << "\n";
        f << "property float x\nproperty float y\nproperty float z\n";
        const bool colored = cloud.colors.rows() == cloud.points.rows();
        if (colored) f << "property float red\nproperty float green\nproperty float blue\n";
        f << "end_header\n";
        for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
            for (int c = 0; c < 3; ++c) {
                const float v = static_cast<float>(cloud.points(i, c));
                f.write(reinterpret_cast<const char*>(&v), 4);
            }
            if (colored) {
                for (int c = 0; c < 3; ++c) {
                    const float v = static_cast<float>(cloud.colors(i, c));
                    f.write(reinterpret_cast<const char*>(&v), 4);
                }
            }
        }
    }
    save_body_prior(scene.body_prior, dir / "body_prior.json");
    if (with_depth) {
        const Image depth = render_groundtruth_depth(scene.surface, scene.views[0], 12000, 3, 0);
        write_depth_f32(depth, dir / "depth_000.f32");
    }
}

struct ToyDatasetOptions {
    int scenes = 4;
    ToySceneOptions scene;
};

inline std::vector<std::string> write_toy_dataset(const std::filesystem::path& root,
                                                  const ToyDatasetOptions& opts) {
    std::vector<std::string> ids;
    for (int s = 0; s < opts.scenes; ++s) {
        ToySceneOptions so = opts.scene;
        so.seed = opts.scene.seed + static_cast<std::uint64_t>(s) * 101;
        const std::string id = fmt::format("toy{:02d}", s);
        write_scene(make_toy_scene(id, so), root);
        ids.push_back(id);
    }
    return ids;
}

} // namespace hugdiff
