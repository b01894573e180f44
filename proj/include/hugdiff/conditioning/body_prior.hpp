// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugdiff/common/error.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff {

// Posed parametric-body proxy: template surface points with coarse part
// labels. Stands in for a posed parametric body surface in the semantic lookup.
struct BodyPrior {
    Mat template_points;          // M x 3
    std::vector<int> part_labels; // M values in [0, num_parts)
    int num_parts = 24;
    Vec3 up_axis = Vec3(0, 1, 0);

    Eigen::Index size() const { return template_points.rows(); }

    void validate() const {
        const Eigen::Index m = template_points.rows();
        if (m < num_parts) throw ShapeError("body prior needs at least one point per part");
        if (static_cast<Eigen::Index>(part_labels.size()) != m) {
            throw ShapeError("body prior labels disagree with point count");
        }
        for (const int l : part_labels) {
            if (l < 0 || l >= num_parts) throw ShapeError("body prior label out of range");
        }
    }

    Vec3 centroid() const { return template_points.colwise().mean().transpose(); }
};

inline BodyPrior body_prior_from_json(const nlohmann::json& j) {
    BodyPrior prior;
    try {
        const auto pts = j.at("points").get<std::vector<std::vector<double>>>();
        prior.template_points.resize(static_cast<Eigen::Index>(pts.size()), 3);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (pts[i].size() != 3) throw IngestError("body prior point is not 3d");
            for (int c = 0; c < 3; ++c) prior.template_points(static_cast<Eigen::Index>(i), c) = pts[i][static_cast<std::size_t>(c)];
        }
        prior.part_labels = j.at("labels").get<std::vector<int>>();
        if (j.contains("num_parts")) prior.num_parts = j.at("num_parts").get<int>();
        const auto up = j.at("up_axis").get<std::string>();
        if (up == "x") prior.up_axis = Vec3(1, 0, 0);
        else if (up == "y") prior.up_axis = Vec3(0, 1, 0);
        else if (up == "z") prior.up_axis = Vec3(0, 0, 1);
        else throw IngestError("body prior up_axis must be one of x|y|z");
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(std::string("bad body prior json: ") + e.what());
    }
    prior.validate();
    return prior;
}

inline BodyPrior load_body_prior(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("cannot parse " + path.string() + ": " + e.what());
    }
    return body_prior_from_json(j);
}

inline void save_body_prior(const BodyPrior& prior, const std::filesystem::path& path) {
    nlohmann::json j;
    std::vector<std::vector<double>> pts;
    for (Eigen::Index i = 0; i < prior.template_points.rows(); ++i)
        pts.push_back({prior.template_points(i, 0), prior.template_points(i, 1),
                       prior.template_points(i, 2)});
    j["points"] = pts;
    j["labels"] = prior.part_labels;
    j["num_parts"] = prior.num_parts;
    j["up_axis"] = prior.up_axis.x() > 0.5 ? "x" : (prior.up_axis.y() > 0.5 ? "y" : "z");
    std::ofstream f(path);
    if (!f) throw IngestError("cannot open " + path.string() + " for writing");
    f << j.dump(2) << "\n";
}

} // namespace hugdiff
