// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugdiff/common/error.hpp"
#include "hugdiff/diffusion/model.hpp"
#include "hugdiff/proxygt/stage2.hpp"

namespace hugdiff {

enum class TrainingMode { Pixel, AttributeRegression, AttributeDiffusion };

inline TrainingMode training_mode_from_string(const std::string& s) {
    if (s == "pixel") return TrainingMode::Pixel;
    if (s == "attr-reg" || s == "attribute_regression") return TrainingMode::AttributeRegression;
    if (s == "attr-diff" || s == "attribute_diffusion") return TrainingMode::AttributeDiffusion;
    throw ConfigError("unknown training mode: " + s);
}

inline std::string training_mode_to_string(TrainingMode m) {
    switch (m) {
        case TrainingMode::Pixel: return "pixel";
        case TrainingMode::AttributeRegression: return "attr-reg";
        default: return "attr-diff";
    }
}

// Flat run configuration. Defaults carry the published full-scale recipe
// (learning rate 2e-4, 4000/1300/300 epochs, batch 4, 20000 points); desk
// runs override them from the config file.
struct PipelineConfig {
    std::filesystem::path dataset_root;
    std::vector<std::string> scenes; // empty = every scene in the dataset
    int n_points = 20000;
    int sh_degree = 1;
    TrainingMode training_mode = TrainingMode::AttributeDiffusion;
    std::string positions_mode = "gt"; // gt | depth

    Stage1Config stage1;   // lr 2e-4, 4000 epochs
    Stage2Config stage2;   // lr 2e-4, 1300 epochs, batch 4
    struct DiffusionTrain {
        int timesteps = 1000;
        double beta_start = 1e-4;
        double beta_end = 0.02;
        std::string schedule = "linear";
        double lr = 2e-4;
        int epochs = 300;
        int batch_size = 4;
        int width = 96;
        double clip_c0 = 1.5;
        double gt_probability = 0.5;
        double gt_noise_sigma = 0.05;
        int refresh_every = 50;
    } diffusion;
    struct Regression {
        double lr = 2e-4;
        int epochs = 300;
        int batch_size = 4;
        int width = 96;
    } regression;

    int input_view = 0;
    struct Seeds {
        std::uint64_t master = 0;
        std::uint64_t sampling = 0;
        bool provided = false;
    } seeds;

    std::filesystem::path proxy_dir;  // defaults to <dataset>/proxy
    std::filesystem::path output_dir; // defaults to <dataset>/runs

    nlohmann::json raw; // canonical echo for hashing and logging
};

namespace detail {

inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace detail

inline std::string config_hash(const PipelineConfig& cfg) {
    return detail::fnv1a_hex(cfg.raw.dump());
}

inline PipelineConfig parse_config(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = ".") {
    PipelineConfig cfg;
    try {
        cfg.dataset_root = base_dir / j.at("dataset_root").get<std::string>();
        if (j.contains("scenes")) cfg.scenes = j.at("scenes").get<std::vector<std::string>>();
        if (j.contains("n_points")) cfg.n_points = j.at("n_points").get<int>();
        if (j.contains("sh_degree")) cfg.sh_degree = j.at("sh_degree").get<int>();
        if (j.contains("training_mode")) {
            cfg.training_mode = training_mode_from_string(j.at("training_mode").get<std::string>());
        }
        if (j.contains("positions_mode")) {
            cfg.positions_mode = j.at("positions_mode").get<std::string>();
            if (cfg.positions_mode != "gt" && cfg.positions_mode != "depth") {
                throw ConfigError("positions_mode must be gt or depth");
            }
        }
        if (j.contains("stage1")) {
            const auto& s = j.at("stage1");
            if (s.contains("lr")) cfg.stage1.lr = s.at("lr").get<double>();
            if (s.contains("epochs")) cfg.stage1.epochs = s.at("epochs").get<int>();
            if (s.contains("w_aux")) cfg.stage1.w_aux = s.at("w_aux").get<double>();
            if (s.contains("knn_k")) cfg.stage1.knn_k = s.at("knn_k").get<int>();
            if (s.contains("width")) cfg.stage1.width = s.at("width").get<int>();
        }
        if (j.contains("stage2")) {
            const auto& s = j.at("stage2");
            if (s.contains("lr")) cfg.stage2.lr = s.at("lr").get<double>();
            if (s.contains("epochs")) cfg.stage2.epochs = s.at("epochs").get<int>();
            if (s.contains("batch_size")) cfg.stage2.batch_size = s.at("batch_size").get<int>();
            if (s.contains("w_aux")) cfg.stage2.w_aux = s.at("w_aux").get<double>();
            if (s.contains("knn_k")) cfg.stage2.knn_k = s.at("knn_k").get<int>();
            if (s.contains("width")) cfg.stage2.width = s.at("width").get<int>();
        }
        if (j.contains("diffusion")) {
            const auto& s = j.at("diffusion");
            auto& d = cfg.diffusion;
            if (s.contains("timesteps")) d.timesteps = s.at("timesteps").get<int>();
            if (s.contains("beta_start")) d.beta_start = s.at("beta_start").get<double>();
            if (s.contains("beta_end")) d.beta_end = s.at("beta_end").get<double>();
            if (s.contains("schedule")) {
                d.schedule = s.at("schedule").get<std::string>();
                if (d.schedule != "linear" && d.schedule != "cosine") {
                    throw ConfigError("diffusion schedule must be linear or cosine");
                }
            }
            if (s.contains("lr")) d.lr = s.at("lr").get<double>();
            if (s.contains("epochs")) d.epochs = s.at("epochs").get<int>();
            if (s.contains("batch_size")) d.batch_size = s.at("batch_size").get<int>();
            if (s.contains("width")) d.width = s.at("width").get<int>();
            if (s.contains("clip_c0")) d.clip_c0 = s.at("clip_c0").get<double>();
            if (s.contains("gt_probability")) d.gt_probability = s.at("gt_probability").get<double>();
            if (s.contains("gt_noise_sigma")) d.gt_noise_sigma = s.at("gt_noise_sigma").get<double>();
            if (s.contains("refresh_every")) d.refresh_every = s.at("refresh_every").get<int>();
        }
        if (j.contains("regression")) {
            const auto& s = j.at("regression");
            auto& r = cfg.regression;
            if (s.contains("lr")) r.lr = s.at("lr").get<double>();
            if (s.contains("epochs")) r.epochs = s.at("epochs").get<int>();
            if (s.contains("batch_size")) r.batch_size = s.at("batch_size").get<int>();
            if (s.contains("width")) r.width = s.at("width").get<int>();
        }
        if (j.contains("input_view")) cfg.input_view = j.at("input_view").get<int>();
        if (!j.contains("seeds") || !j.at("seeds").contains("master")) {
            throw ConfigError("config must declare explicit seeds (seeds.master)");
        }
        cfg.seeds.master = j.at("seeds").at("master").get<std::uint64_t>();
        cfg.seeds.sampling = j.at("seeds").contains("sampling")
                                 ? j.at("seeds").at("sampling").get<std::uint64_t>()
                                 : cfg.seeds.master ^ 0x5eedULL;
        cfg.seeds.provided = true;
        cfg.proxy_dir = j.contains("proxy_dir") ? base_dir / j.at("proxy_dir").get<std::string>()
                                                : cfg.dataset_root / "proxy";
        cfg.output_dir = j.contains("output_dir") ? base_dir / j.at("output_dir").get<std::string>()
                                                  : cfg.dataset_root / "runs";
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }

    // environment override of the master seed
    if (const char* env = std::getenv("HUGDIFF_SEED")) {
        try {
            cfg.seeds.master = std::stoull(env);
        } catch (...) {
            throw ConfigError("HUGDIFF_SEED is not an integer: " + std::string(env));
        }
    }

    cfg.stage1.seed = cfg.seeds.master;
    cfg.stage2.seed = cfg.seeds.master ^ 0x2222;

    nlohmann::json echo = j;
    echo["seeds"]["master"] = cfg.seeds.master; // reflect the override
    cfg.raw = echo;

    if (!std::filesystem::exists(cfg.dataset_root)) {
        throw ConfigError("dataset root does not exist: " + cfg.dataset_root.string());
    }
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

} // namespace hugdiff
