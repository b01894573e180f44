// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hugdiff/diffusion/model.hpp"

namespace hugdiff {

// Model checkpoint: magic "HGCK", u32 version, u64 header length, a JSON
// header carrying the config echo, the schedule and the blob directory,
// then float64 parameter blobs, little-endian.
inline constexpr char kCheckpointMagic[4] = {'H', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Generic named-blob container shared by every model type.
inline void save_blob_container(const std::filesystem::path& path,
                                const std::vector<nn::TensorRef>& refs, nlohmann::json header) {
    header["version"] = kCheckpointVersion;
    nlohmann::json blobs = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& r : refs) {
        blobs.push_back({{"name", r.name},
                         {"rows", r.value->rows()},
                         {"cols", r.value->cols()},
                         {"offset", offset}});
        offset += static_cast<std::uint64_t>(r.value->size()) * 8;
    }
    header["blobs"] = blobs;
    const std::string hstr = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing", 0);
    f.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t hlen = hstr.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hstr.data(), static_cast<std::streamsize>(hstr.size()));
    for (const auto& r : refs) {
        f.write(reinterpret_cast<const char*>(r.value->data()),
                static_cast<std::streamsize>(r.value->size() * 8));
    }
}

inline nlohmann::json read_blob_header(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string(), 0);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError("bad checkpoint magic", 0);
    }
    std::uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    }
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hstr(hlen, '\0');
    f.read(hstr.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw FormatError("truncated checkpoint header", 16);
    try {
        return nlohmann::json::parse(hstr);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what(), 16);
    }
}

inline void load_blobs_into(const std::filesystem::path& path, const nlohmann::json& header,
                            std::vector<nn::TensorRef>& refs) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string(), 0);
    f.seekg(8);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    const std::uint64_t start = 16 + hlen;
    for (const auto& jb : header.at("blobs")) {
        const std::string name = jb.at("name").get<std::string>();
        const auto rows = jb.at("rows").get<Eigen::Index>();
        const auto cols = jb.at("cols").get<Eigen::Index>();
        const auto offset = jb.at("offset").get<std::uint64_t>();
        nn::TensorRef* target = nullptr;
        for (auto& r : refs) {
            if (r.name == name) {
                target = &r;
                break;
            }
        }
        if (!target) throw FormatError("unknown blob " + name, start + offset);
        if (target->value->rows() != rows || target->value->cols() != cols) {
            throw FormatError("blob " + name + " shape mismatch", start + offset);
        }
        f.seekg(static_cast<std::streamoff>(start + offset));
        f.read(reinterpret_cast<char*>(target->value->data()),
               static_cast<std::streamsize>(target->value->size() * 8));
        if (!f) throw FormatError("truncated blob " + name, start + offset);
    }
}

inline nlohmann::json diffusion_config_to_json(const DiffusionModelConfig& cfg) {
    return {{"sh_degree", cfg.sh_degree},
            {"width", cfg.width},
            {"prior_points", cfg.prior_points},
            {"num_parts", cfg.num_parts},
            {"timesteps", cfg.timesteps},
            {"beta_start", cfg.beta_start},
            {"beta_end", cfg.beta_end},
            {"schedule_kind", cfg.schedule_kind == ScheduleKind::Linear ? "linear" : "cosine"},
            {"clip_c0", cfg.clip_c0},
            {"init_seed", cfg.init_seed},
            {"semantic",
             {{"index_dim", cfg.semantic.index_dim},
              {"dist_dim", cfg.semantic.dist_dim},
              {"label_dim", cfg.semantic.label_dim}}}};
}

inline DiffusionModelConfig diffusion_config_from_json(const nlohmann::json& jc) {
    DiffusionModelConfig cfg;
    cfg.sh_degree = jc.at("sh_degree").get<int>();
    cfg.width = jc.at("width").get<int>();
    cfg.prior_points = jc.at("prior_points").get<int>();
    cfg.num_parts = jc.at("num_parts").get<int>();
    cfg.timesteps = jc.at("timesteps").get<int>();
    cfg.beta_start = jc.at("beta_start").get<double>();
    cfg.beta_end = jc.at("beta_end").get<double>();
    cfg.schedule_kind = jc.at("schedule_kind").get<std::string>() == "cosine"
                            ? ScheduleKind::Cosine
                            : ScheduleKind::Linear;
    cfg.clip_c0 = jc.at("clip_c0").get<double>();
    cfg.init_seed = jc.at("init_seed").get<std::uint64_t>();
    cfg.semantic.index_dim = jc.at("semantic").at("index_dim").get<int>();
    cfg.semantic.dist_dim = jc.at("semantic").at("dist_dim").get<int>();
    cfg.semantic.label_dim = jc.at("semantic").at("label_dim").get<int>();
    return cfg;
}

inline void save_checkpoint(GsDiffusionModel& model, const BodyPrior& prior_like,
                            const std::filesystem::path& path,
                            const nlohmann::json& extra_config = {}) {
    (void)prior_like;
    nlohmann::json header;
    header["model_type"] = "diffusion";
    header["config"] = diffusion_config_to_json(model.cfg);
    if (!extra_config.is_null()) header["extra"] = extra_config;
    header["schedule_betas"] = std::vector<double>(
        model.sched.betas.data(), model.sched.betas.data() + model.sched.timesteps);
    save_blob_container(path, model.all_params(), header);
}

struct LoadedCheckpoint {
    GsDiffusionModel model;
    nlohmann::json extra_config;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                        const BodyPrior& prior_like) {
    const auto header = read_blob_header(path);
    if (header.value("model_type", "diffusion") != "diffusion") {
        throw FormatError("checkpoint is not a diffusion model", 16);
    }
    const DiffusionModelConfig cfg = diffusion_config_from_json(header.at("config"));
    LoadedCheckpoint out{GsDiffusionModel::create(cfg, prior_like), {}};
    if (header.contains("extra")) out.extra_config = header["extra"];

    // the stored betas are authoritative over the config echo
    const auto betas = header.at("schedule_betas").get<std::vector<double>>();
    if (static_cast<int>(betas.size()) != cfg.timesteps) {
        throw FormatError("schedule length disagrees with config", 16);
    }
    out.model.sched.timesteps = cfg.timesteps;
    out.model.sched.betas = Eigen::Map<const Vec>(betas.data(), static_cast<Eigen::Index>(betas.size()));
    out.model.sched.alphas = 1.0 - out.model.sched.betas.array();
    out.model.sched.alpha_bars.resize(cfg.timesteps);
    double acc = 1.0;
    for (int t = 0; t < cfg.timesteps; ++t) {
        acc *= out.model.sched.alphas[t];
        out.model.sched.alpha_bars[t] = acc;
    }
    out.model.sched.validate();

    auto refs = out.model.all_params();
    load_blobs_into(path, header, refs);
    return out;
}

} // namespace hugdiff
