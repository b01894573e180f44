// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "hugdiff/render/loss.hpp"

namespace hugdiff {

// Peak signal-to-noise ratio over all channels, inputs in [0,1].
inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("psnr operands differ in shape");
    const double m = mse(a, b);
    if (m <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

// Mean SSIM over valid 11x11 windows of the luma image (Rec.601 weights).
inline double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeError("ssim operands differ in shape");
    constexpr int r = kSsimWindow / 2;
    if (a.width < kSsimWindow || a.height < kSsimWindow) {
        throw ShapeError("image smaller than the ssim window");
    }
    const std::size_t plane = static_cast<std::size_t>(a.height) * a.width;
    std::vector<double> la(plane), lb(plane), laa(plane), lbb(plane), lab(plane);
    auto luma = [](const Image& img, int y, int x) {
        if (img.channels == 1) return img.at(y, x, 0);
        return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    };
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
            const double va = luma(a, y, x), vb = luma(b, y, x);
            la[i] = va;
            lb[i] = vb;
            laa[i] = va * va;
            lbb[i] = vb * vb;
            lab[i] = va * vb;
        }
    const auto mu_a = detail::conv_same(la, a.height, a.width);
    const auto mu_b = detail::conv_same(lb, a.height, a.width);
    const auto m_aa = detail::conv_same(laa, a.height, a.width);
    const auto m_bb = detail::conv_same(lbb, a.height, a.width);
    const auto m_ab = detail::conv_same(lab, a.height, a.width);
    // away from the border the zero-padded convolution equals the valid one
    double total = 0.0;
    int count = 0;
    for (int y = r; y < a.height - r; ++y)
        for (int x = r; x < a.width - r; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
            const double va = m_aa[i] - mu_a[i] * mu_a[i];
            const double vb = m_bb[i] - mu_b[i] * mu_b[i];
            const double vab = m_ab[i] - mu_a[i] * mu_b[i];
            const double a1 = 2.0 * mu_a[i] * mu_b[i] + kSsimC1;
            const double a2 = 2.0 * vab + kSsimC2;
            const double b1 = mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kSsimC1;
            const double b2 = va + vb + kSsimC2;
            total += (a1 * a2) / (b1 * b2);
            ++count;
        }
    return total / count;
}

struct EvalRow {
    std::string scene_id;
    int view = 0;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<std::string> warnings;
    double psnr_mean = 0.0;
    double ssim_mean = 0.0;
    double runtime_seconds = 0.0;
    std::string config_hash;

    void finalize() {
        psnr_mean = 0.0;
        ssim_mean = 0.0;
        if (rows.empty()) return;
        for (const auto& r : rows) {
            psnr_mean += r.psnr_db;
            ssim_mean += r.ssim_val;
        }
        psnr_mean /= static_cast<double>(rows.size());
        ssim_mean /= static_cast<double>(rows.size());
    }
};

inline nlohmann::json eval_report_to_json(const EvalReport& report) {
    auto num = [](double v) -> nlohmann::json {
        if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
        return v;
    };
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows) {
        j["rows"].push_back({{"scene_id", r.scene_id},
                             {"view", r.view},
                             {"psnr", num(r.psnr_db)},
                             {"ssim", r.ssim_val}});
    }
    j["aggregates"] = {{"psnr_mean", num(report.psnr_mean)},
                       {"ssim_mean", report.ssim_mean},
                       {"lpips_mean", nullptr}}; // reserved for external tools
    j["warnings"] = report.warnings;
    j["runtime_seconds"] = report.runtime_seconds;
    j["config_hash"] = report.config_hash;
    return j;
}

// Structural check used by tests and by downstream consumers.
inline void validate_eval_report_json(const nlohmann::json& j) {
    if (!j.contains("rows") || !j["rows"].is_array()) throw ShapeError("report lacks rows");
    for (const auto& r : j["rows"]) {
        if (!r.contains("scene_id") || !r.contains("view") || !r.contains("psnr") ||
            !r.contains("ssim")) {
            throw ShapeError("report row incomplete");
        }
        const double s = r["ssim"].get<double>();
        if (s < -1.0 || s > 1.0) throw ShapeError("ssim outside [-1, 1]");
    }
    if (!j.contains("aggregates") || !j.contains("config_hash") || !j.contains("runtime_seconds")) {
        throw ShapeError("report aggregates incomplete");
    }
}

} // namespace hugdiff
