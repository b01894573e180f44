// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hugdiff/common/error.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff {

// Attribute-set container: little-endian, magic "HGDA", u32 version = 1,
// u32 N, u32 sh_degree, then five contiguous float32 arrays in field order
// positions, opacities, scales, rotations, sh_coeffs (row-major per point).
inline constexpr char kHgdaMagic[4] = {'H', 'G', 'D', 'A'};
inline constexpr std::uint32_t kHgdaVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void put_f32(std::vector<std::uint8_t>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& buf, std::size_t off) {
    return static_cast<std::uint32_t>(buf[off]) | (static_cast<std::uint32_t>(buf[off + 1]) << 8) |
           (static_cast<std::uint32_t>(buf[off + 2]) << 16) |
           (static_cast<std::uint32_t>(buf[off + 3]) << 24);
}

inline float get_f32(const std::vector<std::uint8_t>& buf, std::size_t off) {
    const std::uint32_t bits = get_u32(buf, off);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void put_matrix(std::vector<std::uint8_t>& buf, const Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) put_f32(buf, static_cast<float>(m(i, j)));
}

} // namespace detail

inline std::vector<std::uint8_t> encode_set(const GaussianAttributeSet& set) {
    set.validate();
    std::vector<std::uint8_t> buf;
    const Eigen::Index n = set.size();
    buf.reserve(16 + static_cast<std::size_t>(n) * (11 + set.sh_coeffs.cols()) * 4);
    buf.insert(buf.end(), kHgdaMagic, kHgdaMagic + 4);
    detail::put_u32(buf, kHgdaVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(n));
    detail::put_u32(buf, static_cast<std::uint32_t>(set.sh_degree));
    detail::put_matrix(buf, set.positions);
    for (Eigen::Index i = 0; i < n; ++i) detail::put_f32(buf, static_cast<float>(set.opacities[i]));
    detail::put_matrix(buf, set.scales);
    detail::put_matrix(buf, set.rotations);
    detail::put_matrix(buf, set.sh_coeffs);
    return buf;
}

inline GaussianAttributeSet decode_set(const std::vector<std::uint8_t>& buf) {
    if (buf.size() < 16) throw FormatError("truncated header", buf.size());
    if (std::memcmp(buf.data(), kHgdaMagic, 4) != 0) throw FormatError("bad magic bytes", 0);
    const std::uint32_t version = detail::get_u32(buf, 4);
    if (version != kHgdaVersion) throw FormatError("unsupported version " + std::to_string(version), 4);
    const std::uint32_t n = detail::get_u32(buf, 8);
    const std::uint32_t degree = detail::get_u32(buf, 12);
    if (degree > 3) throw FormatError("sh_degree " + std::to_string(degree) + " out of range", 12);
    const std::size_t d = 3u * (degree + 1) * (degree + 1);
    const std::size_t floats = static_cast<std::size_t>(n) * (11 + d);
    const std::size_t expected = 16 + floats * 4;
    if (buf.size() < expected) throw FormatError("truncated payload", buf.size());

    GaussianAttributeSet set;
    set.sh_degree = static_cast<int>(degree);
    set.positions.resize(n, 3);
    set.opacities.resize(n);
    set.scales.resize(n, 3);
    set.rotations.resize(n, 4);
    set.sh_coeffs.resize(n, static_cast<Eigen::Index>(d));
    std::size_t off = 16;
    auto read_matrix = [&](Mat& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                m(i, j) = detail::get_f32(buf, off);
                off += 4;
            }
    };
    read_matrix(set.positions);
    for (std::uint32_t i = 0; i < n; ++i) {
        set.opacities[i] = detail::get_f32(buf, off);
        off += 4;
    }
    read_matrix(set.scales);
    read_matrix(set.rotations);
    read_matrix(set.sh_coeffs);
    return set;
}

inline void save_set(const GaussianAttributeSet& set, const std::filesystem::path& path) {
    const auto buf = encode_set(set);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing", 0);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline GaussianAttributeSet load_set(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string(), 0);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    return decode_set(buf);
}

// PLY export in the layout splat viewers expect: positions, zero normals,
// f_dc / f_rest (channel-major rest coefficients), raw opacity (logit) and
// raw scales (log). ASCII header, little-endian binary body.
inline void export_ply(const GaussianAttributeSet& set, const std::filesystem::path& path) {
    set.validate();
    const Eigen::Index n = set.size();
    const int nb = (set.sh_degree + 1) * (set.sh_degree + 1);
    const int nrest = 3 * (nb - 1);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string() + " for writing", 0);
    f << "ply\nformat binary_little_endian 1.0\nelement vertex " << n << "\n";
    const char* base[] = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (const char* p : base) f << "property float " << p << "\n";
    for (int i = 0; i < nrest; ++i) f << "property float f_rest_" << i << "\n";
    f << "property float opacity\n";
    for (int i = 0; i < 3; ++i) f << "property float scale_" << i << "\n";
    for (int i = 0; i < 4; ++i) f << "property float rot_" << i << "\n";
    f << "end_header\n";
    auto put = [&](double v) {
        const float x = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&x), 4);
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) put(set.positions(i, c));
        for (int c = 0; c < 3; ++c) put(0.0);
        for (int c = 0; c < 3; ++c) put(set.sh_coeffs(i, c));
        // rest coefficients go channel-major
        for (int ch = 0; ch < 3; ++ch)
            for (int b = 1; b < nb; ++b) put(set.sh_coeffs(i, 3 * b + ch));
        const double a = std::clamp(set.opacities[i], 1e-7, 1.0 - 1e-7);
        put(std::log(a / (1.0 - a)));
        for (int c = 0; c < 3; ++c) put(std::log(set.scales(i, c)));
        for (int c = 0; c < 4; ++c) put(set.rotations(i, c));
    }
}

} // namespace hugdiff
