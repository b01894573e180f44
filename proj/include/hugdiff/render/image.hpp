// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <png.h>

#include "hugdiff/common/error.hpp"

namespace hugdiff {

// Dense row-major image, values in [0,1] for color data.
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t size() const { return data.size(); }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

struct RenderedImage {
    Image rgb;   // H x W x 3
    Image alpha; // H x W x 1
};

inline void write_png(const Image& img, const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IngestError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IngestError("libpng failure writing " + path.string());
    }
    png_init_io(png, fp);
    const int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                const double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Image read_png(const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IngestError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IngestError("libpng failure reading " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_strip_16(png);
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = static_cast<int>(png_get_channels(png, info));
    Image img(height, width, channels == 1 ? 1 : 3);
    std::vector<png_byte> row(static_cast<std::size_t>(width) * channels);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                img.at(y, x, c) = row[static_cast<std::size_t>(x) * channels + c] / 255.0;
            }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

// 16-bit grayscale PNG depth map, values in millimeters; returned in meters.
inline void write_depth_png16(const Image& depth_m, const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IngestError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IngestError("libpng failure writing " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(depth_m.width),
                 static_cast<png_uint_32>(depth_m.height), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(depth_m.width) * 2);
    for (int y = 0; y < depth_m.height; ++y) {
        for (int x = 0; x < depth_m.width; ++x) {
            const double mm = std::clamp(depth_m.at(y, x, 0) * 1000.0, 0.0, 65535.0);
            const auto v = static_cast<std::uint16_t>(std::lround(mm));
            row[2 * static_cast<std::size_t>(x)] = static_cast<png_byte>(v >> 8);
            row[2 * static_cast<std::size_t>(x) + 1] = static_cast<png_byte>(v & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Image read_depth_png16(const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IngestError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IngestError("libpng failure reading " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    if (png_get_bit_depth(png, info) != 16 ||
        png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IngestError("depth png must be 16-bit grayscale: " + path.string());
    }
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    Image img(height, width, 1);
    std::vector<png_byte> row(static_cast<std::size_t>(width) * 2);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x) {
            const std::uint16_t v = static_cast<std::uint16_t>(
                (row[2 * static_cast<std::size_t>(x)] << 8) | row[2 * static_cast<std::size_t>(x) + 1]);
            img.at(y, x, 0) = v / 1000.0;
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

// Raw float32 depth: magic "HGDZ", u32 width, u32 height, row-major float32
// meters, little-endian.
inline void write_depth_f32(const Image& depth_m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IngestError("cannot open " + path.string() + " for writing");
    f.write("HGDZ", 4);
    const std::uint32_t w = static_cast<std::uint32_t>(depth_m.width);
    const std::uint32_t h = static_cast<std::uint32_t>(depth_m.height);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    for (int y = 0; y < depth_m.height; ++y)
        for (int x = 0; x < depth_m.width; ++x) {
            const float v = static_cast<float>(depth_m.at(y, x, 0));
            f.write(reinterpret_cast<const char*>(&v), 4);
        }
}

inline Image read_depth_f32(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestError("cannot open " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "HGDZ", 4) != 0) throw FormatError("bad depth magic", 0);
    std::uint32_t w = 0, h = 0;
    f.read(reinterpret_cast<char*>(&w), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    if (!f) throw FormatError("truncated depth header", 4);
    Image img(static_cast<int>(h), static_cast<int>(w), 1);
    for (std::size_t i = 0; i < img.size(); ++i) {
        float v;
        f.read(reinterpret_cast<char*>(&v), 4);
        if (!f) throw FormatError("truncated depth payload", 12 + i * 4);
        img.data[i] = v;
    }
    return img;
}

inline Image read_depth(const std::filesystem::path& path) {
    if (path.extension() == ".png") return read_depth_png16(path);
    return read_depth_f32(path);
}

} // namespace hugdiff
