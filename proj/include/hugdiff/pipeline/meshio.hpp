// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hugdiff/proxygt/surface.hpp"

namespace hugdiff {

// OBJ with the common vertex-color extension: "v x y z [r g b]".
inline TriangleMesh load_obj(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open " + path.string());
    std::vector<Vec3> verts, colors;
    std::vector<Eigen::Vector3i> faces;
    bool any_color = false;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) {
                throw IngestError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
            }
            verts.emplace_back(x, y, z);
            double r, g, b;
            if (ss >> r >> g >> b) {
                colors.emplace_back(r, g, b);
                any_color = true;
            } else {
                colors.emplace_back(0.5, 0.5, 0.5);
            }
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string piece;
            while (ss >> piece) {
                // v, v/vt, v//vn, v/vt/vn all start with the vertex index
                idx.push_back(std::stoi(piece.substr(0, piece.find('/'))));
            }
            if (idx.size() < 3) {
                throw IngestError(path.string() + ":" + std::to_string(lineno) + ": bad face");
            }
            for (std::size_t k = 2; k < idx.size(); ++k) {
                faces.emplace_back(idx[0] - 1, idx[k - 1] - 1, idx[k] - 1);
            }
        }
    }
    TriangleMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
    if (any_color) {
        mesh.vertex_colors.resize(static_cast<Eigen::Index>(colors.size()), 3);
        for (std::size_t i = 0; i < colors.size(); ++i)
            mesh.vertex_colors.row(static_cast<Eigen::Index>(i)) = colors[i].transpose();
    }
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const int v = faces[i][c];
            if (v < 0 || v >= static_cast<int>(verts.size())) {
                throw IngestError(path.string() + ": face references vertex " + std::to_string(v + 1));
            }
        }
        mesh.faces.row(static_cast<Eigen::Index>(i)) = faces[i];
    }
    return mesh;
}

inline void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IngestError("cannot open " + path.string() + " for writing");
    const bool colored = mesh.vertex_colors.rows() == mesh.vertices.rows();
    for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
        f << "v " << mesh.vertices(i, 0) << " " << mesh.vertices(i, 1) << " "
          << mesh.vertices(i, 2);
        if (colored) {
            f << " " << mesh.vertex_colors(i, 0) << " " << mesh.vertex_colors(i, 1) << " "
              << mesh.vertex_colors(i, 2);
        }
        f << "\n";
    }
    for (Eigen::Index i = 0; i < mesh.faces.rows(); ++i) {
        f << "f " << mesh.faces(i, 0) + 1 << " " << mesh.faces(i, 1) + 1 << " "
          << mesh.faces(i, 2) + 1 << "\n";
    }
}

// PLY point clouds (ascii or binary little-endian) with optional uchar or
// float color properties; face elements, when present, turn the result into
// a mesh.
inline SurfaceSource load_surface_ply(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestError("cannot open " + path.string());
    std::string line;
    std::getline(f, line);
    if (line.rfind("ply", 0) != 0) throw IngestError(path.string() + ": not a ply file");
    bool binary = false;
    int vertex_count = 0, face_count = 0;
    struct Prop {
        std::string name;
        std::string type;
    };
    std::vector<Prop> vprops;
    std::string element;
    while (std::getline(f, line) && line.rfind("end_header", 0) != 0) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "binary_little_endian") binary = true;
            else if (fmt != "ascii") throw IngestError(path.string() + ": unsupported ply format " + fmt);
        } else if (tag == "element") {
            std::string name;
            int count;
            ss >> name >> count;
            element = name;
            if (name == "vertex") vertex_count = count;
            else if (name == "face") face_count = count;
        } else if (tag == "property" && element == "vertex") {
            std::string type, name;
            ss >> type >> name;
            if (type == "list") throw IngestError(path.string() + ": list property on vertices");
            vprops.push_back({name, type});
        }
    }
    if (vertex_count == 0) throw IngestError(path.string() + ": no vertices");

    auto prop_size = [&](const std::string& t) -> int {
        if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" || t == "uint32") return 4;
        if (t == "double" || t == "float64") return 8;
        if (t == "uchar" || t == "uint8" || t == "char" || t == "int8") return 1;
        if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
        throw IngestError(path.string() + ": unsupported property type " + t);
    };

    Mat pts(vertex_count, 3);
    Mat cols = Mat::Constant(vertex_count, 3, 0.5);
    bool any_color = false;
    auto assign = [&](int row, const std::string& name, double value, const std::string& type) {
        if (name == "x") pts(row, 0) = value;
        else if (name == "y") pts(row, 1) = value;
        else if (name == "z") pts(row, 2) = value;
        else if (name == "red" || name == "r") {
            cols(row, 0) = type == "uchar" || type == "uint8" ? value / 255.0 : value;
            any_color = true;
        } else if (name == "green" || name == "g") {
            cols(row, 1) = type == "uchar" || type == "uint8" ? value / 255.0 : value;
        } else if (name == "blue" || name == "b") {
            cols(row, 2) = type == "uchar" || type == "uint8" ? value / 255.0 : value;
        }
    };

    std::vector<Eigen::Vector3i> faces;
    if (binary) {
        for (int i = 0; i < vertex_count; ++i) {
            for (const auto& p : vprops) {
                const int size = prop_size(p.type);
                unsigned char buf[8];
                f.read(reinterpret_cast<char*>(buf), size);
                if (!f) throw IngestError(path.string() + ": truncated vertex data");
                double value = 0.0;
                if (p.type == "float" || p.type == "float32") {
                    float v;
                    std::memcpy(&v, buf, 4);
                    value = v;
                } else if (p.type == "double" || p.type == "float64") {
                    std::memcpy(&value, buf, 8);
                } else if (p.type == "uchar" || p.type == "uint8") {
                    value = buf[0];
                } else if (p.type == "short" || p.type == "int16") {
                    std::int16_t v;
                    std::memcpy(&v, buf, 2);
                    value = v;
                } else if (p.type == "ushort" || p.type == "uint16") {
                    std::uint16_t v;
                    std::memcpy(&v, buf, 2);
                    value = v;
                } else {
                    std::int32_t v;
                    std::memcpy(&v, buf, 4);
                    value = v;
                }
                assign(i, p.name, value, p.type);
            }
        }
        for (int i = 0; i < face_count; ++i) {
            unsigned char n;
            f.read(reinterpret_cast<char*>(&n), 1);
            std::vector<int> idx(n);
            for (int k = 0; k < n; ++k) {
                std::int32_t v;
                f.read(reinterpret_cast<char*>(&v), 4);
                idx[static_cast<std::size_t>(k)] = v;
            }
            if (!f) throw IngestError(path.string() + ": truncated face data");
            for (std::size_t k = 2; k < idx.size(); ++k)
                faces.emplace_back(idx[0], idx[k - 1], idx[k]);
        }
    } else {
        for (int i = 0; i < vertex_count; ++i) {
            std::getline(f, line);
            std::istringstream ss(line);
            for (const auto& p : vprops) {
                double value;
                if (!(ss >> value)) throw IngestError(path.string() + ": truncated vertex line");
                assign(i, p.name, value, p.type);
            }
        }
        for (int i = 0; i < face_count; ++i) {
            std::getline(f, line);
            std::istringstream ss(line);
            int n;
            ss >> n;
            std::vector<int> idx(static_cast<std::size_t>(n));
            for (int k = 0; k < n; ++k) ss >> idx[static_cast<std::size_t>(k)];
            for (std::size_t k = 2; k < idx.size(); ++k)
                faces.emplace_back(idx[0], idx[k - 1], idx[k]);
        }
    }

    if (!faces.empty()) {
        TriangleMesh mesh;
        mesh.vertices = pts;
        if (any_color) mesh.vertex_colors = cols;
        mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
        for (std::size_t i = 0; i < faces.size(); ++i) mesh.faces.row(static_cast<Eigen::Index>(i)) = faces[i];
        return SurfaceSource::from_mesh(std::move(mesh));
    }
    ColoredCloud cloud;
    cloud.points = pts;
    if (any_color) cloud.colors = cols;
    return SurfaceSource::from_cloud(std::move(cloud));
}

inline SurfaceSource load_surface(const std::filesystem::path& path) {
    if (path.extension() == ".obj") return SurfaceSource::from_mesh(load_obj(path));
    if (path.extension() == ".ply") return load_surface_ply(path);
    throw IngestError("unsupported surface format: " + path.string());
}

} // namespace hugdiff
