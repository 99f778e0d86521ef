#pragma once

#include "tseg/mesh.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace tseg {

enum class MeshFormat { obj, ply };
enum class PlyEncoding { ascii, binary_little_endian };

/// Optional integer properties carried by PLY files.
struct MeshAttributes {
    std::optional<std::vector<int>> face_label; ///< per-face `label` (instance ids)
    std::optional<std::vector<int>> face_fdi;   ///< per-face `fdi`
    std::optional<std::vector<int>> vertex_fdi; ///< per-vertex `fdi`
};

struct LoadedMesh {
    TriMesh mesh;
    MeshAttributes attributes;
    std::size_t dropped_faces = 0; ///< degenerate faces removed at load
};

LoadedMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
/// Format from the file extension (.obj / .ply).
LoadedMesh load_mesh(const std::filesystem::path& path);

LoadedMesh parse_obj(std::string_view text);
LoadedMesh parse_ply(std::string_view bytes);

std::string format_obj(const TriMesh& mesh);
std::string format_ply(const TriMesh& mesh, const MeshAttributes& attrs = {},
                       PlyEncoding encoding = PlyEncoding::binary_little_endian);

void save_obj(const std::filesystem::path& path, const TriMesh& mesh);
void save_ply(const std::filesystem::path& path, const TriMesh& mesh, const MeshAttributes& attrs = {},
              PlyEncoding encoding = PlyEncoding::binary_little_endian);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

} // namespace tseg
