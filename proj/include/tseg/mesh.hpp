#pragma once

#include "tseg/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace tseg {

using Face = std::array<std::int32_t, 3>;

/// Indexed triangle mesh, coordinates in millimeters.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<Vec3> normals; ///< optional per-vertex unit normals; empty when absent

    std::size_t vertex_count() const noexcept { return vertices.size(); }
    std::size_t face_count() const noexcept { return faces.size(); }
};

/// Per-face instance ids, 0 = background.
struct FaceLabeling {
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    int operator[](std::size_t i) const { return labels[i]; }
    int& operator[](std::size_t i) { return labels[i]; }
    bool operator==(const FaceLabeling&) const = default;
};

/// Per-vertex FDI codes, 0 = gingiva / unlabeled.
struct VertexLabeling {
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    bool operator==(const VertexLabeling&) const = default;
};

/// Oriented box summary of an instance. Extents sorted descending, axes match.
struct ObbExtents {
    std::array<double, 3> extents{};
    std::array<Vec3, 3> axes{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    Vec3 center = Vec3::Zero();
    bool degenerate = false;

    double volume() const noexcept { return extents[0] * extents[1] * extents[2]; }
};

struct FaceGeometry {
    std::vector<Vec3> centroids;
    std::vector<double> areas;
};

constexpr double kDegenerateFaceArea = 1e-12;
constexpr double kMinObbExtent = 0.1;

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
Vec3 face_normal(const TriMesh& mesh, std::size_t f); ///< unit normal (zero for degenerate faces)

/// Checks index bounds and repeated indices; throws ParseError on violation.
void validate_topology(const TriMesh& mesh);

/// Removes faces with repeated indices or area <= kDegenerateFaceArea. Returns kept face indices.
std::vector<std::size_t> drop_degenerate_faces(TriMesh& mesh);

FaceGeometry face_geometry(const TriMesh& mesh);
double total_area(const TriMesh& mesh);

bool has_label(const FaceLabeling& labeling, int id);
std::vector<int> instance_ids(const FaceLabeling& labeling); ///< sorted distinct nonzero labels

/// Area-weighted mean of the centroids of faces carrying `id`.
Vec3 instance_centroid(const TriMesh& mesh, const FaceLabeling& labeling, int id);
Vec3 instance_centroid(const FaceGeometry& geom, const FaceLabeling& labeling, int id);

/// PCA box: axes from the area-weighted covariance of face centroids, extents from the
/// projections of the instance's vertices. Extents are floored at kMinObbExtent.
ObbExtents instance_obb(const TriMesh& mesh, const FaceLabeling& labeling, int id);
ObbExtents obb_of_faces(const TriMesh& mesh, std::span<const std::size_t> faces);

/// Discrete mean curvature |H| per vertex from the cotangent Laplacian, before normalization.
/// Boundary and isolated vertices get 0.
std::vector<double> mean_curvature(const TriMesh& mesh);

/// mean_curvature clamped to its [5th, 95th] percentile and mapped to [0, 1].
std::vector<double> vertex_curvature(const TriMesh& mesh);
std::vector<double> normalize_percentile(std::span<const double> values, double lo_pct = 0.05,
                                         double hi_pct = 0.95);

/// Face label = majority of its three vertex labels; a three-way split gives 0.
FaceLabeling fdi_vertex_to_face(const TriMesh& mesh, const VertexLabeling& vl);
/// Vertex label = incident-face label with the largest total area (ties -> smaller label).
VertexLabeling fdi_face_to_vertex(const TriMesh& mesh, const FaceLabeling& fl);

/// Faces sharing an edge with each face.
std::vector<std::vector<std::int32_t>> face_edge_neighbors(const TriMesh& mesh);

} // namespace tseg
