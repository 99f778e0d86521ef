#include "support.hpp"
#include "tseg/mesh_io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

using namespace tseg;
using namespace tseg::testing;

namespace {

constexpr const char* kTetraObj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n";

std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("tseg_test_" + name);
}

} // namespace

TEST(MeshIo, TetrahedronObj)
{
    const auto loaded = parse_obj(kTetraObj);
    EXPECT_EQ(loaded.mesh.vertex_count(), 4u);
    EXPECT_EQ(loaded.mesh.face_count(), 4u);
    EXPECT_EQ(loaded.dropped_faces, 0u);
}

TEST(MeshIo, ObjIgnoresTextureAndNormalIndices)
{
    const auto loaded = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1\n");
    ASSERT_EQ(loaded.mesh.face_count(), 1u);
    EXPECT_EQ(loaded.mesh.faces[0], (Face{0, 1, 2}));
}

TEST(MeshIo, PlyIndexOutOfRangeIsParseError)
{
    const std::string ply = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                            "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
                            "0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n";
    EXPECT_THROW(parse_ply(ply), ParseError);
}

TEST(MeshIo, EmptyMeshIsParseError)
{
    EXPECT_THROW(parse_obj("v 0 0 0\nv 1 0 0\n"), ParseError);
}

TEST(MeshIo, MalformedObjIsParseError)
{
    EXPECT_THROW(parse_obj("v 0 zero 0\n"), ParseError);
}

TEST(MeshIo, DegenerateFacesDroppedAndCounted)
{
    const auto loaded = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\nf 1 1 3\n");
    EXPECT_EQ(loaded.mesh.face_count(), 1u);
    EXPECT_EQ(loaded.dropped_faces, 2u);
}

TEST(MeshIo, SyntheticArchRoundTripsBothFormats)
{
    const auto arch = default_arch(3);
    MeshAttributes attrs;
    attrs.face_label = arch.instances.labels;
    attrs.vertex_fdi = arch.fdi.labels;
    for (auto enc : {PlyEncoding::ascii, PlyEncoding::binary_little_endian}) {
        const auto back = parse_ply(format_ply(arch.mesh, attrs, enc));
        EXPECT_EQ(back.mesh.vertices, arch.mesh.vertices);
        EXPECT_EQ(back.mesh.faces, arch.mesh.faces);
        ASSERT_TRUE(back.attributes.face_label);
        EXPECT_EQ(*back.attributes.face_label, arch.instances.labels);
        ASSERT_TRUE(back.attributes.vertex_fdi);
        EXPECT_EQ(*back.attributes.vertex_fdi, arch.fdi.labels);
    }
    const auto obj = parse_obj(format_obj(arch.mesh));
    EXPECT_EQ(obj.mesh.vertices, arch.mesh.vertices);
    EXPECT_EQ(obj.mesh.faces, arch.mesh.faces);
}

TEST(MeshIo, FileRoundTripByExtension)
{
    const auto mesh = box_mesh({8, 4, 2});
    const auto ply = temp_path("box.ply");
    const auto obj = temp_path("box.obj");
    save_ply(ply, mesh);
    save_obj(obj, mesh);
    EXPECT_EQ(load_mesh(ply).mesh.faces, mesh.faces);
    EXPECT_EQ(load_mesh(obj).mesh.vertices, mesh.vertices);
    std::filesystem::remove(ply);
    std::filesystem::remove(obj);
    EXPECT_THROW(load_mesh(temp_path("box.stl")), ParseError);
}

TEST(FaceGeometry, UnitRightTriangle)
{
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    const auto g = face_geometry(m);
    EXPECT_NEAR((g.centroids[0] - Vec3(1.0 / 3, 1.0 / 3, 0)).norm(), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(g.areas[0], 0.5);
}

TEST(FaceGeometry, TranslationMovesCentroidsOnly)
{
    const auto arch = default_arch(2);
    const Vec3 t(3.5, -2.0, 11.0);
    const auto a = face_geometry(arch.mesh);
    const auto b = face_geometry(transformed(arch.mesh, Eigen::Matrix3d::Identity(), t));
    for (std::size_t f = 0; f < a.areas.size(); ++f) {
        EXPECT_NEAR((b.centroids[f] - a.centroids[f] - t).norm(), 0.0, 1e-9);
        EXPECT_NEAR(b.areas[f], a.areas[f], 1e-9 * std::max(1.0, a.areas[f]));
    }
}

TEST(FaceGeometry, TotalAreaMatchesIndependentRecompute)
{
    const auto arch = default_arch(4);
    long double sum = 0;
    for (const auto& f : arch.mesh.faces) {
        const Vec3& a = arch.mesh.vertices[f[0]];
        const Vec3& b = arch.mesh.vertices[f[1]];
        const Vec3& c = arch.mesh.vertices[f[2]];
        // Heron's formula, independent of the cross-product route.
        const long double x = (b - a).norm(), y = (c - b).norm(), z = (a - c).norm();
        const long double s = (x + y + z) / 2;
        sum += std::sqrt(std::max<long double>(0, s * (s - x) * (s - y) * (s - z)));
    }
    EXPECT_NEAR(total_area(arch.mesh), static_cast<double>(sum), 1e-9 * static_cast<double>(sum));
}

TEST(InstanceCentroid, SingleAndPairedFaces)
{
    TriMesh m;
    m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0}, {10, 0, 0}, {12, 0, 0}, {10, 2, 0}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    const auto g = face_geometry(m);
    EXPECT_NEAR((instance_centroid(m, FaceLabeling{{1, 0}}, 1) - g.centroids[0]).norm(), 0.0, 1e-12);
    EXPECT_NEAR((instance_centroid(m, FaceLabeling{{4, 4}}, 4) - (g.centroids[0] + g.centroids[1]) / 2).norm(), 0.0,
                1e-12);
    EXPECT_THROW(instance_centroid(m, FaceLabeling{{1, 0}}, 2), PreconditionError);
}

TEST(InstanceCentroid, MatchesMonteCarloSurfaceSamples)
{
    const auto arch = default_arch(5);
    const int id = 3;
    std::vector<std::size_t> faces;
    std::vector<double> cdf;
    double acc = 0;
    for (std::size_t f = 0; f < arch.mesh.face_count(); ++f) {
        if (arch.instances[f] != id) continue;
        const auto& t = arch.mesh.faces[f];
        acc += triangle_area(arch.mesh.vertices[t[0]], arch.mesh.vertices[t[1]], arch.mesh.vertices[t[2]]);
        faces.push_back(f);
        cdf.push_back(acc);
    }
    Rng rng(99);
    Vec3 sum = Vec3::Zero();
    const int n = 100'000;
    for (int i = 0; i < n; ++i) {
        const auto k = std::lower_bound(cdf.begin(), cdf.end(), rng.uniform() * acc) - cdf.begin();
        const auto& t = arch.mesh.faces[faces[std::min<std::size_t>(k, faces.size() - 1)]];
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1) u = 1 - u, v = 1 - v;
        const Vec3& a = arch.mesh.vertices[t[0]];
        sum += a + u * (arch.mesh.vertices[t[1]] - a) + v * (arch.mesh.vertices[t[2]] - a);
    }
    EXPECT_LT((instance_centroid(arch.mesh, arch.instances, id) - sum / n).norm(), 0.05);
}

TEST(InstanceObb, AxisAlignedBox)
{
    const auto box = box_mesh({8, 4, 2}, {1, 2, 3});
    const FaceLabeling all{std::vector<int>(box.face_count(), 1)};
    const auto obb = instance_obb(box, all, 1);
    EXPECT_NEAR(obb.extents[0], 8, 1e-6);
    EXPECT_NEAR(obb.extents[1], 4, 1e-6);
    EXPECT_NEAR(obb.extents[2], 2, 1e-6);
    EXPECT_FALSE(obb.degenerate);
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) EXPECT_LT(std::abs(obb.axes[i].dot(obb.axes[j])), 1e-9);
}

TEST(InstanceObb, RigidMotionKeepsExtents)
{
    const auto arch = default_arch(6);
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const auto moved = transformed(arch.mesh, random_rotation(rng), Vec3(rng.uniform(-50, 50), 4, -9));
        for (int id : {1, 7, 14}) {
            const auto a = instance_obb(arch.mesh, arch.instances, id);
            const auto b = instance_obb(moved, arch.instances, id);
            for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.extents[k], b.extents[k], 1e-6);
        }
    }
}

TEST(InstanceObb, ExtentsEncloseEveryVertex)
{
    const auto arch = default_arch(8);
    for (int id : instance_ids(arch.instances)) {
        const auto obb = instance_obb(arch.mesh, arch.instances, id);
        for (std::size_t f = 0; f < arch.mesh.face_count(); ++f) {
            if (arch.instances[f] != id) continue;
            for (auto vi : arch.mesh.faces[f]) {
                const Vec3 d = arch.mesh.vertices[vi] - obb.center;
                for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(d.dot(obb.axes[k])), obb.extents[k] / 2 + 1e-9);
            }
        }
    }
}

TEST(InstanceObb, FacePermutationInvariant)
{
    const auto arch = default_arch(9);
    std::vector<std::size_t> perm(arch.mesh.face_count());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    TriMesh shuffled = arch.mesh;
    FaceLabeling labels = arch.instances;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.faces[i] = arch.mesh.faces[perm[i]];
        labels[i] = arch.instances[perm[i]];
    }
    for (int id : {2, 9}) {
        const auto a = instance_obb(arch.mesh, arch.instances, id);
        const auto b = instance_obb(shuffled, labels, id);
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.extents[k], b.extents[k], 1e-9);
        EXPECT_NEAR((instance_centroid(arch.mesh, arch.instances, id) - instance_centroid(shuffled, labels, id)).norm(),
                    0.0, 1e-9);
    }
}

TEST(InstanceObb, CollinearInstanceIsFlaggedAndFloored)
{
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    m.faces = {{0, 1, 2}, {1, 2, 3}};
    const auto obb = obb_of_faces(m, std::vector<std::size_t>{0, 1});
    EXPECT_TRUE(obb.degenerate);
    for (double e : obb.extents) EXPECT_GE(e, kMinObbExtent);
}

TEST(Curvature, FlatGridIsZero)
{
    const auto grid = grid_mesh(10);
    for (double h : mean_curvature(grid)) EXPECT_NEAR(h, 0.0, 1e-9);
    for (double c : vertex_curvature(grid)) EXPECT_EQ(c, 0.0);
}

TEST(Curvature, SphereIsOneOverRadius)
{
    const double r = 5.0;
    const auto sphere = sphere_mesh(r);
    const auto h = mean_curvature(sphere);
    double lo = 1e9, hi = 0;
    // Skip the poles, whose fans are far from uniform.
    for (std::size_t v = 1; v + 1 < h.size(); ++v) {
        lo = std::min(lo, h[v]);
        hi = std::max(hi, h[v]);
        EXPECT_NEAR(h[v], 1.0 / r, 0.1 / r);
    }
    EXPECT_LT((hi - lo) / (1.0 / r), 0.1);
}

TEST(Curvature, NormalizedRangeIsUnitInterval)
{
    Rng rng(11);
    TriMesh m = grid_mesh(12);
    for (auto& v : m.vertices) v.z() = rng.uniform(-1, 1);
    const auto c = vertex_curvature(m);
    EXPECT_EQ(*std::min_element(c.begin(), c.end()), 0.0);
    EXPECT_EQ(*std::max_element(c.begin(), c.end()), 1.0);
}

TEST(Curvature, IsolatedVertexGetsZero)
{
    TriMesh m = grid_mesh(3);
    m.vertices.emplace_back(100, 100, 100);
    const auto h = mean_curvature(m);
    EXPECT_EQ(h.back(), 0.0);
}

TEST(FdiBridge, MajorityRule)
{
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
    m.faces = {{0, 1, 2}, {1, 3, 2}};
    EXPECT_EQ(fdi_vertex_to_face(m, VertexLabeling{{11, 11, 11, 11}}).labels, (std::vector<int>{11, 11}));
    EXPECT_EQ(fdi_vertex_to_face(m, VertexLabeling{{11, 11, 0, 0}}).labels, (std::vector<int>{11, 0}));
    EXPECT_EQ(fdi_vertex_to_face(m, VertexLabeling{{11, 21, 0, 21}}).labels, (std::vector<int>{0, 21}));
    EXPECT_THROW(fdi_vertex_to_face(m, VertexLabeling{{11}}), PreconditionError);
}

TEST(FdiBridge, FaceToVertexPrefersLargerArea)
{
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {-3, 0, 0}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    const auto vl = fdi_face_to_vertex(m, FaceLabeling{{31, 41}});
    EXPECT_EQ(vl.labels[0], 41); // shared vertex goes to the larger face
    EXPECT_EQ(vl.labels[1], 31);
    EXPECT_EQ(vl.labels[3], 41);
}

TEST(Topology, BoxIsOutwardWound)
{
    const auto box = box_mesh({2, 3, 4});
    const auto g = face_geometry(box);
    for (std::size_t f = 0; f < box.face_count(); ++f) EXPECT_GT(face_normal(box, f).dot(g.centroids[f]), 0.0);
    EXPECT_NO_THROW(validate_topology(box));
    TriMesh bad = box;
    bad.faces[0][1] = 42;
    EXPECT_THROW(validate_topology(bad), ParseError);
}
