#include "tseg/mesh.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

namespace tseg {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c)
{
    return 0.5 * (b - a).cross(c - a).norm();
}

Vec3 face_normal(const TriMesh& mesh, std::size_t f)
{
    const auto& [i, j, k] = mesh.faces[f];
    const Vec3 n = (mesh.vertices[j] - mesh.vertices[i]).cross(mesh.vertices[k] - mesh.vertices[i]);
    const double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

void validate_topology(const TriMesh& mesh)
{
    const auto nv = static_cast<std::int64_t>(mesh.vertices.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        for (auto idx : mesh.faces[f]) {
            if (idx < 0 || idx >= nv) {
                throw ParseError("face " + std::to_string(f) + " references vertex " +
                                 std::to_string(idx) + " but the mesh has " +
                                 std::to_string(nv) + " vertices");
            }
        }
    }
}

std::vector<std::size_t> drop_degenerate_faces(TriMesh& mesh)
{
    std::vector<std::size_t> kept;
    kept.reserve(mesh.faces.size());
    std::vector<Face> faces;
    faces.reserve(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& [i, j, k] = mesh.faces[f];
        if (i == j || j == k || i == k) continue;
        if (triangle_area(mesh.vertices[i], mesh.vertices[j], mesh.vertices[k]) <= kDegenerateFaceArea)
            continue;
        kept.push_back(f);
        faces.push_back(mesh.faces[f]);
    }
    mesh.faces = std::move(faces);
    return kept;
}

FaceGeometry face_geometry(const TriMesh& mesh)
{
    FaceGeometry g;
    g.centroids.resize(mesh.faces.size());
    g.areas.resize(mesh.faces.size());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Vec3& a = mesh.vertices[mesh.faces[f][0]];
        const Vec3& b = mesh.vertices[mesh.faces[f][1]];
        const Vec3& c = mesh.vertices[mesh.faces[f][2]];
        g.centroids[f] = (a + b + c) / 3.0;
        g.areas[f] = triangle_area(a, b, c);
    }
    return g;
}

double total_area(const TriMesh& mesh)
{
    const auto g = face_geometry(mesh);
    return std::accumulate(g.areas.begin(), g.areas.end(), 0.0);
}

bool has_label(const FaceLabeling& labeling, int id)
{
    return std::find(labeling.labels.begin(), labeling.labels.end(), id) != labeling.labels.end();
}

std::vector<int> instance_ids(const FaceLabeling& labeling)
{
    std::vector<int> ids;
    for (int l : labeling.labels)
        if (l != 0) ids.push_back(l);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

Vec3 instance_centroid(const FaceGeometry& geom, const FaceLabeling& labeling, int id)
{
    Vec3 sum = Vec3::Zero();
    double area = 0.0;
    bool found = false;
    for (std::size_t f = 0; f < labeling.labels.size(); ++f) {
        if (labeling.labels[f] != id) continue;
        found = true;
        sum += geom.areas[f] * geom.centroids[f];
        area += geom.areas[f];
    }
    if (!found) throw PreconditionError("instance " + std::to_string(id) + " is absent from the labeling");
    return sum / area;
}

Vec3 instance_centroid(const TriMesh& mesh, const FaceLabeling& labeling, int id)
{
    if (labeling.size() != mesh.face_count())
        throw PreconditionError("labeling length does not match face count");
    return instance_centroid(face_geometry(mesh), labeling, id);
}

ObbExtents obb_of_faces(const TriMesh& mesh, std::span<const std::size_t> faces)
{
    ObbExtents box;
    if (faces.empty()) {
        box.degenerate = true;
        box.extents = {kMinObbExtent, kMinObbExtent, kMinObbExtent};
        return box;
    }

    double area = 0.0;
    Vec3 mean = Vec3::Zero();
    std::vector<Vec3> centroids;
    std::vector<double> weights;
    centroids.reserve(faces.size());
    weights.reserve(faces.size());
    for (auto f : faces) {
        const Vec3& a = mesh.vertices[mesh.faces[f][0]];
        const Vec3& b = mesh.vertices[mesh.faces[f][1]];
        const Vec3& c = mesh.vertices[mesh.faces[f][2]];
        centroids.push_back((a + b + c) / 3.0);
        weights.push_back(triangle_area(a, b, c));
        mean += weights.back() * centroids.back();
        area += weights.back();
    }
    mean /= area;

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        const Vec3 d = centroids[i] - mean;
        cov += weights[i] * d * d.transpose();
    }
    cov /= area;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    const Eigen::Vector3d evals = solver.eigenvalues(); // ascending
    const double scale = std::max(evals(2), 0.0);
    box.degenerate = faces.size() < 3 || scale <= 0.0 || evals(1) <= 1e-12 * scale;

    std::array<Vec3, 3> axes;
    for (int k = 0; k < 3; ++k) {
        Vec3 a = solver.eigenvectors().col(2 - k).normalized();
        // sign convention: largest-magnitude component positive
        Eigen::Index arg = 0;
        a.cwiseAbs().maxCoeff(&arg);
        if (a(arg) < 0) a = -a;
        axes[k] = a;
    }

    std::array<double, 3> lo{+INFINITY, +INFINITY, +INFINITY};
    std::array<double, 3> hi{-INFINITY, -INFINITY, -INFINITY};
    for (auto f : faces) {
        for (auto vi : mesh.faces[f]) {
            const Vec3& p = mesh.vertices[vi];
            for (int k = 0; k < 3; ++k) {
                const double t = p.dot(axes[k]);
                lo[k] = std::min(lo[k], t);
                hi[k] = std::max(hi[k], t);
            }
        }
    }

    std::array<int, 3> order{0, 1, 2};
    std::array<double, 3> ext{};
    for (int k = 0; k < 3; ++k) ext[k] = hi[k] - lo[k];
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ext[a] > ext[b]; });

    Vec3 center = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
        const int src = order[k];
        box.axes[k] = axes[src];
        box.extents[k] = std::max(ext[src], kMinObbExtent);
        center += 0.5 * (lo[src] + hi[src]) * axes[src];
    }
    box.center = center;
    return box;
}

ObbExtents instance_obb(const TriMesh& mesh, const FaceLabeling& labeling, int id)
{
    if (labeling.size() != mesh.face_count())
        throw PreconditionError("labeling length does not match face count");
    std::vector<std::size_t> faces;
    for (std::size_t f = 0; f < labeling.size(); ++f)
        if (labeling.labels[f] == id) faces.push_back(f);
    if (faces.empty()) throw PreconditionError("instance " + std::to_string(id) + " is absent from the labeling");
    return obb_of_faces(mesh, faces);
}

namespace {

struct Edge {
    std::int32_t a, b, face;
};

std::vector<Edge> sorted_edges(const TriMesh& mesh)
{
    std::vector<Edge> edges;
    edges.reserve(mesh.faces.size() * 3);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        for (int k = 0; k < 3; ++k) {
            auto u = mesh.faces[f][k];
            auto v = mesh.faces[f][(k + 1) % 3];
            if (u > v) std::swap(u, v);
            edges.push_back({u, v, static_cast<std::int32_t>(f)});
        }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
        return std::tie(x.a, x.b, x.face) < std::tie(y.a, y.b, y.face);
    });
    return edges;
}

} // namespace

std::vector<std::vector<std::int32_t>> face_edge_neighbors(const TriMesh& mesh)
{
    std::vector<std::vector<std::int32_t>> nbrs(mesh.faces.size());
    const auto edges = sorted_edges(mesh);
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j].a == edges[i].a && edges[j].b == edges[i].b) ++j;
        for (std::size_t p = i; p < j; ++p)
            for (std::size_t q = i; q < j; ++q)
                if (p != q && edges[p].face != edges[q].face) nbrs[edges[p].face].push_back(edges[q].face);
        i = j;
    }
    for (auto& n : nbrs) {
        std::sort(n.begin(), n.end());
        n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    return nbrs;
}

std::vector<double> mean_curvature(const TriMesh& mesh)
{
    const std::size_t nv = mesh.vertices.size();
    std::vector<Vec3> lap(nv, Vec3::Zero());
    std::vector<double> area(nv, 0.0);
    std::vector<char> boundary(nv, 0);
    std::vector<char> used(nv, 0);

    for (const auto& face : mesh.faces) {
        const Vec3& p0 = mesh.vertices[face[0]];
        const Vec3& p1 = mesh.vertices[face[1]];
        const Vec3& p2 = mesh.vertices[face[2]];
        const double a = triangle_area(p0, p1, p2);
        for (int k = 0; k < 3; ++k) {
            const auto i = face[k];
            const auto j = face[(k + 1) % 3];
            const auto l = face[(k + 2) % 3];
            const Vec3& pi = mesh.vertices[i];
            const Vec3 e1 = mesh.vertices[j] - pi;
            const Vec3 e2 = mesh.vertices[l] - pi;
            const double cross = e1.cross(e2).norm();
            const double cot = cross > 0.0 ? e1.dot(e2) / cross : 0.0;
            // corner i is opposite edge (j, l)
            const Vec3 d = mesh.vertices[l] - mesh.vertices[j];
            lap[j] += 0.5 * cot * d;
            lap[l] -= 0.5 * cot * d;
            area[i] += a / 3.0;
            used[i] = 1;
        }
    }

    const auto edges = sorted_edges(mesh);
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j].a == edges[i].a && edges[j].b == edges[i].b) ++j;
        if (j - i == 1) boundary[edges[i].a] = boundary[edges[i].b] = 1;
        i = j;
    }

    std::vector<double> h(nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
        if (!used[v] || boundary[v] || area[v] <= 0.0) continue;
        h[v] = lap[v].norm() / (2.0 * area[v]);
    }
    return h;
}

std::vector<double> normalize_percentile(std::span<const double> values, double lo_pct, double hi_pct)
{
    std::vector<double> out(values.size(), 0.0);
    if (values.empty()) return out;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n1 = static_cast<double>(sorted.size() - 1);
    double lo = sorted[static_cast<std::size_t>(std::floor(lo_pct * n1))];
    double hi = sorted[static_cast<std::size_t>(std::ceil(hi_pct * n1))];
    if (!(hi > lo)) {
        lo = sorted.front();
        hi = sorted.back();
    }
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = (std::clamp(values[i], lo, hi) - lo) / (hi - lo);
    return out;
}

std::vector<double> vertex_curvature(const TriMesh& mesh)
{
    return normalize_percentile(mean_curvature(mesh));
}

FaceLabeling fdi_vertex_to_face(const TriMesh& mesh, const VertexLabeling& vl)
{
    if (vl.size() != mesh.vertex_count())
        throw PreconditionError("vertex labeling length does not match vertex count");
    FaceLabeling fl;
    fl.labels.resize(mesh.face_count(), 0);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const int a = vl.labels[mesh.faces[f][0]];
        const int b = vl.labels[mesh.faces[f][1]];
        const int c = vl.labels[mesh.faces[f][2]];
        if (a == b || a == c)
            fl.labels[f] = a;
        else if (b == c)
            fl.labels[f] = b;
    }
    return fl;
}

VertexLabeling fdi_face_to_vertex(const TriMesh& mesh, const FaceLabeling& fl)
{
    if (fl.size() != mesh.face_count())
        throw PreconditionError("face labeling length does not match face count");
    std::vector<std::vector<std::pair<int, double>>> votes(mesh.vertex_count());
    const auto geom = face_geometry(mesh);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        for (auto v : mesh.faces[f]) {
            auto& vv = votes[v];
            auto it = std::find_if(vv.begin(), vv.end(), [&](const auto& p) { return p.first == fl.labels[f]; });
            if (it == vv.end())
                vv.emplace_back(fl.labels[f], geom.areas[f]);
            else
                it->second += geom.areas[f];
        }
    }
    VertexLabeling vl;
    vl.labels.resize(mesh.vertex_count(), 0);
    for (std::size_t v = 0; v < votes.size(); ++v) {
        double best = -1.0;
        for (const auto& [label, a] : votes[v]) {
            if (a > best || (a == best && label < vl.labels[v])) {
                best = a;
                vl.labels[v] = label;
            }
        }
    }
    return vl;
}

} // namespace tseg
