#include "tseg/render.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <tuple>

namespace tseg::render {

OcclusalFrame estimate_occlusal_frame(const TriMesh& mesh)
{
    if (mesh.vertices.size() < 3) throw PreconditionError("occlusal frame needs at least 3 vertices");

    Vec3 mean = Vec3::Zero();
    for (const auto& v : mesh.vertices) mean += v;
    mean /= static_cast<double>(mesh.vertices.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& v : mesh.vertices) {
        const Vec3 d = v - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(mesh.vertices.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    const Eigen::Vector3d ev = solver.eigenvalues();
    if (ev(1) <= 1e-12 * std::max(ev(2), 1e-300)) throw PreconditionError("occlusal frame: vertices are collinear");

    OcclusalFrame frame;
    frame.planar = ev(0) <= 1e-9 * ev(2);

    Vec3 normal_sum = Vec3::Zero();
    Vec3 centroid = Vec3::Zero();
    double area = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Vec3& a = mesh.vertices[mesh.faces[f][0]];
        const Vec3& b = mesh.vertices[mesh.faces[f][1]];
        const Vec3& c = mesh.vertices[mesh.faces[f][2]];
        const Vec3 n = 0.5 * (b - a).cross(c - a);
        const double fa = n.norm();
        normal_sum += n;
        centroid += fa * (a + b + c) / 3.0;
        area += fa;
    }
    frame.origin = area > 0.0 ? Vec3(centroid / area) : mean;

    Vec3 up = solver.eigenvectors().col(0).normalized();
    if (frame.planar && normal_sum.norm() > 0.0) {
        // exact plane normal, immune to eigen-solver noise in the null direction
        const Vec3 n = normal_sum.normalized();
        if (std::abs(n.dot(up)) > 0.5) up = n;
    }
    if (normal_sum.dot(up) < 0.0) up = -up;

    // anterior: in-plane principal axis with the largest |skewness|
    std::array<Vec3, 2> cand{solver.eigenvectors().col(2).normalized(), solver.eigenvectors().col(1).normalized()};
    std::array<double, 2> skew{};
    for (int k = 0; k < 2; ++k) {
        cand[k] = (cand[k] - cand[k].dot(up) * up).normalized();
        double m2 = 0.0, m3 = 0.0;
        for (const auto& v : mesh.vertices) {
            const double t = (v - mean).dot(cand[k]);
            m2 += t * t;
            m3 += t * t * t;
        }
        const double n = static_cast<double>(mesh.vertices.size());
        m2 /= n;
        m3 /= n;
        skew[k] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    }
    const int pick = std::abs(skew[0]) >= std::abs(skew[1]) ? 0 : 1;
    Vec3 anterior = cand[pick];
    // incisors sit where the vertex mass piles up; the long tail runs back along the molars
    if (skew[pick] > 0.0) anterior = -anterior;

    frame.up = up;
    frame.anterior = anterior;
    frame.right = anterior.cross(up).normalized();

    double r = 0.0;
    for (const auto& v : mesh.vertices) r = std::max(r, (v - frame.origin).norm());
    frame.bounding_radius = r > 0.0 ? r : 1.0;
    return frame;
}

Vec3 Camera::right() const
{
    Vec3 r = forward().cross(up_hint);
    if (r.norm() < 1e-12) r = forward().cross(std::abs(forward().z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX());
    return r.normalized();
}

Vec3 Camera::up() const { return right().cross(forward()).normalized(); }

std::vector<Camera> make_view_set(const OcclusalFrame& frame, const ViewConfig& cfg)
{
    if (cfg.width < 64 || cfg.height < 64) throw PreconditionError("image size must be at least 64x64");
    const int per_view = std::clamp(cfg.per_view_perturbations, 0, kMaxPerturbations);
    const double dist = cfg.distance_scale * frame.bounding_radius;
    const double half_height = cfg.half_height_scale * frame.bounding_radius;

    struct Base {
        const char* name;
        Vec3 dir;      // origin -> eye
        Vec3 up_hint;
        Vec3 a, b;     // perturbation axes
        char a_tag, b_tag;
    };
    auto horizontal = [&](const char* name, const Vec3& d) {
        return Base{name, d, frame.up, frame.up, frame.up.cross(d).normalized(), 'u', 't'};
    };
    const std::array<Base, 5> bases{
        Base{"occlusal", frame.up, frame.anterior, frame.anterior, frame.right, 'a', 'r'},
        horizontal("anterior", frame.anterior),
        horizontal("posterior", -frame.anterior),
        horizontal("left", -frame.right),
        horizontal("right", frame.right),
    };
    static constexpr std::array<double, 3> kAngles{30.0, 20.0, 10.0};

    std::vector<Camera> cams;
    for (const auto& base : bases) {
        auto make = [&](const Vec3& dir, std::string tag) {
            Camera c;
            c.look_at = frame.origin;
            c.eye = frame.origin + dist * dir.normalized();
            c.up_hint = base.up_hint;
            c.half_height = half_height;
            c.width = cfg.width;
            c.height = cfg.height;
            c.view_tag = std::move(tag);
            return c;
        };
        cams.push_back(make(base.dir, base.name));
        for (int k = 0; k < per_view; ++k) {
            const double deg = kAngles[k / 4];
            const double sign = (k % 4) < 2 ? 1.0 : -1.0;
            const bool use_a = k % 2 == 0;
            const Vec3& axis = use_a ? base.a : base.b;
            const double th = sign * deg * std::numbers::pi / 180.0;
            const Vec3 dir = std::cos(th) * base.dir + std::sin(th) * axis;
            std::string tag = std::string(base.name) + "_" + (use_a ? base.a_tag : base.b_tag) +
                              (sign > 0 ? "+" : "-") + std::to_string(static_cast<int>(deg));
            cams.push_back(make(dir, std::move(tag)));
        }
    }
    return cams;
}

namespace {

struct ScreenVertex {
    double x, y, z;
};

// Edge function evaluated on a canonically ordered edge so that the two triangles sharing an
// edge see exactly negated values.
double edge_fn(const ScreenVertex& a, const ScreenVertex& b, double px, double py)
{
    const bool swap = std::tie(a.x, a.y) > std::tie(b.x, b.y);
    const ScreenVertex& p = swap ? b : a;
    const ScreenVertex& q = swap ? a : b;
    const double e = (q.x - p.x) * (py - p.y) - (q.y - p.y) * (px - p.x);
    return swap ? -e : e;
}

bool top_left(const ScreenVertex& a, const ScreenVertex& b)
{
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

std::array<double, 3> curvature_ramp(double k)
{
    // gray (170) at 0 to pure red at 1
    return {170.0 + 85.0 * k, 170.0 * (1.0 - k), 170.0 * (1.0 - k)};
}

} // namespace

RenderOutput rasterize(const TriMesh& mesh, const Camera& camera, const RenderStyle& style,
                       std::span<const double> curvature)
{
    std::vector<double> own_curv;
    if (style.curvature_overlay_weight > 0.0 && curvature.size() != mesh.vertex_count()) {
        own_curv = vertex_curvature(mesh);
        curvature = own_curv;
    }

    const int w = camera.width;
    const int h = camera.height;
    RenderOutput out;
    out.camera = camera;
    out.rgb = ImageRGB(w, h);
    out.face_id.assign(static_cast<std::size_t>(w) * h, -1);
    out.depth.assign(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::infinity());

    const Vec3 F = camera.forward();
    const Vec3 R = camera.right();
    const Vec3 U = camera.up();
    const double pix = camera.pixel_size();
    const double hh = camera.half_height;
    const double hw = hh * w / h;

    std::vector<ScreenVertex> sv(mesh.vertex_count());
    for (std::size_t i = 0; i < sv.size(); ++i) {
        const Vec3 d = mesh.vertices[i] - camera.look_at;
        sv[i] = {(d.dot(R) + hw) / pix, (hh - d.dot(U)) / pix, (mesh.vertices[i] - camera.eye).dot(F)};
    }

    std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        ScreenVertex v0 = sv[mesh.faces[f][0]];
        ScreenVertex v1 = sv[mesh.faces[f][1]];
        ScreenVertex v2 = sv[mesh.faces[f][2]];
        double area = edge_fn(v0, v1, v2.x, v2.y);
        if (area == 0.0) continue;
        if (area < 0.0) {
            std::swap(v1, v2);
            area = -area;
        }
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({v0.x, v1.x, v2.x}) - 0.5)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({v0.x, v1.x, v2.x}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({v0.y, v1.y, v2.y}) - 0.5)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({v0.y, v1.y, v2.y}) - 0.5)));
        if (x0 > x1 || y0 > y1) continue;
        const bool tl0 = top_left(v1, v2);
        const bool tl1 = top_left(v2, v0);
        const bool tl2 = top_left(v0, v1);
        for (int y = y0; y <= y1; ++y) {
            const double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                const double w0 = edge_fn(v1, v2, px, py);
                const double w1 = edge_fn(v2, v0, px, py);
                const double w2 = edge_fn(v0, v1, px, py);
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                if ((w0 == 0.0 && !tl0) || (w1 == 0.0 && !tl1) || (w2 == 0.0 && !tl2)) continue;
                const double z = (w0 * v0.z + w1 * v1.z + w2 * v2.z) / area;
                const std::size_t idx = static_cast<std::size_t>(y) * w + x;
                if (z < zbuf[idx]) {
                    zbuf[idx] = z;
                    out.face_id[idx] = static_cast<std::int32_t>(f);
                }
            }
        }
    }

    // shade per face, then resolve pixels
    static constexpr std::array<double, 3> kBase{228.0, 222.0, 206.0};
    const double wc = std::clamp(style.curvature_overlay_weight, 0.0, 1.0);
    std::vector<std::array<std::uint8_t, 3>> face_color(mesh.face_count());
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const double shade = style.flat_shaded ? 0.25 + 0.75 * std::abs(face_normal(mesh, f).dot(F)) : 1.0;
        std::array<double, 3> col = kBase;
        if (wc > 0.0) {
            const double k = (curvature[mesh.faces[f][0]] + curvature[mesh.faces[f][1]] + curvature[mesh.faces[f][2]]) / 3.0;
            const auto ramp = curvature_ramp(k);
            for (int c = 0; c < 3; ++c) col[c] = (1.0 - wc) * col[c] + wc * ramp[c];
        }
        for (int c = 0; c < 3; ++c)
            face_color[f][c] = static_cast<std::uint8_t>(std::clamp(std::lround(shade * col[c]), 0L, 255L));
    }
    for (std::size_t idx = 0; idx < out.face_id.size(); ++idx) {
        const auto f = out.face_id[idx];
        if (f < 0) continue;
        out.depth[idx] = static_cast<float>(zbuf[idx]);
        std::copy(face_color[f].begin(), face_color[f].end(), out.rgb.data.begin() + idx * 3);
    }
    return out;
}

namespace {

constexpr std::uint8_t kDigits[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
};

} // namespace

std::span<const std::uint8_t, 7> digit_glyph(int digit)
{
    return std::span<const std::uint8_t, 7>(kDigits[std::clamp(digit, 0, 9)], 7);
}

OverlayResult overlay_instance_ids(const RenderOutput& out, const FaceLabeling& labeling, const OverlayConfig& cfg)
{
    struct Acc {
        long long n = 0;
        double sx = 0.0, sy = 0.0;
    };
    const int w = out.width();
    const int h = out.height();
    std::map<int, Acc> acc;
    for (int id : instance_ids(labeling)) acc[id];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto f = out.face_id[static_cast<std::size_t>(y) * w + x];
            if (f < 0 || static_cast<std::size_t>(f) >= labeling.size()) continue;
            const int id = labeling.labels[f];
            if (id == 0) continue;
            auto& a = acc[id];
            ++a.n;
            a.sx += x + 0.5;
            a.sy += y + 0.5;
        }
    }

    OverlayResult res;
    res.image = out.rgb;
    const int s = cfg.scale > 0 ? cfg.scale : std::max(1, h / 200);
    for (const auto& [id, a] : acc) {
        if (a.n < cfg.min_pixels) {
            res.skipped.push_back(id);
            continue;
        }
        const std::string text = std::to_string(id);
        const int tw = (static_cast<int>(text.size()) * 6 - 1) * s;
        const int th = 7 * s;
        const int ox = static_cast<int>(std::lround(a.sx / a.n - tw / 2.0));
        const int oy = static_cast<int>(std::lround(a.sy / a.n - th / 2.0));

        std::vector<char> lit(static_cast<std::size_t>(tw) * th, 0);
        for (std::size_t c = 0; c < text.size(); ++c) {
            const auto glyph = digit_glyph(text[c] - '0');
            for (int r = 0; r < 7; ++r)
                for (int col = 0; col < 5; ++col)
                    if (glyph[r] & (0x10 >> col))
                        for (int dy = 0; dy < s; ++dy)
                            for (int dx = 0; dx < s; ++dx)
                                lit[static_cast<std::size_t>(r * s + dy) * tw + (static_cast<int>(c) * 6 + col) * s + dx] = 1;
        }
        auto paint = [&](int x, int y, std::uint8_t v) {
            if (x < 0 || y < 0 || x >= w || y >= h) return;
            auto* p = res.image.at(x, y);
            p[0] = p[1] = p[2] = v;
        };
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x)
                if (lit[static_cast<std::size_t>(y) * tw + x])
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = x + dx, yy = y + dy;
                            const bool inside = xx >= 0 && yy >= 0 && xx < tw && yy < th;
                            if (!inside || !lit[static_cast<std::size_t>(yy) * tw + xx]) paint(ox + xx, oy + yy, 0);
                        }
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x)
                if (lit[static_cast<std::size_t>(y) * tw + x]) paint(ox + x, oy + y, 255);

        GlyphBox box{id, std::max(0, ox - 1), std::max(0, oy - 1), std::min(w - 1, ox + tw), std::min(h - 1, oy + th)};
        res.drawn.push_back(box);
    }
    return res;
}

} // namespace tseg::render
