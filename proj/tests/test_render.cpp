#include "support.hpp"
#include "tseg/image.hpp"
#include "tseg/render.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace tseg;
using namespace tseg::testing;
using render::Camera;

namespace {

Camera looking_down(double half_height, int size)
{
    Camera c;
    c.eye = {0, 0, 10};
    c.look_at = {0, 0, 0};
    c.up_hint = {0, 1, 0};
    c.half_height = half_height;
    c.width = c.height = size;
    c.view_tag = "test";
    return c;
}

render::RenderStyle plain()
{
    render::RenderStyle s;
    s.curvature_overlay_weight = 0.0;
    return s;
}

double angle_deg(const Vec3& a, const Vec3& b)
{
    return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

/// World point under the centre of pixel (x, y).
Vec3 pixel_center(const Camera& c, int x, int y)
{
    const double pix = c.pixel_size();
    const double hw = c.half_height * c.width / c.height;
    return c.look_at + c.right() * ((x + 0.5) * pix - hw) + c.up() * (c.half_height - (y + 0.5) * pix);
}

} // namespace

TEST(OcclusalFrame, PlanarMeshPointsUp)
{
    const auto grid = grid_mesh(8);
    const auto frame = render::estimate_occlusal_frame(grid);
    EXPECT_TRUE(frame.planar);
    EXPECT_NEAR((frame.up - Vec3::UnitZ()).norm(), 0.0, 1e-9);
}

TEST(OcclusalFrame, OrthonormalAndRightHanded)
{
    const auto frame = render::estimate_occlusal_frame(default_arch(1).mesh);
    EXPECT_NEAR(frame.up.norm(), 1.0, 1e-9);
    EXPECT_NEAR(frame.right.norm(), 1.0, 1e-9);
    EXPECT_NEAR(frame.anterior.norm(), 1.0, 1e-9);
    EXPECT_NEAR(frame.up.dot(frame.right), 0.0, 1e-9);
    EXPECT_NEAR(frame.up.dot(frame.anterior), 0.0, 1e-9);
    EXPECT_NEAR((frame.anterior.cross(frame.up) - frame.right).norm(), 0.0, 1e-9);
}

TEST(OcclusalFrame, AnteriorMatchesGenerator)
{
    for (Jaw jaw : {Jaw::lower, Jaw::upper})
        for (std::uint64_t seed : {1, 2, 3}) {
            const auto arch = default_arch(seed, jaw);
            const auto frame = render::estimate_occlusal_frame(arch.mesh);
            EXPECT_GT(frame.anterior.dot(synth::generator_anterior()), 0.95);
            EXPECT_GT(frame.up.dot(synth::generator_up(jaw)), 0.95);
        }
}

TEST(OcclusalFrame, RotationEquivariant)
{
    const auto arch = default_arch(2);
    const auto a = render::estimate_occlusal_frame(arch.mesh);
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const auto r = random_rotation(rng);
        const Vec3 t(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
        const auto b = render::estimate_occlusal_frame(transformed(arch.mesh, r, t));
        EXPECT_NEAR((r * a.up - b.up).norm(), 0.0, 1e-6);
        EXPECT_NEAR((r * a.anterior - b.anterior).norm(), 0.0, 1e-6);
        EXPECT_NEAR((r * a.right - b.right).norm(), 0.0, 1e-6);
        EXPECT_NEAR((r * a.origin + t - b.origin).norm(), 0.0, 1e-6);
    }
}

TEST(ViewSet, DefaultHasFifteenDistinctCameras)
{
    const auto cams = render::make_view_set(render::estimate_occlusal_frame(default_arch(1).mesh), {});
    ASSERT_EQ(cams.size(), 15u);
    std::set<std::string> tags;
    for (const auto& c : cams) tags.insert(c.view_tag);
    EXPECT_EQ(tags.size(), 15u);
}

TEST(ViewSet, BaseCamerasLookAlongFrameAxes)
{
    const auto frame = render::estimate_occlusal_frame(default_arch(1).mesh);
    render::ViewConfig cfg;
    cfg.per_view_perturbations = 0;
    const auto cams = render::make_view_set(frame, cfg);
    ASSERT_EQ(cams.size(), 5u);
    const std::array<Vec3, 5> forward{-frame.up, -frame.anterior, frame.anterior, frame.right, -frame.right};
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR((cams[i].forward() - forward[i]).norm(), 0.0, 1e-12) << cams[i].view_tag;
        EXPECT_NEAR((cams[i].eye - cams[i].look_at).norm(), 2.0 * frame.bounding_radius, 1e-9);
    }
}

TEST(ViewSet, TiltsStayWithinTenToThirtyDegrees)
{
    const auto frame = render::estimate_occlusal_frame(default_arch(1).mesh);
    render::ViewConfig cfg;
    cfg.per_view_perturbations = render::kMaxPerturbations;
    const auto cams = render::make_view_set(frame, cfg);
    const std::size_t group = render::kMaxPerturbations + 1;
    ASSERT_EQ(cams.size(), 5 * group);
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const double tilt = angle_deg(cams[i].forward(), cams[i - i % group].forward());
        if (i % group == 0)
            EXPECT_EQ(tilt, 0.0);
        else
            EXPECT_TRUE(tilt > 10.0 - 1e-9 && tilt < 30.0 + 1e-9) << cams[i].view_tag << " " << tilt;
    }
}

TEST(ViewSet, PureFunctionOfInputs)
{
    const auto frame = render::estimate_occlusal_frame(default_arch(1).mesh);
    const auto a = render::make_view_set(frame, {});
    const auto b = render::make_view_set(frame, {});
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].eye, b[i].eye);
        EXPECT_EQ(a[i].view_tag, b[i].view_tag);
    }
}

TEST(Rasterize, SingleTriangleCoversItsInterior)
{
    TriMesh m;
    m.vertices = {{-100, -100, 0}, {100, -100, 0}, {0, 100, 0}};
    m.faces = {{0, 1, 2}};
    const auto out = render::rasterize(m, looking_down(1.0, 64), plain());
    for (int v : out.face_id) EXPECT_EQ(v, 0);

    TriMesh small;
    small.vertices = {{-0.5, -0.5, 0}, {0.5, -0.5, 0}, {0, 0.5, 0}};
    small.faces = {{0, 1, 2}};
    const auto out2 = render::rasterize(small, looking_down(1.0, 64), plain());
    EXPECT_EQ(out2.face_id[0], -1);
    EXPECT_EQ(out2.face_id[32 * 64 + 32], 0);
}

TEST(Rasterize, NearerFaceWins)
{
    TriMesh m;
    m.vertices = {{-1, -1, -1}, {1, -1, -1}, {0, 1, -1}, {-1, -1, -2}, {1, -1, -2}, {0, 1, -2}};
    m.faces = {{3, 4, 5}, {0, 1, 2}};
    const auto out = render::rasterize(m, looking_down(2.0, 64), plain());
    int covered = 0;
    for (int v : out.face_id) {
        EXPECT_NE(v, 0);
        covered += v == 1;
    }
    EXPECT_GT(covered, 100);
}

TEST(Rasterize, CoverageMatchesProjectedArea)
{
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        TriMesh m;
        for (int k = 0; k < 3; ++k) m.vertices.emplace_back(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), 0.0);
        m.faces = {{0, 1, 2}};
        const double area = triangle_area(m.vertices[0], m.vertices[1], m.vertices[2]);
        if (area < 0.1) continue;
        const auto cam = looking_down(1.0, 512);
        const auto out = render::rasterize(m, cam, plain());
        const double pix = cam.pixel_size();
        long covered = 0;
        for (int v : out.face_id) covered += v == 0;
        EXPECT_NEAR(covered * pix * pix, area, 0.02 * area);
    }
}

TEST(Rasterize, SharedEdgesLeaveNoGaps)
{
    const auto grid = transformed(grid_mesh(6, 0.3), Eigen::Matrix3d::Identity(), Vec3(-0.9, -0.9, 0));
    const auto out = render::rasterize(grid, looking_down(1.0, 128), plain());
    const auto cam = out.camera;
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            const Vec3 p = pixel_center(cam, x, y);
            const bool inside = p.x() > -0.9 + 1e-6 && p.x() < 0.9 - 1e-6 && p.y() > -0.9 + 1e-6 && p.y() < 0.9 - 1e-6;
            if (inside) {
                EXPECT_GE(out.face_id[y * 128 + x], 0);
            }
        }
}

TEST(Rasterize, DeterministicBuffers)
{
    const auto arch = default_arch(3);
    const auto frame = render::estimate_occlusal_frame(arch.mesh);
    const auto cam = render::make_view_set(frame, {})[4];
    const auto a = render::rasterize(arch.mesh, cam, {});
    const auto b = render::rasterize(arch.mesh, cam, {});
    EXPECT_EQ(a.rgb, b.rgb);
    EXPECT_EQ(a.face_id, b.face_id);
    EXPECT_EQ(a.depth, b.depth);
}

TEST(Rasterize, FaceIdsLieOnTheirFaces)
{
    const auto arch = default_arch(4);
    const auto frame = render::estimate_occlusal_frame(arch.mesh);
    render::ViewConfig cfg;
    cfg.width = cfg.height = 200;
    cfg.per_view_perturbations = 1;
    for (const auto& cam : render::make_view_set(frame, cfg)) {
        const auto out = render::rasterize(arch.mesh, cam, {});
        const Vec3 fwd = cam.forward();
        for (int y = 0; y < cam.height; y += 3)
            for (int x = 0; x < cam.width; x += 3) {
                const int f = out.face_id[y * cam.width + x];
                if (f < 0) continue;
                const auto& t = arch.mesh.faces[f];
                const Vec3 n = face_normal(arch.mesh, f);
                const Vec3 o = pixel_center(cam, x, y);
                const Vec3& a = arch.mesh.vertices[t[0]];
                // ray o + s * fwd meets the face plane at s; depth is measured from the eye
                const double s = (a - o).dot(n) / fwd.dot(n);
                const double depth = (o + s * fwd - cam.eye).dot(fwd);
                EXPECT_NEAR(depth, out.depth[y * cam.width + x], 1e-3) << cam.view_tag;
            }
    }
}

TEST(Overlay, OneInstanceOneGlyphAtItsCentroid)
{
    const auto grid = transformed(grid_mesh(10, 0.16), Eigen::Matrix3d::Identity(), Vec3(-0.8, -0.8, 0));
    const auto out = render::rasterize(grid, looking_down(1.0, 200), plain());
    FaceLabeling labels{std::vector<int>(grid.face_count(), 7)};
    const auto res = render::overlay_instance_ids(out, labels);
    ASSERT_EQ(res.drawn.size(), 1u);
    EXPECT_TRUE(res.skipped.empty());
    const auto& box = res.drawn[0];
    EXPECT_EQ(box.instance, 7);
    EXPECT_NEAR((box.x0 + box.x1) / 2.0, 100.0, 2.0);
    EXPECT_NEAR((box.y0 + box.y1) / 2.0, 100.0, 2.0);
}

TEST(Overlay, InvisibleInstanceIsSkippedAndUntouched)
{
    const auto grid = grid_mesh(2);
    TriMesh m = grid;
    m.vertices.emplace_back(50, 50, -5);
    m.vertices.emplace_back(51, 50, -5);
    m.vertices.emplace_back(50, 51, -5);
    const auto n = static_cast<std::int32_t>(grid.vertex_count());
    m.faces.push_back({n, n + 1, n + 2});
    const auto out = render::rasterize(m, looking_down(3.0, 100), plain());
    FaceLabeling labels{std::vector<int>(m.face_count(), 0)};
    labels.labels.back() = 3;
    const auto res = render::overlay_instance_ids(out, labels);
    EXPECT_TRUE(res.drawn.empty());
    EXPECT_EQ(res.skipped, std::vector<int>{3});
    EXPECT_EQ(res.image, out.rgb);
}

TEST(Overlay, ChangesOnlyGlyphBoxes)
{
    const auto arch = default_arch(5);
    const auto frame = render::estimate_occlusal_frame(arch.mesh);
    const auto cams = render::make_view_set(frame, {});
    for (std::size_t v : {0u, 3u, 12u}) {
        const auto out = render::rasterize(arch.mesh, cams[v], {});
        const auto res = render::overlay_instance_ids(out, arch.instances);
        EXPECT_FALSE(res.drawn.empty());
        for (int y = 0; y < out.height(); ++y)
            for (int x = 0; x < out.width(); ++x) {
                if (std::equal(out.rgb.at(x, y), out.rgb.at(x, y) + 3, res.image.at(x, y))) continue;
                bool inside = false;
                for (const auto& b : res.drawn) inside |= x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1;
                ASSERT_TRUE(inside) << x << "," << y;
            }
    }
}

TEST(Overlay, DigitGlyphsAreDistinct)
{
    std::set<std::vector<std::uint8_t>> seen;
    for (int d = 0; d < 10; ++d) {
        const auto g = render::digit_glyph(d);
        seen.emplace(g.begin(), g.end());
    }
    EXPECT_EQ(seen.size(), 10u);
}

TEST(ImageIo, PngAndFaceIdRoundTrip)
{
    const auto arch = default_arch(6);
    const auto frame = render::estimate_occlusal_frame(arch.mesh);
    const auto out = render::rasterize(arch.mesh, render::make_view_set(frame, {})[0], {});
    EXPECT_EQ(decode_png(encode_png(out.rgb)), out.rgb);
    const auto fid = decode_face_ids(encode_face_ids(out.width(), out.height(), out.face_id));
    EXPECT_EQ(fid.width, out.width());
    EXPECT_EQ(fid.ids, out.face_id);
    const auto bytes = encode_face_ids(2, 1, std::vector<std::int32_t>{-1, 258});
    ASSERT_EQ(bytes.size(), 16u + 8u);
    EXPECT_EQ(bytes.substr(0, 4), "TSFI");
    EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 2u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[21]), 1u);
    EXPECT_THROW(decode_face_ids(bytes.substr(0, 20)), ParseError);
}

TEST(ImageIo, Base64KnownVectors)
{
    EXPECT_EQ(base64_encode(""), "");
    EXPECT_EQ(base64_encode("f"), "Zg==");
    EXPECT_EQ(base64_encode("fo"), "Zm8=");
    EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
    EXPECT_EQ(base64_decode("Zm9vYg=="), "foob");
}
