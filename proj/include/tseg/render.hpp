#pragma once

#include "tseg/image.hpp"
#include "tseg/mesh.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tseg::render {

/// Dental frame: `up` is the occlusal normal, `anterior` points toward the incisors,
/// right = anterior x up.
struct OcclusalFrame {
    Vec3 origin = Vec3::Zero();
    Vec3 right = Vec3::UnitX();
    Vec3 anterior = Vec3::UnitY();
    Vec3 up = Vec3::UnitZ();
    double bounding_radius = 1.0;
    bool planar = false; ///< vertices coplanar; up is the plane normal

    Vec3 to_local(const Vec3& p) const
    {
        const Vec3 d = p - origin;
        return {d.dot(right), d.dot(anterior), d.dot(up)};
    }
};

OcclusalFrame estimate_occlusal_frame(const TriMesh& mesh);

/// Orthographic camera.
struct Camera {
    Vec3 eye = Vec3::Zero();
    Vec3 look_at = -Vec3::UnitZ();
    Vec3 up_hint = Vec3::UnitY();
    double half_height = 1.0;
    int width = 800;
    int height = 800;
    std::string view_tag;

    Vec3 forward() const { return (look_at - eye).normalized(); }
    Vec3 right() const;
    Vec3 up() const;
    double pixel_size() const { return 2.0 * half_height / height; }
};

struct ViewConfig {
    int width = 800;
    int height = 800;
    int per_view_perturbations = 2;
    double distance_scale = 2.0;    ///< eye distance in bounding radii
    double half_height_scale = 1.1; ///< orthographic half-height in bounding radii
};

constexpr int kMaxPerturbations = 12;

/// Five base cameras (occlusal, anterior, posterior, left, right) followed by their
/// perturbations. Perturbation k of a base view tilts its direction toward one of the two
/// orthogonal axes (a, b) in the order
///   (a,+30) (b,+30) (a,-30) (b,-30) (a,+20) (b,+20) (a,-20) (b,-20) (a,+10) (b,+10) (a,-10) (b,-10)
/// where a = anterior, b = right for the occlusal view and a = up, b = up x direction for the
/// four horizontal views. Cameras are grouped per base view in that order.
std::vector<Camera> make_view_set(const OcclusalFrame& frame, const ViewConfig& cfg);

struct RenderStyle {
    bool flat_shaded = true;
    double curvature_overlay_weight = 0.35;
};

struct RenderOutput {
    ImageRGB rgb;
    std::vector<std::int32_t> face_id; ///< -1 = background
    std::vector<float> depth;          ///< distance along the view direction; +inf on background
    Camera camera;

    int width() const noexcept { return rgb.width; }
    int height() const noexcept { return rgb.height; }
};

/// Z-buffered orthographic rasterization with the top-left fill rule. `curvature` is the
/// per-vertex [0,1] field used by the overlay; computed on demand when empty.
RenderOutput rasterize(const TriMesh& mesh, const Camera& camera, const RenderStyle& style,
                       std::span<const double> curvature = {});

struct GlyphBox {
    int instance = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; ///< inclusive pixel bounds, outline included
};

struct OverlayResult {
    ImageRGB image;
    std::vector<GlyphBox> drawn;
    std::vector<int> skipped; ///< instances with fewer than min_pixels visible pixels
};

struct OverlayConfig {
    int min_pixels = 50;
    int scale = 0; ///< glyph scale; 0 picks max(1, height / 200)
};

/// Draws each visible instance id at the centroid of its visible pixels (5x7 font, white with
/// a 1-px black outline).
OverlayResult overlay_instance_ids(const RenderOutput& out, const FaceLabeling& labeling,
                                   const OverlayConfig& cfg = {});

/// 5x7 bitmap rows for a digit, top row first, bit 4 = leftmost column.
std::span<const std::uint8_t, 7> digit_glyph(int digit);

} // namespace tseg::render
