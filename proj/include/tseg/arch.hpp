#pragma once

#include "tseg/mesh.hpp"
#include "tseg/render.hpp"

#include <map>
#include <span>
#include <utility>
#include <vector>

namespace tseg::arch {

/// y = a x^2 + b x + c in the occlusal plane (x = right, y = anterior).
struct ArchCurve {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double residual_rms = 0.0; ///< vertical residual, mm
    double x_min = 0.0;
    double x_max = 0.0;
    bool line_fallback = false;

    double eval(double x) const noexcept { return (a * x + b) * x + c; }
    /// x of the apex; the curve midpoint when it is a line.
    double apex_x() const noexcept { return a != 0.0 ? -b / (2.0 * a) : 0.5 * (x_min + x_max); }
};

std::vector<Vec2> project_centroids(const render::OcclusalFrame& frame, std::span<const Vec3> centroids);

/// Least-squares quadratic through the points. Fewer than 3 points or fewer than 3 distinct
/// x values fall back to a line (a = 0) with line_fallback set.
ArchCurve fit_arch(std::span<const Vec2> points);

/// Refits after dropping points farther than max(max_distance, 2.5 x median distance) from
/// the first fit. `inliers` receives one flag per point.
ArchCurve fit_arch_robust(std::span<const Vec2> points, double max_distance, std::vector<bool>* inliers = nullptr);

/// x of the closest curve point. Not an arc length.
double curve_parameter(const ArchCurve& curve, const Vec2& point);
double curve_distance(const ArchCurve& curve, const Vec2& point);

struct ArchOrdering {
    struct Entry {
        int old_id = 0;
        int new_id = 0;
        double parameter = 0.0;
    };
    std::vector<Entry> entries; ///< sorted by new_id

    int new_id(int old_id) const;
};

/// Relabels instances 1..K by ascending parameter (ties by old id).
std::pair<FaceLabeling, ArchOrdering> reorder_instances(const FaceLabeling& labeling,
                                                        const std::map<int, double>& parameters);

} // namespace tseg::arch
