#pragma once

#include "tseg/mesh.hpp"
#include "tseg/render.hpp"
#include "tseg/seg.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tseg::fusion {

/// A 2D mask lifted onto mesh faces. `faces` is sorted and unique.
struct FaceMask {
    std::string view_tag;
    std::vector<std::int32_t> faces;
    double area = 0.0; ///< mm^2

    bool empty() const noexcept { return faces.empty(); }
};

struct FusionConfig {
    double tau_merge = 0.5;
    double tau_contain = 0.8;
    double min_pixel_fraction = 0.5;
    double min_instance_area_mm2 = 5.0;
    int smoothing_iters = 3; ///< 0 disables smoothing; otherwise sweeps continue until the labeling is stable
};

void validate(const FusionConfig& cfg);

/// Visible pixel count per face of one render.
class ViewIndex {
public:
    explicit ViewIndex(const render::RenderOutput& out);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::int64_t visible_pixels(std::int32_t face) const;
    const std::vector<std::int32_t>& face_ids() const noexcept { return *face_id_; }

private:
    int width_;
    int height_;
    const std::vector<std::int32_t>* face_id_;
    std::unordered_map<std::int32_t, std::int64_t> counts_;
};

/// Face f is kept when more than min_pixel_fraction of its visible pixels lie inside the mask.
/// An empty result is legal and shows up as FaceMask::empty().
FaceMask backproject(const seg::MaskProposal& mask, const ViewIndex& view, std::span<const double> face_areas,
                     const FusionConfig& cfg);
FaceMask backproject(const seg::MaskProposal& mask, const render::RenderOutput& out,
                     std::span<const double> face_areas, const FusionConfig& cfg);

struct MaskOverlap {
    double iou = 0.0;
    double contain_a = 0.0; ///< |A n B| / |A|
    double contain_b = 0.0; ///< |A n B| / |B|
};

/// Area-weighted overlap.
MaskOverlap mask_iou(const FaceMask& a, const FaceMask& b, std::span<const double> face_areas);

/// Cross-view fusion into one instance labeling over `face_count` faces.
///
/// Masks from different views merge when their IoU exceeds tau_merge. Clusters linked by a
/// containment ratio above tau_contain are then judged view by view: a view holding masks of
/// both clusters votes that they are distinct (container and contained), a view whose single
/// mask took part in the link votes that they are one object. One-object majorities are merged
/// and the vote is repeated; ties keep the clusters apart. Each face goes to the cluster with
/// the most masks on it, except that a contained cluster wins over its container.
/// Output ids are dense and ordered by descending area.
FaceLabeling merge_masks(std::span<const FaceMask> masks, std::span<const double> face_areas,
                         std::size_t face_count, const FusionConfig& cfg);

/// Removes instances below min_instance_area_mm2, smooths stragglers along edge neighbors and
/// re-densifies ids (ascending old id).
FaceLabeling cleanup(const FaceLabeling& labeling, const TriMesh& mesh, const FusionConfig& cfg);

/// Relabels to 1..K preserving the relative order of the existing ids.
FaceLabeling densify(const FaceLabeling& labeling);

std::string labeling_to_json(const FaceLabeling& labeling);
FaceLabeling labeling_from_json(std::string_view text);

} // namespace tseg::fusion
