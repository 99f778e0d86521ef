#pragma once

#include "tseg/mesh.hpp"

#include <span>
#include <string>
#include <vector>

namespace tseg::metrics {

struct GtTooth {
    int fdi = 0;
    std::vector<std::int32_t> faces;
    Vec3 centroid = Vec3::Zero();
    ObbExtents obb; ///< extents are the size vector, axes give their directions
};

struct PredTooth {
    int fdi = 0;
    std::vector<std::int32_t> faces;
    Vec3 centroid = Vec3::Zero();
};

/// Groups faces by FDI code (ascending). Centroids are area weighted.
std::vector<GtTooth> gt_teeth(const TriMesh& mesh, const FaceLabeling& fdi_faces);
std::vector<PredTooth> pred_teeth(const TriMesh& mesh, const FaceLabeling& fdi_faces);

struct MatchResult {
    std::vector<int> gt_to_pred; ///< -1 when unmatched
    std::vector<int> unmatched_gt;
    std::vector<int> unmatched_pred;
};

/// Greedy injective matching on centroid distance, ties by (gt index, pred index).
MatchResult match_teeth(std::span<const GtTooth> gt, std::span<const PredTooth> pred);

struct TlaOptions {
    bool penalize_unmatched = true; ///< sqrt(3) per unmatched GT tooth; otherwise they are skipped
};

/// exp(-mean |(c - c_hat) / s|) with the offset expressed along the GT box axes.
double tla(std::span<const GtTooth> gt, std::span<const PredTooth> pred, const MatchResult& match,
           const TlaOptions& opts = {});

/// F1 of (gt != 0) against (pred != 0); 1 when both are empty.
double tsa(std::span<const int> gt_labels, std::span<const int> pred_labels);

double tir(std::span<const GtTooth> gt, std::span<const PredTooth> pred, const MatchResult& match);
double tir_eq1(std::span<const double> case_tirs);

/// Mean over GT teeth of the area IoU against the predicted faces with the same code.
double miou(std::span<const GtTooth> gt, const FaceLabeling& pred_fdi_faces, std::span<const double> face_areas);

struct CaseMetrics {
    std::string id;
    double tla = 0.0;
    double tsa = 0.0;
    double tir = 0.0;
    double miou = 0.0;
};

/// Both labelings carry FDI codes per face (0 = background).
CaseMetrics evaluate_case(const std::string& id, const TriMesh& mesh, const FaceLabeling& gt_fdi,
                          const FaceLabeling& pred_fdi, const TlaOptions& opts = {});

struct Summary {
    double tla_mean = 0, tla_std = 0;
    double tsa_mean = 0, tsa_std = 0;
    double tir_mean = 0, tir_std = 0;
    double miou_mean = 0, miou_std = 0;
    double tir_eq1 = 0;
};

struct MetricsReport {
    std::vector<CaseMetrics> cases;
    Summary summary; ///< fractions; formatted as percentages on output
};

MetricsReport summarize(std::vector<CaseMetrics> cases);

/// {"cases": [...fractions...], "summary": {...percent, 2 decimals...}}
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(std::string_view text);
/// Aligned text table, percentages with 2 decimals.
std::string format_table(const MetricsReport& report);

} // namespace tseg::metrics
