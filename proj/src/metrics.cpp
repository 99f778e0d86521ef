#include "tseg/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <tuple>

namespace tseg::metrics {

namespace {

std::map<int, std::vector<std::int32_t>> faces_by_code(const FaceLabeling& fdi_faces)
{
    std::map<int, std::vector<std::int32_t>> groups;
    for (std::size_t f = 0; f < fdi_faces.size(); ++f)
        if (fdi_faces[f] != 0) groups[fdi_faces[f]].push_back(static_cast<std::int32_t>(f));
    return groups;
}

Vec3 area_centroid(const FaceGeometry& geom, const std::vector<std::int32_t>& faces)
{
    Vec3 s = Vec3::Zero();
    double a = 0.0;
    for (auto f : faces) {
        s += geom.areas[f] * geom.centroids[f];
        a += geom.areas[f];
    }
    return a > 0.0 ? Vec3(s / a) : Vec3::Zero();
}

void check_size(const TriMesh& mesh, const FaceLabeling& l)
{
    if (l.size() != mesh.face_count()) throw PreconditionError("labeling size differs from face count");
}

} // namespace

std::vector<GtTooth> gt_teeth(const TriMesh& mesh, const FaceLabeling& fdi_faces)
{
    check_size(mesh, fdi_faces);
    const auto geom = face_geometry(mesh);
    std::vector<GtTooth> out;
    for (auto& [code, faces] : faces_by_code(fdi_faces)) {
        GtTooth t;
        t.fdi = code;
        t.centroid = area_centroid(geom, faces);
        std::vector<std::size_t> idx(faces.begin(), faces.end());
        t.obb = obb_of_faces(mesh, idx);
        t.faces = std::move(faces);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<PredTooth> pred_teeth(const TriMesh& mesh, const FaceLabeling& fdi_faces)
{
    check_size(mesh, fdi_faces);
    const auto geom = face_geometry(mesh);
    std::vector<PredTooth> out;
    for (auto& [code, faces] : faces_by_code(fdi_faces)) {
        PredTooth t;
        t.fdi = code;
        t.centroid = area_centroid(geom, faces);
        t.faces = std::move(faces);
        out.push_back(std::move(t));
    }
    return out;
}

MatchResult match_teeth(std::span<const GtTooth> gt, std::span<const PredTooth> pred)
{
    std::vector<std::tuple<double, int, int>> pairs;
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t j = 0; j < pred.size(); ++j)
            pairs.emplace_back((gt[i].centroid - pred[j].centroid).norm(), static_cast<int>(i), static_cast<int>(j));
    std::sort(pairs.begin(), pairs.end());

    MatchResult m;
    m.gt_to_pred.assign(gt.size(), -1);
    std::vector<bool> taken(pred.size(), false);
    for (const auto& [d, i, j] : pairs) {
        if (m.gt_to_pred[i] >= 0 || taken[j]) continue;
        m.gt_to_pred[i] = j;
        taken[j] = true;
    }
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (m.gt_to_pred[i] < 0) m.unmatched_gt.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < pred.size(); ++j)
        if (!taken[j]) m.unmatched_pred.push_back(static_cast<int>(j));
    return m;
}

double tla(std::span<const GtTooth> gt, std::span<const PredTooth> pred, const MatchResult& match,
           const TlaOptions& opts)
{
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto& s = gt[i].obb.extents;
        if (!(s[0] > 0.0 && s[1] > 0.0 && s[2] > 0.0)) throw PreconditionError("GT tooth size must be positive");
        const int j = match.gt_to_pred[i];
        if (j < 0) {
            if (!opts.penalize_unmatched) continue;
            sum += std::sqrt(3.0);
            ++n;
            continue;
        }
        const Vec3 d = gt[i].centroid - pred[j].centroid;
        Vec3 scaled;
        for (int k = 0; k < 3; ++k) scaled[k] = d.dot(gt[i].obb.axes[k]) / s[k];
        sum += scaled.norm();
        ++n;
    }
    return n == 0 ? 1.0 : std::exp(-sum / n);
}

double tsa(std::span<const int> gt_labels, std::span<const int> pred_labels)
{
    if (gt_labels.size() != pred_labels.size()) throw PreconditionError("tsa: labelings differ in length");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gt_labels.size(); ++i) {
        const bool g = gt_labels[i] != 0;
        const bool p = pred_labels[i] != 0;
        tp += g && p;
        fp += !g && p;
        fn += g && !p;
    }
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double tir(std::span<const GtTooth> gt, std::span<const PredTooth> pred, const MatchResult& match)
{
    if (gt.empty()) return 1.0;
    int ok = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const int j = match.gt_to_pred[i];
        ok += j >= 0 && pred[j].fdi == gt[i].fdi;
    }
    return static_cast<double>(ok) / static_cast<double>(gt.size());
}

double tir_eq1(std::span<const double> case_tirs)
{
    if (case_tirs.empty()) return 0.0;
    const auto perfect = std::count(case_tirs.begin(), case_tirs.end(), 1.0);
    return static_cast<double>(perfect) / static_cast<double>(case_tirs.size());
}

double miou(std::span<const GtTooth> gt, const FaceLabeling& pred_fdi_faces, std::span<const double> face_areas)
{
    if (gt.empty()) return 1.0;
    double total = 0.0;
    for (const auto& t : gt) {
        double inter = 0.0, gt_area = 0.0;
        for (auto f : t.faces) {
            gt_area += face_areas[f];
            if (pred_fdi_faces[f] == t.fdi) inter += face_areas[f];
        }
        double pred_area = 0.0;
        for (std::size_t f = 0; f < pred_fdi_faces.size(); ++f)
            if (pred_fdi_faces[f] == t.fdi) pred_area += face_areas[f];
        const double uni = gt_area + pred_area - inter;
        total += uni > 0.0 ? inter / uni : 0.0;
    }
    return total / static_cast<double>(gt.size());
}

CaseMetrics evaluate_case(const std::string& id, const TriMesh& mesh, const FaceLabeling& gt_fdi,
                          const FaceLabeling& pred_fdi, const TlaOptions& opts)
{
    check_size(mesh, gt_fdi);
    check_size(mesh, pred_fdi);
    const auto gt = gt_teeth(mesh, gt_fdi);
    const auto pred = pred_teeth(mesh, pred_fdi);
    const auto match = match_teeth(gt, pred);
    const auto geom = face_geometry(mesh);
    CaseMetrics m;
    m.id = id;
    m.tla = tla(gt, pred, match, opts);
    m.tsa = tsa(gt_fdi.labels, pred_fdi.labels);
    m.tir = tir(gt, pred, match);
    m.miou = miou(gt, pred_fdi, geom.areas);
    return m;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v)
{
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

double percent2(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

} // namespace

MetricsReport summarize(std::vector<CaseMetrics> cases)
{
    MetricsReport r;
    r.cases = std::move(cases);
    std::vector<double> tla_v, tsa_v, tir_v, miou_v;
    for (const auto& c : r.cases) {
        tla_v.push_back(c.tla);
        tsa_v.push_back(c.tsa);
        tir_v.push_back(c.tir);
        miou_v.push_back(c.miou);
    }
    std::tie(r.summary.tla_mean, r.summary.tla_std) = mean_std(tla_v);
    std::tie(r.summary.tsa_mean, r.summary.tsa_std) = mean_std(tsa_v);
    std::tie(r.summary.tir_mean, r.summary.tir_std) = mean_std(tir_v);
    std::tie(r.summary.miou_mean, r.summary.miou_std) = mean_std(miou_v);
    r.summary.tir_eq1 = tir_eq1(tir_v);
    return r;
}

std::string report_to_json(const MetricsReport& report)
{
    using nlohmann::ordered_json;
    ordered_json cases = ordered_json::array();
    for (const auto& c : report.cases)
        cases.push_back({{"id", c.id}, {"TLA", c.tla}, {"TSA", c.tsa}, {"TIR", c.tir}, {"mIoU", c.miou}});
    const auto& s = report.summary;
    ordered_json summary{{"mIoU_mean", percent2(s.miou_mean)}, {"mIoU_std", percent2(s.miou_std)},
                         {"TLA_mean", percent2(s.tla_mean)},   {"TLA_std", percent2(s.tla_std)},
                         {"TSA_mean", percent2(s.tsa_mean)},   {"TSA_std", percent2(s.tsa_std)},
                         {"TIR_mean", percent2(s.tir_mean)},   {"TIR_std", percent2(s.tir_std)},
                         {"TIR_eq1", percent2(s.tir_eq1)},     {"units", "percent"}};
    return ordered_json{{"cases", cases}, {"summary", summary}}.dump(2) + "\n";
}

MetricsReport report_from_json(std::string_view text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        std::vector<CaseMetrics> cases;
        for (const auto& c : j.at("cases"))
            cases.push_back({c.at("id").get<std::string>(), c.at("TLA").get<double>(), c.at("TSA").get<double>(),
                             c.at("TIR").get<double>(), c.at("mIoU").get<double>()});
        return summarize(std::move(cases));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("metrics report: ") + e.what());
    }
}

std::string format_table(const MetricsReport& report)
{
    std::size_t w = 7;
    for (const auto& c : report.cases) w = std::max(w, c.id.size());
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %8s\n", static_cast<int>(w), "case", "mIoU", "TLA", "TSA", "TIR");
    out += buf;
    for (const auto& c : report.cases) {
        std::snprintf(buf, sizeof buf, "%-*s %8.2f %8.2f %8.2f %8.2f\n", static_cast<int>(w), c.id.c_str(),
                      100.0 * c.miou, 100.0 * c.tla, 100.0 * c.tsa, 100.0 * c.tir);
        out += buf;
    }
    const auto& s = report.summary;
    std::snprintf(buf, sizeof buf, "%-*s %8.2f %8.2f %8.2f %8.2f   TIR=1: %.2f\n", static_cast<int>(w), "mean",
                  100.0 * s.miou_mean, 100.0 * s.tla_mean, 100.0 * s.tsa_mean, 100.0 * s.tir_mean, 100.0 * s.tir_eq1);
    out += buf;
    std::snprintf(buf, sizeof buf, "%-*s %8.2f %8.2f %8.2f %8.2f\n", static_cast<int>(w), "std", 100.0 * s.miou_std,
                  100.0 * s.tla_std, 100.0 * s.tsa_std, 100.0 * s.tir_std);
    out += buf;
    return out;
}

} // namespace tseg::metrics
