#include "tseg/arch.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tseg::arch {

std::vector<Vec2> project_centroids(const render::OcclusalFrame& frame, std::span<const Vec3> centroids)
{
    std::vector<Vec2> out;
    out.reserve(centroids.size());
    for (const auto& p : centroids) {
        const Vec3 d = p - frame.origin;
        out.emplace_back(d.dot(frame.right), d.dot(frame.anterior));
    }
    return out;
}

namespace {

int distinct_x(std::span<const Vec2> pts)
{
    std::vector<double> xs;
    for (const auto& p : pts) xs.push_back(p.x());
    std::sort(xs.begin(), xs.end());
    return static_cast<int>(std::unique(xs.begin(), xs.end()) - xs.begin());
}

// Scaled normal equations plus one refinement step.
Eigen::VectorXd solve_ls(const Eigen::MatrixXd& A, const Eigen::VectorXd& y)
{
    Eigen::VectorXd scale(A.cols());
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        const double m = A.col(j).cwiseAbs().maxCoeff();
        scale(j) = m > 0.0 ? 1.0 / m : 1.0;
    }
    const Eigen::MatrixXd As = A * scale.asDiagonal();
    const Eigen::MatrixXd N = As.transpose() * As;
    const auto ldlt = N.ldlt();
    Eigen::VectorXd z = ldlt.solve(As.transpose() * y);
    const Eigen::VectorXd r = y - As * z;
    z += ldlt.solve(As.transpose() * r);
    return scale.asDiagonal() * z;
}

void finish(ArchCurve& c, std::span<const Vec2> pts)
{
    double ss = 0.0;
    c.x_min = pts.empty() ? 0.0 : pts.front().x();
    c.x_max = c.x_min;
    for (const auto& p : pts) {
        const double r = p.y() - c.eval(p.x());
        ss += r * r;
        c.x_min = std::min(c.x_min, p.x());
        c.x_max = std::max(c.x_max, p.x());
    }
    c.residual_rms = pts.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(pts.size()));
}

} // namespace

ArchCurve fit_arch(std::span<const Vec2> pts)
{
    ArchCurve curve;
    const int nx = distinct_x(pts);
    const auto n = static_cast<Eigen::Index>(pts.size());
    if (pts.size() >= 3 && nx >= 3) {
        Eigen::MatrixXd A(n, 3);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = pts[i].x();
            A(i, 0) = x * x;
            A(i, 1) = x;
            A(i, 2) = 1.0;
            y(i) = pts[i].y();
        }
        const auto s = solve_ls(A, y);
        curve.a = s(0);
        curve.b = s(1);
        curve.c = s(2);
    } else {
        curve.line_fallback = true;
        if (nx >= 2) {
            Eigen::MatrixXd A(n, 2);
            Eigen::VectorXd y(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                A(i, 0) = pts[i].x();
                A(i, 1) = 1.0;
                y(i) = pts[i].y();
            }
            const auto s = solve_ls(A, y);
            curve.b = s(0);
            curve.c = s(1);
        } else if (!pts.empty()) {
            double sy = 0.0;
            for (const auto& p : pts) sy += p.y();
            curve.c = sy / static_cast<double>(pts.size());
        }
    }
    finish(curve, pts);
    return curve;
}

ArchCurve fit_arch_robust(std::span<const Vec2> pts, double max_distance, std::vector<bool>* inliers)
{
    auto first = fit_arch(pts);
    std::vector<double> dist;
    for (const auto& p : pts) dist.push_back(curve_distance(first, p));
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted.empty() ? 0.0 : sorted[sorted.size() / 2];
    const double cut = std::max(max_distance, 2.5 * median);

    std::vector<Vec2> kept;
    std::vector<bool> flags(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        flags[i] = dist[i] <= cut;
        if (flags[i]) kept.push_back(pts[i]);
    }
    ArchCurve curve = kept.size() == pts.size() || kept.size() < 3 ? first : fit_arch(kept);
    if (kept.size() < 3) flags.assign(pts.size(), true);
    if (inliers) *inliers = std::move(flags);
    return curve;
}

namespace {

double sq_dist(const ArchCurve& c, const Vec2& p, double x)
{
    const double dx = x - p.x();
    const double dy = c.eval(x) - p.y();
    return dx * dx + dy * dy;
}

// Real roots of x^3 + B x^2 + C x + D.
std::vector<double> monic_cubic_roots(double B, double C, double D)
{
    const double shift = B / 3.0;
    const double p = C - B * B / 3.0;
    const double q = 2.0 * B * B * B / 27.0 - B * C / 3.0 + D;
    std::vector<double> t;
    if (p == 0.0) {
        t.push_back(std::cbrt(-q));
    } else {
        const double disc = q * q / 4.0 + p * p * p / 27.0;
        if (disc > 0.0) {
            const double s = std::sqrt(disc);
            t.push_back(std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s));
        } else {
            const double m = 2.0 * std::sqrt(-p / 3.0);
            const double arg = std::clamp(3.0 * q / (2.0 * p) * std::sqrt(-3.0 / p), -1.0, 1.0);
            const double theta = std::acos(arg) / 3.0;
            for (int k = 0; k < 3; ++k) t.push_back(m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0));
        }
    }
    for (auto& v : t) v -= shift;
    return t;
}

} // namespace

double curve_parameter(const ArchCurve& curve, const Vec2& point)
{
    const double a = curve.a, b = curve.b;
    const double q = curve.c - point.y();
    // derivative of the squared distance / 2
    const double k3 = 2.0 * a * a, k2 = 3.0 * a * b, k1 = b * b + 2.0 * a * q + 1.0, k0 = b * q - point.x();
    const double linear_root = k1 != 0.0 ? -k0 / k1 : point.x();

    std::vector<double> cand;
    if (a == 0.0) {
        cand.push_back(-k0 / k1);
    } else {
        cand = monic_cubic_roots(k2 / k3, k1 / k3, k0 / k3);
        cand.push_back(linear_root);
    }
    for (auto& x : cand) {
        for (int it = 0; it < 4; ++it) {
            const double f = ((k3 * x + k2) * x + k1) * x + k0;
            const double df = (3.0 * k3 * x + 2.0 * k2) * x + k1;
            if (df == 0.0 || !std::isfinite(f)) break;
            const double nx = x - f / df;
            if (!std::isfinite(nx)) break;
            x = nx;
        }
    }
    double best_x = cand.front();
    double best_d = sq_dist(curve, point, best_x);
    for (double x : cand) {
        if (!std::isfinite(x)) continue;
        const double d = sq_dist(curve, point, x);
        if (d < best_d || (d == best_d && x < best_x)) {
            best_d = d;
            best_x = x;
        }
    }
    return best_x;
}

double curve_distance(const ArchCurve& curve, const Vec2& point)
{
    return std::sqrt(sq_dist(curve, point, curve_parameter(curve, point)));
}

int ArchOrdering::new_id(int old_id) const
{
    for (const auto& e : entries)
        if (e.old_id == old_id) return e.new_id;
    throw PreconditionError("instance " + std::to_string(old_id) + " is not in the ordering");
}

std::pair<FaceLabeling, ArchOrdering> reorder_instances(const FaceLabeling& labeling,
                                                        const std::map<int, double>& parameters)
{
    const auto ids = instance_ids(labeling);
    ArchOrdering ord;
    for (int id : ids) {
        auto it = parameters.find(id);
        if (it == parameters.end()) throw PreconditionError("no arch parameter for instance " + std::to_string(id));
        ord.entries.push_back({id, 0, it->second});
    }
    std::sort(ord.entries.begin(), ord.entries.end(), [](const auto& p, const auto& q) {
        if (p.parameter != q.parameter) return p.parameter < q.parameter;
        return p.old_id < q.old_id;
    });
    std::map<int, int> remap;
    for (std::size_t i = 0; i < ord.entries.size(); ++i) {
        ord.entries[i].new_id = static_cast<int>(i) + 1;
        remap[ord.entries[i].old_id] = ord.entries[i].new_id;
    }
    FaceLabeling out = labeling;
    for (auto& l : out.labels)
        if (l != 0) l = remap.at(l);
    return {std::move(out), std::move(ord)};
}

} // namespace tseg::arch
