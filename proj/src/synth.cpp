#include "tseg/synth.hpp"

#include "tseg/random.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tseg::synth {

std::array<ToothSize, 8> default_sizes(Jaw jaw)
{
    std::array<ToothSize, 8> s{{
        {{5.0, 5.6}, {5.5, 6.2}, {8.0, 9.0}},
        {{5.6, 6.2}, {6.0, 6.5}, {8.0, 9.0}},
        {{6.6, 7.2}, {7.0, 7.6}, {9.5, 10.5}},
        {{6.8, 7.3}, {7.4, 8.0}, {7.5, 8.5}},
        {{7.0, 7.5}, {8.0, 8.6}, {7.0, 8.0}},
        {{10.5, 11.3}, {10.0, 10.8}, {6.5, 7.5}},
        {{10.0, 10.8}, {9.5, 10.3}, {6.0, 7.0}},
        {{9.5, 10.5}, {9.0, 10.0}, {5.5, 6.5}},
    }};
    if (jaw == Jaw::upper) {
        s[0] = {{8.3, 8.9}, {6.8, 7.4}, {9.5, 10.5}};
        s[1] = {{6.4, 7.0}, {6.0, 6.6}, {8.5, 9.5}};
        s[2] = {{7.4, 8.0}, {7.8, 8.4}, {9.5, 10.5}};
    }
    return s;
}

namespace {

struct Shape {
    double vertical;   // exponent over latitude: small = flat top, large = pointed
    double horizontal; // exponent over longitude: small = boxy outline
};

Shape shape_of(int position)
{
    switch (position) {
    case 1:
    case 2: return {1.0, 0.9};
    case 3: return {1.6, 1.0};
    case 4:
    case 5: return {0.9, 0.9};
    default: return {0.7, 0.8};
    }
}

double signed_pow(double v, double e) { return std::copysign(std::pow(std::abs(v), e), v); }

// Arc length of y = a x^2 from the apex to x (x >= 0).
double arc_length(double a, double x)
{
    const double k = 2.0 * std::abs(a);
    if (k == 0.0) return x;
    const double u = k * x;
    return (u * std::sqrt(1.0 + u * u) + std::asinh(u)) / (2.0 * k);
}

double x_at_arc_length(double a, double s)
{
    double lo = 0.0, hi = s + 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (arc_length(a, mid) < s ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

constexpr double kBaseSink = 0.3;
constexpr double kToothGap = 0.5;
constexpr double kFlatHalfWidth = 6.0;

// Latitude where the crown meets the gingiva; starting above the equator keeps the walls sloped.
constexpr double kBaseLatitude = 0.45;

void add_crown(TriMesh& mesh, const Vec3& base, const Vec3& tangent, const Vec3& across, double w, double d,
               double h, Shape shape, int rings, int segments)
{
    const auto first = static_cast<std::int32_t>(mesh.vertices.size());
    const double r0 = signed_pow(std::cos(kBaseLatitude), shape.vertical);
    const double z0 = signed_pow(std::sin(kBaseLatitude), shape.vertical);
    for (int i = 0; i < rings; ++i) {
        const double theta = kBaseLatitude + (0.5 * std::numbers::pi - kBaseLatitude) * i / rings;
        const double r = signed_pow(std::cos(theta), shape.vertical) / r0;
        const double z = h * (signed_pow(std::sin(theta), shape.vertical) - z0) / (1.0 - z0) - kBaseSink;
        for (int j = 0; j < segments; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / segments;
            const double lx = 0.5 * w * r * signed_pow(std::cos(phi), shape.horizontal);
            const double ly = 0.5 * d * r * signed_pow(std::sin(phi), shape.horizontal);
            mesh.vertices.push_back(base + lx * tangent + ly * across + z * Vec3::UnitZ());
        }
    }
    const auto pole = static_cast<std::int32_t>(mesh.vertices.size());
    mesh.vertices.push_back(base + (h - kBaseSink) * Vec3::UnitZ());

    auto at = [&](int i, int j) { return first + i * segments + (j % segments); };
    for (int i = 0; i + 1 < rings; ++i)
        for (int j = 0; j < segments; ++j) {
            mesh.faces.push_back({at(i, j), at(i, j + 1), at(i + 1, j + 1)});
            mesh.faces.push_back({at(i, j), at(i + 1, j + 1), at(i + 1, j)});
        }
    for (int j = 0; j < segments; ++j) mesh.faces.push_back({at(rings - 1, j), at(rings - 1, j + 1), pole});
}

} // namespace

SynthArchSpec::SynthArchSpec() : sizes(default_sizes(Jaw::lower)) {}

void validate(const SynthArchSpec& spec)
{
    if (spec.teeth_per_side < 1 || spec.teeth_per_side > 8) throw PreconditionError("teeth_per_side must be in 1..8");
    if (!(spec.arch_coefficient < 0.0)) throw PreconditionError("arch_coefficient must be negative");
    for (const auto& s : spec.sizes)
        for (const auto& r : {s.width, s.depth, s.height})
            if (!(r.lo > 0.0 && r.hi >= r.lo)) throw PreconditionError("tooth size ranges must be positive");
    if (!(spec.gingiva_height > 0.0)) throw PreconditionError("gingiva_height must be positive");
    if (!(spec.gingiva_half_width > kFlatHalfWidth)) throw PreconditionError("gingiva_half_width must exceed 6 mm");
    if (spec.rings < 2 || spec.segments < 8) throw PreconditionError("mesh resolution too coarse");
    for (int code : spec.missing)
        if (!is_valid_fdi(code)) throw PreconditionError("invalid missing FDI code " + std::to_string(code));
}

SynthArchSpec spec_from_json(std::string_view text)
{
    using nlohmann::json;
    SynthArchSpec spec;
    try {
        const auto j = json::parse(text);
        if (!j.is_object()) throw ParseError("synthetic arch spec must be a JSON object");
        if (j.contains("jaw")) spec.jaw = jaw_from_string(j["jaw"].get<std::string>());
        spec.sizes = default_sizes(spec.jaw);
        spec.teeth_per_side = j.value("teeth_per_side", spec.teeth_per_side);
        spec.arch_coefficient = j.value("arch_coefficient", spec.arch_coefficient);
        spec.missing = j.value("missing", spec.missing);
        spec.gingiva_height = j.value("gingiva_height", spec.gingiva_height);
        spec.gingiva_half_width = j.value("gingiva_half_width", spec.gingiva_half_width);
        spec.rings = j.value("rings", spec.rings);
        spec.segments = j.value("segments", spec.segments);
        spec.seed = j.value("seed", spec.seed);
        if (j.contains("sizes")) {
            const auto& arr = j["sizes"];
            if (!arr.is_array() || arr.size() != 8) throw ParseError("sizes must list 8 tooth positions");
            for (std::size_t i = 0; i < 8; ++i) {
                auto range = [&](const char* key) {
                    const auto v = arr[i].at(key).get<std::array<double, 2>>();
                    return Range{v[0], v[1]};
                };
                spec.sizes[i] = {range("width"), range("depth"), range("height")};
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("synthetic arch spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

std::string spec_to_json(const SynthArchSpec& spec)
{
    using nlohmann::json;
    json sizes = json::array();
    for (const auto& s : spec.sizes)
        sizes.push_back({{"width", {s.width.lo, s.width.hi}},
                         {"depth", {s.depth.lo, s.depth.hi}},
                         {"height", {s.height.lo, s.height.hi}}});
    json j{{"jaw", to_string(spec.jaw)},
           {"teeth_per_side", spec.teeth_per_side},
           {"arch_coefficient", spec.arch_coefficient},
           {"missing", spec.missing},
           {"gingiva_height", spec.gingiva_height},
           {"gingiva_half_width", spec.gingiva_half_width},
           {"rings", spec.rings},
           {"segments", spec.segments},
           {"seed", spec.seed},
           {"sizes", sizes}};
    return j.dump(2);
}

Vec3 generator_up(Jaw jaw) { return jaw == Jaw::lower ? Vec3::UnitZ() : Vec3(-Vec3::UnitZ()); }
Vec3 generator_anterior() { return Vec3::UnitY(); }

SynthArch generate_synthetic_arch(const SynthArchSpec& spec)
{
    validate(spec);
    Rng rng(derive_seed(spec.seed, "synth"));
    const double a = spec.arch_coefficient;

    struct Slot {
        int side; // -1: x < 0, +1: x > 0
        int position;
        double w, d, h;
        double x;
    };
    std::vector<Slot> slots;
    for (int side : {-1, 1}) {
        double s = 0.5 * kToothGap;
        for (int p = 1; p <= 8; ++p) {
            const auto& r = spec.sizes[p - 1];
            Slot slot{side, p, rng.uniform(r.width.lo, r.width.hi), rng.uniform(r.depth.lo, r.depth.hi),
                      rng.uniform(r.height.lo, r.height.hi), 0.0};
            slot.x = side * x_at_arc_length(a, s + 0.5 * slot.w);
            s += slot.w + kToothGap;
            if (p <= spec.teeth_per_side) slots.push_back(slot);
        }
    }

    auto quadrant = [&](int side) {
        if (spec.jaw == Jaw::lower) return side < 0 ? 3 : 4;
        return side > 0 ? 1 : 2;
    };
    // frame right is +x for the lower jaw and -x for the mirrored upper jaw
    auto frame_x = [&](double x) { return spec.jaw == Jaw::lower ? x : -x; };

    std::vector<Slot> present;
    for (const auto& s : slots) {
        const int code = make_fdi(quadrant(s.side), s.position);
        if (std::find(spec.missing.begin(), spec.missing.end(), code) == spec.missing.end()) present.push_back(s);
    }
    std::sort(present.begin(), present.end(), [&](const Slot& p, const Slot& q) { return frame_x(p.x) < frame_x(q.x); });

    SynthArch out;
    auto& mesh = out.mesh;
    for (std::size_t k = 0; k < present.size(); ++k) {
        const auto& s = present[k];
        const Vec3 base(s.x, a * s.x * s.x, 0.0);
        const Vec3 tangent = Vec3(1.0, 2.0 * a * s.x, 0.0).normalized();
        const Vec3 across = Vec3::UnitZ().cross(tangent);
        const auto f0 = mesh.faces.size();
        const auto v0 = mesh.vertices.size();
        add_crown(mesh, base, tangent, across, s.w, s.d, s.h, shape_of(s.position), spec.rings, spec.segments);
        SynthTooth tooth;
        tooth.fdi = make_fdi(quadrant(s.side), s.position);
        tooth.instance = static_cast<int>(k) + 1;
        tooth.width = s.w;
        tooth.depth = s.d;
        tooth.height = s.h;
        tooth.base_center = base;
        out.teeth.push_back(tooth);
        out.instances.labels.resize(mesh.faces.size(), tooth.instance);
        std::fill(out.instances.labels.begin() + static_cast<std::ptrdiff_t>(f0), out.instances.labels.end(),
                  tooth.instance);
        out.fdi.labels.resize(mesh.vertices.size(), tooth.fdi);
        std::fill(out.fdi.labels.begin() + static_cast<std::ptrdiff_t>(v0), out.fdi.labels.end(), tooth.fdi);
    }

    // gingiva strip along the full slot range, 3 mm past the outermost slots
    double x_max = 0.0;
    for (const auto& s : slots) x_max = std::max(x_max, std::abs(s.x) + 0.5 * s.w);
    const double s_max = arc_length(a, x_max) + 3.0;
    const int n_along = std::max(8, static_cast<int>(std::ceil(2.0 * s_max / 0.6)));
    std::vector<double> us;
    const double hw = spec.gingiva_half_width;
    for (int i = 0; i <= 3; ++i) us.push_back(-hw + (hw - kFlatHalfWidth) * i / 3.0);
    for (int i = 1; i < 16; ++i) us.push_back(-kFlatHalfWidth + 2.0 * kFlatHalfWidth * i / 16.0);
    for (int i = 0; i <= 3; ++i) us.push_back(kFlatHalfWidth + (hw - kFlatHalfWidth) * i / 3.0);
    auto profile = [&](double u) {
        const double t = std::max(0.0, (std::abs(u) - kFlatHalfWidth) / (hw - kFlatHalfWidth));
        return -spec.gingiva_height * t * t;
    };
    const auto g0 = static_cast<std::int32_t>(mesh.vertices.size());
    const auto nu = static_cast<std::int32_t>(us.size());
    for (int i = 0; i <= n_along; ++i) {
        const double s = -s_max + 2.0 * s_max * i / n_along;
        const double x = std::copysign(x_at_arc_length(a, std::abs(s)), s);
        const Vec3 c(x, a * x * x, 0.0);
        const Vec3 tangent = Vec3(1.0, 2.0 * a * x, 0.0).normalized();
        const Vec3 across = Vec3::UnitZ().cross(tangent);
        for (double u : us) mesh.vertices.push_back(c + u * across + profile(u) * Vec3::UnitZ());
    }
    for (int i = 0; i < n_along; ++i)
        for (std::int32_t j = 0; j + 1 < nu; ++j) {
            const std::int32_t v00 = g0 + i * nu + j, v10 = v00 + nu, v01 = v00 + 1, v11 = v10 + 1;
            mesh.faces.push_back({v00, v10, v11});
            mesh.faces.push_back({v00, v11, v01});
        }
    out.instances.labels.resize(mesh.faces.size(), 0);
    out.fdi.labels.resize(mesh.vertices.size(), 0);

    if (spec.jaw == Jaw::upper) {
        for (auto& v : mesh.vertices) v.z() = -v.z();
        for (auto& f : mesh.faces) std::swap(f[1], f[2]);
        for (auto& t : out.teeth) t.base_center.z() = -t.base_center.z();
    }
    return out;
}

} // namespace tseg::synth
