#pragma once

#include "tseg/mesh.hpp"
#include "tseg/random.hpp"
#include "tseg/synth.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace tseg::testing {

/// Closed axis-aligned box centred at `center`; each side is a fan of 4 triangles around its
/// midpoint, so the tessellation has the box's reflection symmetry. Outward winding.
inline TriMesh box_mesh(const Vec3& size, const Vec3& center = Vec3::Zero())
{
    TriMesh m;
    for (int axis = 0; axis < 3; ++axis) {
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        for (double sign : {-1.0, 1.0}) {
            auto corner = [&](double a, double b) -> Vec3 {
                Vec3 p = Vec3::Zero();
                p[axis] = sign * 0.5;
                p[u] = a * 0.5;
                p[v] = b * 0.5;
                return center + p.cwiseProduct(size);
            };
            const auto base = static_cast<std::int32_t>(m.vertices.size());
            m.vertices.push_back(corner(0, 0));
            m.vertices.push_back(corner(-1, -1));
            m.vertices.push_back(corner(1, -1));
            m.vertices.push_back(corner(1, 1));
            m.vertices.push_back(corner(-1, 1));
            for (int k = 0; k < 4; ++k) {
                const std::int32_t a = base + 1 + k, b = base + 1 + (k + 1) % 4;
                if (sign > 0)
                    m.faces.push_back({base, a, b});
                else
                    m.faces.push_back({base, b, a});
            }
        }
    }
    return m;
}

/// n x n quads split into triangles on z = 0, spacing h, normals +z.
inline TriMesh grid_mesh(int n, double h = 1.0)
{
    TriMesh m;
    for (int y = 0; y <= n; ++y)
        for (int x = 0; x <= n; ++x) m.vertices.emplace_back(x * h, y * h, 0.0);
    auto v = [n](int x, int y) { return static_cast<std::int32_t>(y * (n + 1) + x); };
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            m.faces.push_back({v(x, y), v(x + 1, y), v(x + 1, y + 1)});
            m.faces.push_back({v(x, y), v(x + 1, y + 1), v(x, y + 1)});
        }
    return m;
}

/// Latitude-longitude sphere.
inline TriMesh sphere_mesh(double r, int rings = 40, int segments = 80)
{
    TriMesh m;
    m.vertices.emplace_back(0, 0, r);
    for (int i = 1; i < rings; ++i) {
        const double th = std::numbers::pi * i / rings;
        for (int j = 0; j < segments; ++j) {
            const double ph = 2 * std::numbers::pi * j / segments;
            m.vertices.emplace_back(r * std::sin(th) * std::cos(ph), r * std::sin(th) * std::sin(ph), r * std::cos(th));
        }
    }
    m.vertices.emplace_back(0, 0, -r);
    const auto south = static_cast<std::int32_t>(m.vertices.size() - 1);
    auto v = [segments](int ring, int j) { return static_cast<std::int32_t>(1 + (ring - 1) * segments + j % segments); };
    for (int j = 0; j < segments; ++j) m.faces.push_back({0, v(1, j), v(1, j + 1)});
    for (int i = 1; i < rings - 1; ++i)
        for (int j = 0; j < segments; ++j) {
            m.faces.push_back({v(i, j), v(i + 1, j), v(i + 1, j + 1)});
            m.faces.push_back({v(i, j), v(i + 1, j + 1), v(i, j + 1)});
        }
    for (int j = 0; j < segments; ++j) m.faces.push_back({v(rings - 1, j), south, v(rings - 1, j + 1)});
    return m;
}

inline Eigen::Matrix3d random_rotation(Rng& rng)
{
    Eigen::Quaterniond q(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    q.normalize();
    return q.toRotationMatrix();
}

inline TriMesh transformed(TriMesh m, const Eigen::Matrix3d& r, const Vec3& t = Vec3::Zero())
{
    for (auto& p : m.vertices) p = r * p + t;
    for (auto& n : m.normals) n = r * n;
    return m;
}

inline synth::SynthArch default_arch(std::uint64_t seed = 1, Jaw jaw = Jaw::lower)
{
    synth::SynthArchSpec spec;
    spec.seed = seed;
    spec.jaw = jaw;
    spec.sizes = synth::default_sizes(jaw);
    return synth::generate_synthetic_arch(spec);
}

} // namespace tseg::testing
