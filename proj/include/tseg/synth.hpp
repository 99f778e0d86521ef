#pragma once

#include "tseg/mesh.hpp"
#include "tseg/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tseg::synth {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Crown size ranges in mm: width along the arch, depth across it, height along the crown axis.
struct ToothSize {
    Range width;
    Range depth;
    Range height;
};

/// Stylized arch fixture. World frame: +x patient right, +y anterior, +z toward the lower
/// jaw's occlusal side; upper arches are mirrored so their crowns point to -z.
struct SynthArchSpec {
    Jaw jaw = Jaw::lower;
    int teeth_per_side = 7;
    double arch_coefficient = -0.045; ///< y = a x^2, apex at the origin
    std::array<ToothSize, 8> sizes;   ///< indexed by FDI position - 1
    std::vector<int> missing;         ///< FDI codes left out (their slot stays empty)
    double gingiva_height = 4.0;
    double gingiva_half_width = 7.5;
    int rings = 10;    ///< latitude rings per crown
    int segments = 32; ///< longitude segments per crown
    std::uint64_t seed = 1;

    SynthArchSpec();
};

/// Size ranges per FDI position; upper incisors and canines are larger.
std::array<ToothSize, 8> default_sizes(Jaw jaw);

void validate(const SynthArchSpec& spec);
SynthArchSpec spec_from_json(std::string_view text);
std::string spec_to_json(const SynthArchSpec& spec);

struct SynthTooth {
    int fdi = 0;
    int instance = 0; ///< 1..K in ascending occlusal-frame right coordinate
    double width = 0.0, depth = 0.0, height = 0.0;
    Vec3 base_center = Vec3::Zero();
};

struct SynthArch {
    TriMesh mesh;
    FaceLabeling instances; ///< 0 = gingiva
    VertexLabeling fdi;
    std::vector<SynthTooth> teeth; ///< ordered by instance id
};

SynthArch generate_synthetic_arch(const SynthArchSpec& spec);

/// Occlusal-frame axes the generator builds against.
Vec3 generator_up(Jaw jaw);
Vec3 generator_anterior();

} // namespace tseg::synth
