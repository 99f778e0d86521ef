#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace tseg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

/// Raised when a caller breaks a documented precondition before any work is done.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Failure talking to an external service (transport, HTTP status, payload).
class ServiceError : public Error {
public:
    using Error::Error;
};

// FDI two-digit tooth codes: quadrant 1..4, position 1..8.
constexpr bool is_valid_fdi(int code) noexcept
{
    const int q = code / 10;
    const int p = code % 10;
    return code >= 11 && code <= 48 && q >= 1 && q <= 4 && p >= 1 && p <= 8;
}

constexpr int fdi_quadrant(int code) noexcept { return code / 10; }
constexpr int fdi_position(int code) noexcept { return code % 10; }
constexpr int make_fdi(int quadrant, int position) noexcept { return quadrant * 10 + position; }

/// Mirror code across the midline of the same jaw (36 <-> 46, 11 <-> 21).
constexpr int fdi_mirror(int code) noexcept
{
    constexpr int mirror_q[5] = {0, 2, 1, 4, 3};
    return make_fdi(mirror_q[fdi_quadrant(code)], fdi_position(code));
}

enum class Jaw { upper, lower };

inline std::string to_string(Jaw jaw) { return jaw == Jaw::upper ? "upper" : "lower"; }

inline Jaw jaw_from_string(const std::string& s)
{
    if (s == "upper") return Jaw::upper;
    if (s == "lower") return Jaw::lower;
    throw ParseError("unknown jaw '" + s + "'");
}

} // namespace tseg
