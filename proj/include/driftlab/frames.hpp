#pragma once

// Planar angle conventions and the frame rotations used by the camera
// pipelines. Every angle leaving this header is wrapped to (-pi, pi].
//
// Rotations follow the row-vector convention p_ground = p_body * T(yaw) with
//
//     T(yaw) = [  cos(yaw)  sin(yaw) ]
//              [ -sin(yaw)  cos(yaw) ]
//
// T maps the body Y axis to the ground direction yaw + pi/2. Heading psi
// (forward direction measured from ground X, the angle that enters the
// sideslip beta = theta - psi) therefore corresponds to yaw = psi - pi/2; see
// frame_yaw_of_heading().

#include <driftlab/errors.hpp>

#include <Eigen/Core>

#include <cmath>
#include <concepts>
#include <numbers>

namespace driftlab::frames {

template <std::floating_point T>
using Vec2 = Eigen::Matrix<T, 1, 2>; // row vector, as in the rotation convention

template <std::floating_point T>
using Rot2 = Eigen::Matrix<T, 2, 2>;

template <std::floating_point T = double>
struct GroundPose {
    T x{};
    T y{};
    T psi{}; ///< heading, wrapped
};

template <std::floating_point T = double>
struct PlanarVelocity {
    T dx{};
    T dy{};

    T speed() const { return std::hypot(dx, dy); }
};

/// Sensor installation point relative to the vehicle center, in body axes
/// (px to the right, py forward).
template <std::floating_point T = double>
struct MountOffset {
    T px{};
    T py{};
};

template <std::floating_point T>
inline constexpr T two_pi = T(2) * std::numbers::pi_v<T>;

/// Wraps an angle to (-pi, pi]. -pi maps to +pi.
template <std::floating_point T>
T wrap_angle(T a)
{
    if (!std::isfinite(a)) {
        throw DomainError("wrap_angle: non-finite angle");
    }
    constexpr T pi = std::numbers::pi_v<T>;
    T r = std::remainder(a, two_pi<T>); // exact, lands in [-pi, pi]
    if (r <= -pi) {
        r += two_pi<T>;
    }
    return r;
}

template <std::floating_point T>
Rot2<T> rotation(T yaw)
{
    const T c = std::cos(yaw);
    const T s = std::sin(yaw);
    Rot2<T> m;
    m << c, s, -s, c;
    return m;
}

template <std::floating_point T>
T frame_yaw_of_heading(T psi)
{
    return wrap_angle(psi - std::numbers::pi_v<T> / T(2));
}

/// Car-center ground position from a ZED-frame position:
/// p_zed * T(psi0) + offset * T(psi).
template <std::floating_point T>
Vec2<T> zed_to_ground(const Vec2<T>& p_zed, T psi0, T psi, const MountOffset<T>& offset)
{
    if (!p_zed.allFinite() || !std::isfinite(psi0) || !std::isfinite(psi)) {
        throw DomainError("zed_to_ground: non-finite input");
    }
    const Vec2<T> off(offset.px, offset.py);
    return p_zed * rotation(psi0) + off * rotation(psi);
}

/// Inverse of zed_to_ground: what the ZED reports when the car center sits at
/// p_ground.
template <std::floating_point T>
Vec2<T> ground_to_zed(const Vec2<T>& p_ground, T psi0, T psi, const MountOffset<T>& offset)
{
    const Vec2<T> off(offset.px, offset.py);
    return (p_ground - off * rotation(psi)) * rotation(psi0).transpose();
}

template <std::floating_point T>
T sideslip_of(T theta, T psi)
{
    return wrap_angle(theta - psi);
}

/// Velocity attitude minus the bearing of the vehicle seen from the center.
/// Equals pi/2 on an anticlockwise circle about `center`.
template <std::floating_point T>
T phi_of(const Vec2<T>& pos, const PlanarVelocity<T>& vel, const Vec2<T>& center)
{
    const Vec2<T> rel = pos - center;
    if (vel.dx == T(0) && vel.dy == T(0)) {
        throw DomainError("phi_of: zero velocity has no attitude");
    }
    if (rel(0) == T(0) && rel(1) == T(0)) {
        throw DomainError("phi_of: position coincides with the center");
    }
    return wrap_angle(std::atan2(vel.dy, vel.dx) - std::atan2(rel(1), rel(0)));
}

} // namespace driftlab::frames
