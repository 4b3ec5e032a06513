#pragma once

// Two-loop drift controller. The sideslip loop steers (delta) to hold
// beta_ref; the circle loop sets wheel speed (omega) so the trajectory radius
// tracks a reference radius that bends the path toward the commanded center.

#include <driftlab/command.hpp>
#include <driftlab/errors.hpp>
#include <driftlab/estimator.hpp>
#include <driftlab/frames.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace driftlab::controller {

/// Commanded anticlockwise circle.
struct CircleTask {
    double x0 = 0.0;
    double y0 = 0.0;
    double r0 = 1.0;
    double beta_ref = -1.4;
    double gamma = 0.5;        ///< radius adjustment rate (m/rad)
    double tau_nominal = 4.2;  ///< lap period used to size the wheel-speed feedforward (s)

    void validate() const
    {
        if (!(r0 > 0.0)) throw ConfigError("task: r0 must be positive");
        if (!(gamma > 0.0)) throw ConfigError("task: gamma must be positive");
        if (!(beta_ref < 0.0 && beta_ref > -std::numbers::pi)) {
            throw ConfigError("task: beta_ref must lie in (-pi, 0) for an anticlockwise drift");
        }
        if (!(tau_nominal > 0.0)) throw ConfigError("task: tau_nominal must be positive");
    }
};

struct PidGains {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    double ff = 0.0;
    double i_limit = 0.0;  ///< |integral of e| is clamped to this
    double out_min = -1e9;
    double out_max = 1e9;

    void validate() const
    {
        if (!(out_min < out_max)) throw ConfigError("pid: out_min must be below out_max");
        if (!(i_limit >= 0.0)) throw ConfigError("pid: i_limit must be non-negative");
    }
};

struct PidState {
    double integral = 0.0;
    double prev_error = 0.0;
    bool has_prev = false;
};

struct PidOutput {
    double value = 0.0;
    PidState state;
};

/// ff + kp e + ki integral(e) + kd de/dt.
///
/// The integral uses the trapezoid rule with an empty history counting as a
/// previous error of zero, and is clamped to +-i_limit. The derivative is a
/// backward difference and is zero on the first call. Output is saturated.
inline PidOutput pid_step(const PidGains& g, double e, double dt, const PidState& state)
{
    if (!(dt > 0.0)) {
        throw DomainError("pid_step: dt must be positive");
    }
    PidState next = state;
    const double prev = state.has_prev ? state.prev_error : 0.0;
    next.integral = std::clamp(state.integral + 0.5 * (e + prev) * dt, -g.i_limit, g.i_limit);
    const double deriv = state.has_prev ? (e - state.prev_error) / dt : 0.0;
    next.prev_error = e;
    next.has_prev = true;
    const double u = g.ff + g.kp * e + g.ki * next.integral + g.kd * deriv;
    return {std::clamp(u, g.out_min, g.out_max), next};
}

/// Floor on r_ref relative to r0; keeps the circumnavigation denominator positive.
inline constexpr double min_radius_fraction = 0.2;

/// r_ref = r0 - gamma (pi/2 - phi), floored at min_radius_fraction * r0.
inline double reference_radius(double phi, const CircleTask& task)
{
    const double r = task.r0 - task.gamma * (std::numbers::pi / 2.0 - phi);
    return std::max(r, min_radius_fraction * task.r0);
}

/// Circumnavigation kinematics with perfect radius tracking:
/// d' = v cos(phi), phi' = v / r_ref(phi) - (v / d) sin(phi).
/// r_ref sees phi wrapped to (-pi, pi], so every phi = pi/2 + 2 k pi with
/// d = r0 is the same equilibrium, and the radius floor keeps phi' finite.
struct CircumnavRates {
    double ddot = 0.0;
    double phidot = 0.0;
};

inline CircumnavRates circumnav_derivatives(double d, double phi, double v, const CircleTask& task)
{
    if (!(d > 0.0)) {
        throw DomainError("circumnav_derivatives: distance must be positive");
    }
    const double r = reference_radius(frames::wrap_angle(phi), task);
    return {v * std::cos(phi), v / r - (v / d) * std::sin(phi)};
}

struct Gains {
    PidGains sideslip;
    PidGains circle;
};

/// Wheel speed whose contact-patch speed covers one nominal lap per tau.
inline double wheel_speed_feedforward(const CircleTask& task, double wheel_radius)
{
    return 2.0 * std::numbers::pi * task.r0 / (task.tau_nominal * wheel_radius);
}

struct ControllerState {
    PidState sideslip;
    PidState circle;
};

struct StepResult {
    ControlCommand cmd;
    ControllerState state;
    double phi = 0.0;
    double r_ref = 0.0;
};

/// One control tick: phi from the estimate, r_ref from phi, then both loops.
inline StepResult controller_step(const estimator::StateEstimate& est, double beta_hat, double r_fit,
                                  const CircleTask& task, const Gains& gains, double dt,
                                  const ControllerState& state)
{
    using V = frames::Vec2<double>;
    const frames::PlanarVelocity<double> vel{est.v() * std::cos(est.theta()),
                                             est.v() * std::sin(est.theta())};
    StepResult out;
    out.phi = frames::phi_of(V(est.x(), est.y()), vel, V(task.x0, task.y0));
    out.r_ref = reference_radius(out.phi, task);
    const double e_beta = beta_hat - task.beta_ref;
    const double e_r = r_fit - out.r_ref;
    const auto d = pid_step(gains.sideslip, e_beta, dt, state.sideslip);
    const auto w = pid_step(gains.circle, e_r, dt, state.circle);
    out.cmd = {d.value, w.value};
    out.state = {d.state, w.state};
    return out;
}

/// Single-owner controller holding both integrators.
class DriftController {
public:
    DriftController(CircleTask task, Gains gains) : task_(task), gains_(gains)
    {
        task_.validate();
        gains_.sideslip.validate();
        gains_.circle.validate();
    }

    StepResult step(const estimator::StateEstimate& est, double beta_hat, double r_fit, double dt)
    {
        auto res = controller_step(est, beta_hat, r_fit, task_, gains_, dt, state_);
        state_ = res.state;
        return res;
    }

    const CircleTask& task() const { return task_; }
    const Gains& gains() const { return gains_; }
    const ControllerState& state() const { return state_; }

private:
    CircleTask task_;
    Gains gains_;
    ControllerState state_;
};

} // namespace driftlab::controller
