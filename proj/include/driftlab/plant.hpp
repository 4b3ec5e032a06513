#pragma once

// Ground-truth vehicle: circular-drift kinematics with first-order sideslip
// and speed responses to the actuators.
//
//   theta = psi + beta
//   x' = v cos(theta), y' = v sin(theta)
//   theta' = a_lat / v,  a_lat = grip (-sin beta) v^2 / (v^2 + v_knee^2)
//   beta' = (g_delta delta - beta) / tau_beta
//   v' = (g_omega omega - v) / tau_v
//
// The lateral acceleration law makes the radius of curvature
// (v^2 + v_knee^2) / (grip (-sin beta)): faster wheels widen the circle,
// and zero sideslip drives straight. Explicit Euler at a fixed step.

#include <driftlab/command.hpp>
#include <driftlab/frames.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace driftlab::plant {

struct PlantState {
    double x = 0.0;
    double y = 0.0;
    double psi = 0.0;
    double v = 0.0;
    double beta = 0.0;
    double t = 0.0;

    double theta() const { return frames::wrap_angle(psi + beta); }
};

struct ProcessNoise {
    double beta_std = 0.0;  ///< rad / sqrt(s)
    double v_std = 0.0;     ///< (m/s) / sqrt(s)
    double theta_std = 0.0; ///< rad / sqrt(s)
};

struct PlantConfig {
    double tau_beta = 0.2;
    double tau_v = 0.3;
    double g_delta = 3.5;   ///< steady-state beta per rad of steering
    double g_omega = 0.05;  ///< steady-state speed per rad/s of wheel speed
    double grip = 2.3;      ///< saturated lateral acceleration (m/s^2)
    double v_knee = 0.1;    ///< speed below which lateral acceleration fades (m/s)
    ProcessNoise process_noise;
    double dt = 1e-3;
};

/// Rate of change of the velocity attitude.
inline double attitude_rate(double v, double beta, const PlantConfig& cfg)
{
    return cfg.grip * -std::sin(beta) * v / (v * v + cfg.v_knee * cfg.v_knee);
}

/// Radius of the circle the car settles on at constant (v, beta).
inline double implied_radius(double v, double beta, const PlantConfig& cfg)
{
    return (v * v + cfg.v_knee * cfg.v_knee) / (cfg.grip * -std::sin(beta));
}

/// Speed at which the steady circle at sideslip beta has radius r.
inline double equilibrium_speed(double r, double beta, const PlantConfig& cfg)
{
    return std::sqrt(r * cfg.grip * -std::sin(beta) - cfg.v_knee * cfg.v_knee);
}

namespace detail {

inline double lag_step(double value, double target, double tau, double dt)
{
    if (std::isinf(tau)) {
        return value;
    }
    return value + (target - value) * dt / tau;
}

inline PlantState advance(const PlantState& s, const ControlCommand& cmd, const PlantConfig& cfg,
                          double dt, double n_beta, double n_v, double n_theta)
{
    const double theta = s.psi + s.beta;
    PlantState out;
    out.x = s.x + s.v * std::cos(theta) * dt;
    out.y = s.y + s.v * std::sin(theta) * dt;
    const double theta_next = theta + attitude_rate(s.v, s.beta, cfg) * dt + n_theta;
    out.beta = frames::wrap_angle(lag_step(s.beta, cfg.g_delta * cmd.delta, cfg.tau_beta, dt) + n_beta);
    out.v = std::max(0.0, lag_step(s.v, cfg.g_omega * cmd.omega, cfg.tau_v, dt) + n_v);
    out.psi = frames::wrap_angle(theta_next - out.beta);
    out.t = s.t + dt;
    return out;
}

} // namespace detail

/// One fixed step without process noise.
inline PlantState plant_step(const PlantState& s, const ControlCommand& cmd, const PlantConfig& cfg)
{
    return detail::advance(s, cmd, cfg, cfg.dt, 0.0, 0.0, 0.0);
}

/// One fixed step with zero-mean Gaussian process noise drawn from rng.
template <class Rng>
PlantState plant_step(const PlantState& s, const ControlCommand& cmd, const PlantConfig& cfg, Rng& rng)
{
    std::normal_distribution<double> n01(0.0, 1.0);
    const double sq = std::sqrt(cfg.dt);
    const auto& pn = cfg.process_noise;
    const double nb = pn.beta_std > 0.0 ? pn.beta_std * sq * n01(rng) : 0.0;
    const double nv = pn.v_std > 0.0 ? pn.v_std * sq * n01(rng) : 0.0;
    const double nt = pn.theta_std > 0.0 ? pn.theta_std * sq * n01(rng) : 0.0;
    return detail::advance(s, cmd, cfg, cfg.dt, nb, nv, nt);
}

/// Noise-free sub-step of length tau (0 <= tau < dt), used to observe the car
/// between grid points.
inline PlantState extrapolate(const PlantState& s, const ControlCommand& cmd, const PlantConfig& cfg,
                              double tau)
{
    return detail::advance(s, cmd, cfg, tau, 0.0, 0.0, 0.0);
}

struct TrajectoryRow {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double psi = 0.0;
    double v = 0.0;
    double beta = 0.0;
    double delta = 0.0;
    double omega = 0.0;
};

/// Fixed-step loop with a controller invoked every `control_period` seconds.
/// `controller(const PlantState&) -> ControlCommand`. One row is logged per
/// control tick.
template <class Controller, class Rng>
std::vector<TrajectoryRow> run_plant(const PlantState& init, Controller&& controller, double duration,
                                     const PlantConfig& cfg, Rng& rng, double control_period = 0.01)
{
    const long steps = std::lround(duration / cfg.dt);
    const long every = std::max(1L, std::lround(control_period / cfg.dt));
    std::vector<TrajectoryRow> log;
    log.reserve(static_cast<std::size_t>(steps / every + 1));
    PlantState s = init;
    ControlCommand cmd;
    for (long i = 0; i <= steps; ++i) {
        s.t = init.t + static_cast<double>(i) * cfg.dt;
        if (i % every == 0) {
            cmd = controller(static_cast<const PlantState&>(s));
            log.push_back({s.t, s.x, s.y, s.psi, s.v, s.beta, cmd.delta, cmd.omega});
        }
        if (i < steps) {
            s = plant_step(s, cmd, cfg, rng);
        }
    }
    return log;
}

} // namespace driftlab::plant
