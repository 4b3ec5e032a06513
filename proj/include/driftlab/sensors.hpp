#pragma once

// Simulated onboard sensors: ZED-style pose with random-walk bias, a
// front RGB-D camera observing a fixed anchor, IMU attitude/heading, and the
// merged asynchronous schedule.
//
// Anchor geometry works in the rotation convention of frames.hpp: `yaw` is the
// angle T is built from (frame_yaw_of_heading(psi) for a car with heading psi).

#include <driftlab/errors.hpp>
#include <driftlab/estimator.hpp>
#include <driftlab/frames.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

namespace driftlab::sensors {

using estimator::Measurement;
using estimator::Sensor;
using Vec2 = frames::Vec2<double>;

struct AnchorModel {
    double xA = 0.0;
    double yA = 0.0;
    double k1 = 220.5;          ///< m * pixels: d = k1 / sqrt(S_img)
    double k2 = 1.0 / 600.0;    ///< rad / pixel: bearing = k2 * x_img
    double k_aspect = 1.5;      ///< S_img = k_aspect * w_img^2
    double fov_half = 0.75049157835756164; ///< 43 degrees
    frames::MountOffset<double> mount{0.0, 0.15};

    void validate() const
    {
        if (!(k1 > 0.0) || !(k2 > 0.0) || !(k_aspect > 0.0)) {
            throw ConfigError("anchor: k1, k2 and k_aspect must be positive");
        }
        if (!(fov_half > 0.0 && fov_half < std::numbers::pi / 2.0)) {
            throw ConfigError("anchor: fov_half must lie in (0, pi/2)");
        }
    }
};

struct AnchorNoise {
    double x_img_std = 0.0; ///< pixels
    double w_img_std = 0.0; ///< pixels
    double depth_std = 0.0; ///< m
};

/// Variances used to fuse the monocular and depth ranges.
struct RangeFusion {
    double var_mono = 2.5e-4;
    double var_depth = 1e-4;
};

struct ImageObservation {
    double x_img = 0.0;
    double s_img = 0.0;
    double w_img = 0.0;
    double d_depth = 0.0;
};

namespace detail {

template <class Rng>
double gauss(Rng& rng, double std)
{
    if (!(std > 0.0)) {
        return 0.0;
    }
    std::normal_distribution<double> n(0.0, std);
    return n(rng);
}

inline Vec2 camera_position(const Vec2& center, double yaw, const frames::MountOffset<double>& m)
{
    return center + Vec2(m.px, m.py) * frames::rotation(yaw);
}

struct RangeBearing {
    double d = 0.0;
    double bearing = 0.0; ///< positive toward body +X (right of the optical axis)
};

inline RangeBearing anchor_in_camera(const Vec2& center, double yaw, const AnchorModel& anchor)
{
    const Vec2 rel = Vec2(anchor.xA, anchor.yA) - camera_position(center, yaw, anchor.mount);
    const Vec2 body = rel * frames::rotation(yaw).transpose();
    return {body.norm(), std::atan2(body(0), body(1))};
}

} // namespace detail

/// Visibility test only (no noise).
inline bool anchor_visible(const Vec2& center, double yaw, const AnchorModel& anchor)
{
    const auto rb = detail::anchor_in_camera(center, yaw, anchor);
    return rb.d > 0.0 && std::abs(rb.bearing) <= anchor.fov_half;
}

/// Image-plane observation of the anchor from a car centered at `center`.
/// nullopt when out of view, degenerate (zero range), or when noise pushes the
/// projected width to zero.
template <class Rng>
std::optional<ImageObservation> anchor_project(const Vec2& center, double yaw, const AnchorModel& anchor,
                                               const AnchorNoise& noise, Rng& rng)
{
    const auto rb = detail::anchor_in_camera(center, yaw, anchor);
    if (!(rb.d > 0.0) || std::abs(rb.bearing) > anchor.fov_half) {
        return std::nullopt;
    }
    ImageObservation o;
    o.x_img = rb.bearing / anchor.k2 + detail::gauss(rng, noise.x_img_std);
    const double s_true = (anchor.k1 / rb.d) * (anchor.k1 / rb.d);
    o.w_img = std::sqrt(s_true / anchor.k_aspect) + detail::gauss(rng, noise.w_img_std);
    if (!(o.w_img > 0.0)) {
        return std::nullopt;
    }
    o.s_img = anchor.k_aspect * o.w_img * o.w_img;
    o.d_depth = rb.d + detail::gauss(rng, noise.depth_std);
    return o;
}

inline std::optional<ImageObservation> anchor_project(const Vec2& center, double yaw, const AnchorModel& anchor)
{
    std::mt19937_64 unused(0);
    return anchor_project(center, yaw, anchor, AnchorNoise{}, unused);
}

/// Inverse-variance weighted mean of two ranges.
inline double fuse_ranges(double d_mono, double var_mono, double d_depth, double var_depth)
{
    if (!(var_mono > 0.0) && !(var_depth > 0.0)) {
        return 0.5 * (d_mono + d_depth);
    }
    if (!(var_mono > 0.0)) return d_mono;
    if (!(var_depth > 0.0)) return d_depth;
    const double wm = 1.0 / var_mono;
    const double wd = 1.0 / var_depth;
    return (wm * d_mono + wd * d_depth) / (wm + wd);
}

/// Car-center ground position from an anchor observation:
/// range d from width (k1' = k1 / sqrt(k)) fused with depth, bearing
/// k2 * x_img, relative vector p = d (sin, cos) in body axes, and
/// center = anchor - (p + mount) * T(yaw).
inline Vec2 anchor_localize(const ImageObservation& obs, const AnchorModel& anchor, double yaw,
                            const RangeFusion& fusion = {})
{
    if (!(obs.w_img > 0.0)) {
        throw DomainError("anchor_localize: projected width must be positive");
    }
    const double k1p = anchor.k1 / std::sqrt(anchor.k_aspect);
    const double d_mono = k1p / obs.w_img;
    const double d = obs.d_depth > 0.0 ? fuse_ranges(d_mono, fusion.var_mono, obs.d_depth, fusion.var_depth)
                                       : d_mono;
    const double bearing = anchor.k2 * obs.x_img;
    const Vec2 p(d * std::sin(bearing), d * std::cos(bearing));
    const Vec2 m(anchor.mount.px, anchor.mount.py);
    return Vec2(anchor.xA, anchor.yA) - (p + m) * frames::rotation(yaw);
}

struct ZedConfig {
    double psi0 = 0.3;              ///< ground yaw of the ZED frame at start-up
    frames::MountOffset<double> mount{0.0, -0.12};
    double white_std = 0.005;       ///< m
    double bias_step_std = 0.001;   ///< m per tick
};

/// ZED pose stream. The reported position is in the ZED frame; map it back
/// with frames::zed_to_ground.
class ZedSensor {
public:
    explicit ZedSensor(ZedConfig cfg) : cfg_(cfg) {}

    template <class Rng>
    Measurement measure(double t, const Vec2& center, double yaw, Rng& rng)
    {
        bias_(0) += detail::gauss(rng, cfg_.bias_step_std);
        bias_(1) += detail::gauss(rng, cfg_.bias_step_std);
        Vec2 p = center + bias_;
        p(0) += detail::gauss(rng, cfg_.white_std);
        p(1) += detail::gauss(rng, cfg_.white_std);
        Measurement m;
        m.t = t;
        m.sensor = Sensor::zed_pos;
        m.value = frames::ground_to_zed(p, cfg_.psi0, yaw, cfg_.mount).transpose();
        m.noise_var.setConstant(cfg_.white_std * cfg_.white_std);
        return m;
    }

    const Vec2& bias() const { return bias_; }
    const ZedConfig& config() const { return cfg_; }

private:
    ZedConfig cfg_;
    Vec2 bias_ = Vec2::Zero();
};

struct ImuConfig {
    double heading_std = 0.005; ///< rad
};

/// theta_IMU = velocity attitude + heading error (channel 0); raw heading
/// with the same error in channel 1. Stationary car: no report.
template <class Rng>
std::optional<Measurement> imu_measure(double t, double psi, const frames::PlanarVelocity<double>& vel,
                                       const ImuConfig& cfg, Rng& rng)
{
    if (vel.dx == 0.0 && vel.dy == 0.0) {
        return std::nullopt;
    }
    const double n = detail::gauss(rng, cfg.heading_std);
    Measurement m;
    m.t = t;
    m.sensor = Sensor::imu_theta;
    m.value << frames::wrap_angle(std::atan2(vel.dy, vel.dx) + n), frames::wrap_angle(psi + n);
    m.noise_var.setConstant(cfg.heading_std * cfg.heading_std);
    return m;
}

struct SensorSchedule {
    double zed_rate = 100.0;
    double d435i_rate = 60.0;
    double imu_rate = 100.0;  ///< 0 disables the stream
    double jitter_std = 5e-4; ///< s
    std::uint64_t seed = 1;

    void validate() const
    {
        if (!(zed_rate > 0.0) || !(d435i_rate > 0.0) || !(imu_rate >= 0.0)) {
            throw ConfigError("schedule: camera rates must be positive and imu_rate non-negative");
        }
        if (!(jitter_std >= 0.0)) {
            throw ConfigError("schedule: jitter_std must be non-negative");
        }
    }
};

struct ScheduleEntry {
    std::int64_t t_ns = 0;
    Sensor sensor = Sensor::zed_pos;

    double t() const { return static_cast<double>(t_ns) * 1e-9; }
};

/// Merged tick list over (0, t_end], strictly increasing at nanosecond
/// resolution: ticks that land on an already used nanosecond are pushed to the
/// next free one.
inline std::vector<ScheduleEntry> build_schedule(const SensorSchedule& sched, double t_end)
{
    sched.validate();
    if (!(t_end > 0.0)) {
        throw ConfigError("schedule: t_end must be positive");
    }
    const auto end_ns = static_cast<std::int64_t>(std::llround(t_end * 1e9));
    std::mt19937_64 rng(sched.seed);
    std::vector<ScheduleEntry> all;

    auto stream = [&](double rate, Sensor s) {
        if (!(rate > 0.0)) {
            return;
        }
        std::normal_distribution<double> jitter(0.0, 1.0);
        std::int64_t prev = 0;
        for (std::int64_t k = 1;; ++k) {
            const auto nominal = static_cast<std::int64_t>(std::llround(static_cast<double>(k) * 1e9 / rate));
            if (nominal > end_ns) {
                break;
            }
            std::int64_t t = nominal;
            if (sched.jitter_std > 0.0) {
                t += static_cast<std::int64_t>(std::llround(jitter(rng) * sched.jitter_std * 1e9));
            }
            t = std::clamp<std::int64_t>(t, prev + 1, end_ns);
            if (t <= prev) {
                break; // clamped onto the end with nothing left
            }
            all.push_back({t, s});
            prev = t;
        }
    };
    stream(sched.zed_rate, Sensor::zed_pos);
    stream(sched.d435i_rate, Sensor::d435i_pos);
    stream(sched.imu_rate, Sensor::imu_theta);

    std::stable_sort(all.begin(), all.end(), [](const ScheduleEntry& a, const ScheduleEntry& b) {
        return a.t_ns < b.t_ns;
    });
    std::int64_t prev = 0;
    for (auto& e : all) {
        if (e.t_ns <= prev) {
            e.t_ns = prev + 1;
        }
        prev = e.t_ns;
    }
    return all;
}

} // namespace driftlab::sensors
