#pragma once

// Asynchronous EKF over X = (x, y, theta, v) for circular drifting, and the
// resilient sideslip gate.
//
// Every measurement comes from exactly one sensor and carries its own
// timestamp; the filter predicts across the (non-uniform) gap to that stamp
// and then updates with only that sensor's rows of C.

#include <driftlab/command.hpp>
#include <driftlab/errors.hpp>
#include <driftlab/frames.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace driftlab::estimator {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

// State layout.
inline constexpr int ix = 0;
inline constexpr int iy = 1;
inline constexpr int itheta = 2;
inline constexpr int iv = 3;

enum class Sensor { zed_pos, d435i_pos, imu_theta };

inline std::string_view to_string(Sensor s)
{
    switch (s) {
    case Sensor::zed_pos: return "zed_pos";
    case Sensor::d435i_pos: return "d435i_pos";
    case Sensor::imu_theta: return "imu_theta";
    }
    throw DomainError("unknown sensor id " + std::to_string(static_cast<int>(s)));
}

inline Sensor parse_sensor(std::string_view name)
{
    if (name == "zed_pos") return Sensor::zed_pos;
    if (name == "d435i_pos") return Sensor::d435i_pos;
    if (name == "imu_theta") return Sensor::imu_theta;
    throw DomainError("unknown sensor id '" + std::string(name) + "'");
}

/// One report from one sensor. Positions use both channels; the IMU report
/// carries theta in channel 0 and the raw heading psi in channel 1 (the
/// heading is not a filter observation).
struct Measurement {
    double t = 0.0;
    Sensor sensor = Sensor::zed_pos;
    Eigen::Vector2d value = Eigen::Vector2d::Zero();
    Eigen::Vector2d noise_var = Eigen::Vector2d::Zero();
};

struct StateEstimate {
    Vec4 xhat = Vec4::Zero();
    Mat4 P = Mat4::Identity();
    double t = 0.0;

    double x() const { return xhat(ix); }
    double y() const { return xhat(iy); }
    double theta() const { return xhat(itheta); }
    double v() const { return xhat(iv); }
};

struct NoiseModel {
    Mat4 q_rate = Vec4(1e-4, 1e-4, 2e-2, 5e-2).asDiagonal(); ///< per second
    double r_zed_pos = 1e-2;   ///< m^2 per channel
    double r_d435i_pos = 1e-4; ///< m^2 per channel
    double r_imu_theta = 1e-4; ///< rad^2
    double b_delta = 0.0;
    double b_omega = 0.0;

    double variance_for(Sensor s) const
    {
        switch (s) {
        case Sensor::zed_pos: return r_zed_pos;
        case Sensor::d435i_pos: return r_d435i_pos;
        case Sensor::imu_theta: return r_imu_theta;
        }
        throw DomainError("unknown sensor id");
    }
};

/// velocity_column: transition matrix with only the velocity column coupled
/// (cos(theta) dt, sin(theta) dt, dt / r). full_jacobian adds the
/// d(v cos theta)/d theta and d(v sin theta)/d theta terms to the covariance
/// propagation. The state itself is propagated identically in both modes.
enum class TransitionMode { velocity_column, full_jacobian };

enum class UpdateMode { block, sequential };

/// Transition matrix at the given state.
inline Mat4 transition(const Vec4& x, double dt, double r_nominal)
{
    Mat4 a = Mat4::Identity();
    a(ix, iv) = std::cos(x(itheta)) * dt;
    a(iy, iv) = std::sin(x(itheta)) * dt;
    a(itheta, iv) = dt / r_nominal;
    return a;
}

inline Mat4 covariance_jacobian(const Vec4& x, double dt, double r_nominal, TransitionMode mode)
{
    Mat4 f = transition(x, dt, r_nominal);
    if (mode == TransitionMode::full_jacobian) {
        f(ix, itheta) = -x(iv) * std::sin(x(itheta)) * dt;
        f(iy, itheta) = x(iv) * std::cos(x(itheta)) * dt;
    }
    return f;
}

namespace detail {

inline Mat4 symmetrized(const Mat4& p)
{
    return 0.5 * (p + p.transpose());
}

} // namespace detail

inline StateEstimate predict(const StateEstimate& est, const ControlCommand& u, double dt,
                             const NoiseModel& nm, double r_nominal,
                             TransitionMode mode = TransitionMode::velocity_column)
{
    if (!(dt >= 0.0)) {
        throw OrderingError("predict: negative interval (out-of-order prediction)");
    }
    if (!(r_nominal > 0.0)) {
        throw DomainError("predict: nominal radius must be positive");
    }
    StateEstimate out;
    const Mat4 a = transition(est.xhat, dt, r_nominal);
    out.xhat = a * est.xhat;
    out.xhat(itheta) += dt * nm.b_delta * u.delta;
    out.xhat(iv) += dt * nm.b_omega * u.omega;
    out.xhat(itheta) = frames::wrap_angle(out.xhat(itheta));

    const Mat4 f = covariance_jacobian(est.xhat, dt, r_nominal, mode);
    out.P = detail::symmetrized(f * est.P * f.transpose() + nm.q_rate * dt);
    out.t = est.t + dt;
    return out;
}

/// Measurement rows for the update: y = C x + w with diagonal R. Rows whose C
/// entries are all zero are unavailable channels and are ignored.
struct ObservationRows {
    Eigen::MatrixXd C;
    Eigen::VectorXd y;
    Eigen::VectorXd r;
    std::vector<bool> angular; ///< innovation wrapped to (-pi, pi]
};

inline ObservationRows rows_for(const Measurement& m)
{
    ObservationRows o;
    switch (m.sensor) {
    case Sensor::zed_pos:
    case Sensor::d435i_pos:
        o.C = Eigen::MatrixXd::Zero(2, 4);
        o.C(0, ix) = 1.0;
        o.C(1, iy) = 1.0;
        o.y = m.value;
        o.r = m.noise_var;
        o.angular = {false, false};
        return o;
    case Sensor::imu_theta:
        o.C = Eigen::MatrixXd::Zero(1, 4);
        o.C(0, itheta) = 1.0;
        o.y = Eigen::VectorXd::Constant(1, m.value(0));
        o.r = Eigen::VectorXd::Constant(1, m.noise_var(0));
        o.angular = {true};
        return o;
    }
    throw DomainError("update: unknown sensor id");
}

/// Gain, covariance and state update with the given rows, applied jointly.
/// Covariance uses the Joseph form (algebraically (I - K C) P for the optimal
/// gain) and is re-symmetrized.
inline StateEstimate update_rows(const StateEstimate& est, const ObservationRows& obs)
{
    std::vector<Eigen::Index> live;
    for (Eigen::Index i = 0; i < obs.C.rows(); ++i) {
        if ((obs.C.row(i).array() != 0.0).any()) {
            live.push_back(i);
        }
    }
    if (live.empty()) {
        return est;
    }
    const auto k = static_cast<Eigen::Index>(live.size());
    Eigen::MatrixXd c(k, 4);
    Eigen::VectorXd innov(k);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto i = live[static_cast<std::size_t>(j)];
        if (!(obs.r(i) >= 0.0)) {
            throw NumericalError("update: negative measurement variance");
        }
        c.row(j) = obs.C.row(i);
        double e = obs.y(i) - obs.C.row(i).dot(est.xhat);
        if (obs.angular[static_cast<std::size_t>(i)]) {
            e = frames::wrap_angle(e);
        }
        innov(j) = e;
        r(j, j) = obs.r(i);
    }
    const Eigen::MatrixXd s = c * est.P * c.transpose() + r;
    if (!s.allFinite()) {
        throw NumericalError("update: non-finite innovation covariance");
    }
    // K = P C^T S^-1
    Eigen::MatrixXd gain;
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() == Eigen::Success) {
        gain = llt.solve(c * est.P).transpose();
    } else {
        // Singular but PSD S (exact measurements of already exact states):
        // the pseudo-inverse gain ignores innovation directions S cannot see.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
        const Eigen::VectorXd ev = eig.eigenvalues();
        const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
        if (ev.minCoeff() < -1e-10 * scale) {
            throw NumericalError("update: innovation covariance is not positive semidefinite");
        }
        const double cut = 1e-12 * scale;
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            if (ev(j) > cut) inv(j) = 1.0 / ev(j);
        }
        const Eigen::MatrixXd s_pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
        gain = est.P * c.transpose() * s_pinv;
    }

    StateEstimate out;
    out.t = est.t;
    out.xhat = est.xhat + gain * innov;
    out.xhat(itheta) = frames::wrap_angle(out.xhat(itheta));
    const Mat4 ikc = Mat4::Identity() - gain * c;
    out.P = detail::symmetrized(ikc * est.P * ikc.transpose() + gain * r * gain.transpose());
    return out;
}

/// Update with the reporting sensor's rows only. The measurement must be
/// stamped at est.t (predict first).
inline StateEstimate update(const StateEstimate& est, const Measurement& m,
                            UpdateMode mode = UpdateMode::block)
{
    if (m.t != est.t) {
        throw OrderingError("update: measurement time differs from estimate time; predict first");
    }
    const auto rows = rows_for(m);
    if (mode == UpdateMode::block) {
        return update_rows(est, rows);
    }
    StateEstimate cur = est;
    for (Eigen::Index i = 0; i < rows.C.rows(); ++i) {
        ObservationRows one;
        one.C = rows.C.row(i);
        one.y = Eigen::VectorXd::Constant(1, rows.y(i));
        one.r = Eigen::VectorXd::Constant(1, rows.r(i));
        one.angular = {rows.angular[static_cast<std::size_t>(i)]};
        cur = update_rows(cur, one);
    }
    return cur;
}

/// Single-owner filter. Measurements must arrive in nondecreasing time order.
class AsyncEkf {
public:
    AsyncEkf(StateEstimate initial, NoiseModel nm,
             TransitionMode tmode = TransitionMode::velocity_column,
             UpdateMode umode = UpdateMode::block)
        : est_(std::move(initial)), nm_(std::move(nm)), tmode_(tmode), umode_(umode)
    {}

    /// Predicts to m.t with the held command and nominal radius, then updates.
    const StateEstimate& process(const Measurement& m, const ControlCommand& u, double r_nominal)
    {
        if (m.t < est_.t) {
            throw OrderingError("measurement at t=" + std::to_string(m.t)
                                + " precedes filter time " + std::to_string(est_.t));
        }
        est_ = predict(est_, u, m.t - est_.t, nm_, r_nominal, tmode_);
        est_.t = m.t; // exact stamp, no accumulated round-off
        est_ = update(est_, m, umode_);
        ++consumed_;
        return est_;
    }

    /// Prediction to time t without committing it.
    StateEstimate peek(double t, const ControlCommand& u, double r_nominal) const
    {
        if (t < est_.t) {
            throw OrderingError("peek: time precedes filter time");
        }
        auto p = predict(est_, u, t - est_.t, nm_, r_nominal, tmode_);
        p.t = t;
        return p;
    }

    const StateEstimate& estimate() const { return est_; }
    const NoiseModel& noise() const { return nm_; }
    long consumed() const { return consumed_; }

private:
    StateEstimate est_;
    NoiseModel nm_;
    TransitionMode tmode_;
    UpdateMode umode_;
    long consumed_ = 0;
};

/// Sideslip from consecutive velocity attitudes, rejecting abrupt jumps.
/// |wrap(theta_k - theta_{k-1})| < h dt passes theta_k through; otherwise
/// theta_k is replaced by the circular-motion prediction
/// theta_{k-1} + v_{k-1} dt / r_hat.
inline double resilient_sideslip(const StateEstimate& prev, const StateEstimate& cur, double psi_now,
                                 double r_hat, double dt, double h)
{
    if (!(dt > 0.0)) {
        throw DomainError("resilient_sideslip: dt must be positive");
    }
    if (!(r_hat > 0.0)) {
        throw DomainError("resilient_sideslip: radius must be positive");
    }
    if (prev.v() == 0.0 || cur.v() == 0.0) {
        throw DomainError("resilient_sideslip: zero speed leaves theta undefined");
    }
    const double jump = frames::wrap_angle(cur.theta() - prev.theta());
    if (std::abs(jump) < h * dt) {
        return frames::wrap_angle(cur.theta() - psi_now);
    }
    return frames::wrap_angle(prev.theta() + prev.v() * dt / r_hat - psi_now);
}

/// Stateful wrapper: keeps the last accepted attitude so a single spike does
/// not poison the following step.
class SideslipGate {
public:
    explicit SideslipGate(double h) : h_(h) {}

    struct Result {
        double beta = 0.0;
        bool replaced = false;
    };

    Result step(const StateEstimate& cur, double psi_now, double r_hat)
    {
        if (!have_prev_ || !(cur.t > prev_.t)) {
            prev_ = cur;
            have_prev_ = true;
            return {frames::wrap_angle(cur.theta() - psi_now), false};
        }
        const double dt = cur.t - prev_.t;
        const double beta = resilient_sideslip(prev_, cur, psi_now, r_hat, dt, h_);
        const double jump = frames::wrap_angle(cur.theta() - prev_.theta());
        const bool replaced = !(std::abs(jump) < h_ * dt);
        StateEstimate accepted = cur;
        if (replaced) {
            accepted.xhat(itheta) = frames::wrap_angle(beta + psi_now);
        }
        prev_ = accepted;
        return {beta, replaced};
    }

    double threshold() const { return h_; }

private:
    double h_;
    StateEstimate prev_;
    bool have_prev_ = false;
};

} // namespace driftlab::estimator
