#pragma once

// Closed-loop experiment: plant, sensors, three estimation channels (ZED+IMU,
// D435i+IMU, all sensors), circle fitting and the drift controller, stepped
// on a fixed grid. Also the offline replay of a measurement log.

#include <driftlab/circlefit.hpp>
#include <driftlab/config.hpp>
#include <driftlab/controller.hpp>
#include <driftlab/errors.hpp>
#include <driftlab/estimator.hpp>
#include <driftlab/frames.hpp>
#include <driftlab/logs.hpp>
#include <driftlab/metrics.hpp>
#include <driftlab/plant.hpp>
#include <driftlab/sensors.hpp>

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace driftlab::harness {

using config::ExperimentConfig;
using config::Source;
using estimator::Sensor;

/// Sensor subsets an estimation channel listens to.
enum class Channel { zed, d435i, ekf };
inline constexpr std::array<Channel, 3> all_channels{Channel::zed, Channel::d435i, Channel::ekf};

inline std::string_view to_string(Channel c)
{
    switch (c) {
    case Channel::zed: return "zed";
    case Channel::d435i: return "d435i";
    case Channel::ekf: return "ekf";
    }
    return "?";
}

inline Channel parse_channel(std::string_view s)
{
    if (s == "zed") return Channel::zed;
    if (s == "d435i") return Channel::d435i;
    if (s == "ekf") return Channel::ekf;
    throw ConfigError("unknown estimator channel '" + std::string(s) + "' (zed, d435i, ekf)");
}

inline bool channel_accepts(Channel c, Sensor s)
{
    switch (c) {
    case Channel::zed: return s != Sensor::d435i_pos;
    case Channel::d435i: return s != Sensor::zed_pos;
    case Channel::ekf: return true;
    }
    return false;
}

inline std::size_t index_of(Channel c) { return static_cast<std::size_t>(c); }

/// Last IMU heading, propagated at a caller-supplied yaw rate.
class HeadingTracker {
public:
    HeadingTracker(double t, double psi) : t_(t), psi_(psi) {}

    void observe(double t, double psi)
    {
        t_ = t;
        psi_ = psi;
    }

    double at(double t, double rate) const { return frames::wrap_angle(psi_ + rate * (t - t_)); }

private:
    double t_;
    double psi_;
};

/// Sliding window of positions with a resilient circle fit. The radius keeps
/// its last good value when a fit fails.
class FitWindow {
public:
    FitWindow(std::size_t capacity, circlefit::ResilientOptions<double> opt, double r_initial)
        : cap_(capacity), opt_(opt), r_(r_initial)
    {}

    void push(double x, double y)
    {
        pts_.push_back({x, y});
        if (pts_.size() > cap_) pts_.pop_front();
        if (pts_.size() < cap_) return;
        const std::vector<circlefit::Point<double>> v(pts_.begin(), pts_.end());
        try {
            const auto fit = circlefit::resilient_fit(v, opt_);
            if (std::isfinite(fit.r)) {
                r_ = fit.r;
            }
        } catch (const FitError&) {
        }
    }

    double radius() const { return r_; }
    std::size_t size() const { return pts_.size(); }

private:
    std::size_t cap_;
    circlefit::ResilientOptions<double> opt_;
    double r_;
    std::deque<circlefit::Point<double>> pts_;
};

/// Car on the reference circle in steady drift, at angle 0 about the center.
inline plant::PlantState initial_state(const ExperimentConfig& cfg)
{
    plant::PlantState s;
    s.x = cfg.task.x0 + cfg.task.r0;
    s.y = cfg.task.y0;
    s.beta = cfg.task.beta_ref;
    s.psi = frames::wrap_angle(std::numbers::pi / 2.0 - s.beta);
    s.v = plant::equilibrium_speed(cfg.task.r0, cfg.task.beta_ref, cfg.plant);
    return s;
}

inline estimator::StateEstimate initial_estimate(const ExperimentConfig& cfg)
{
    const auto s = initial_state(cfg);
    estimator::StateEstimate e;
    e.xhat << s.x, s.y, s.theta(), s.v;
    e.P = cfg.estimator.initial_var.asDiagonal();
    e.t = 0.0;
    return e;
}

/// Fills a window with the arc the car would have driven before t = 0.
inline void prefill(FitWindow& w, const ExperimentConfig& cfg, std::size_t n)
{
    const auto s = initial_state(cfg);
    const double step = s.v * cfg.estimator.fit_period / cfg.task.r0;
    for (std::size_t k = n; k-- > 0;) {
        const double a = -step * static_cast<double>(k);
        w.push(cfg.task.x0 + cfg.task.r0 * std::cos(a), cfg.task.y0 + cfg.task.r0 * std::sin(a));
    }
}

inline circlefit::ResilientOptions<double> fit_options(const ExperimentConfig& cfg)
{
    circlefit::ResilientOptions<double> o;
    o.lambda = cfg.estimator.fit_lambda;
    o.refit_support = cfg.estimator.fit_refit;
    return o;
}

/// One filter with its heading tracker, sideslip gate and circle fit.
class EstimationChannel {
public:
    EstimationChannel(Channel ch, const ExperimentConfig& cfg)
        : ch_(ch),
          cfg_(&cfg),
          ekf_(initial_estimate(cfg), cfg.estimator.noise, cfg.estimator.transition, cfg.estimator.update),
          heading_(0.0, initial_state(cfg).psi),
          gate_(cfg.estimator.slip_threshold),
          window_(static_cast<std::size_t>(cfg.estimator.fit_window), fit_options(cfg), cfg.task.r0)
    {
        // the bootstrap history; the last point coincides with the start pose
        prefill(window_, cfg, static_cast<std::size_t>(cfg.estimator.fit_window));
    }

    Channel channel() const { return ch_; }
    bool accepts(Sensor s) const { return channel_accepts(ch_, s); }

    /// Heading at t from the last IMU report.
    double psi_at(double t) const { return heading_.at(t, yaw_rate()); }

    /// Turns a logged report into a filter measurement and processes it.
    /// Reports for other sensors are ignored.
    void consume(const logs::MeasurementRow& row, const ControlCommand& u)
    {
        if (!accepts(row.sensor)) return;
        const auto& nm = ekf_.noise();
        estimator::Measurement m;
        m.t = row.t;
        m.sensor = row.sensor;
        switch (row.sensor) {
        case Sensor::zed_pos: {
            const frames::Vec2<double> p_zed(row.v1, row.v2);
            const double yaw = frames::frame_yaw_of_heading(psi_at(row.t));
            const auto g = frames::zed_to_ground(p_zed, cfg_->zed.psi0, yaw, cfg_->zed.mount);
            m.value << g(0), g(1);
            m.noise_var.setConstant(nm.r_zed_pos);
            break;
        }
        case Sensor::d435i_pos:
            m.value << row.v1, row.v2;
            m.noise_var.setConstant(nm.r_d435i_pos);
            break;
        case Sensor::imu_theta:
            heading_.observe(row.t, row.v2);
            m.value << row.v1, row.v2;
            m.noise_var.setConstant(nm.r_imu_theta);
            break;
        }
        ekf_.process(m, u, window_.radius());
    }

    struct Sample {
        logs::EstimateRow row;
        estimator::StateEstimate est;
        bool replaced = false;
    };

    /// Estimate at a control tick; on fit ticks the position joins the fit window.
    Sample sample(double t, const ControlCommand& u, bool fit_tick)
    {
        const double r = window_.radius();
        Sample out;
        out.est = ekf_.peek(t, u, r);
        const double psi = heading_.at(t, out.est.v() / r);
        const auto g = gate_.step(out.est, psi, r);
        out.replaced = g.replaced;
        out.row = {t, out.est.x(), out.est.y(), out.est.theta(), out.est.v(), g.beta};
        if (fit_tick) {
            window_.push(out.est.x(), out.est.y());
        }
        return out;
    }

    double r_fit() const { return window_.radius(); }
    const estimator::AsyncEkf& filter() const { return ekf_; }

private:
    double yaw_rate() const { return ekf_.estimate().v() / window_.radius(); }

    Channel ch_;
    const ExperimentConfig* cfg_;
    estimator::AsyncEkf ekf_;
    HeadingTracker heading_;
    estimator::SideslipGate gate_;
    FitWindow window_;
};

/// Everything a run produces. Estimates are indexed by Channel.
struct RunLog {
    std::vector<logs::TrajectoryRow> truth;
    std::vector<logs::MeasurementRow> measurements;
    std::array<std::vector<logs::EstimateRow>, 3> estimates;
    std::vector<logs::CommandRow> commands;
    std::array<long, 3> consumed{};
    std::size_t scheduled = 0;
};

namespace detail {

struct Grid {
    std::int64_t dt_ns;
    std::int64_t steps;
    std::int64_t every;     ///< plant steps per control tick
    std::int64_t fit_every; ///< control ticks per fit sample
    double control_period;
};

inline Grid grid_of(const ExperimentConfig& cfg)
{
    Grid g{};
    g.dt_ns = std::llround(cfg.plant.dt * 1e9);
    g.steps = std::llround(cfg.duration / cfg.plant.dt);
    g.every = std::max<std::int64_t>(1, std::llround(1.0 / (cfg.control_rate * cfg.plant.dt)));
    g.fit_every = std::max<std::int64_t>(1, std::llround(cfg.estimator.fit_period * cfg.control_rate));
    g.control_period = static_cast<double>(g.every * g.dt_ns) * 1e-9;
    return g;
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::array<std::uint64_t, 1> out{};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return out[0];
}

} // namespace detail

/// Runs the experiment described by cfg. Deterministic for a given config.
/// Throws DivergenceError when any channel's position error exceeds
/// cfg.divergence_limit.
inline RunLog run_closed_loop(const ExperimentConfig& cfg)
{
    cfg.validate();
    const auto grid = detail::grid_of(cfg);
    std::mt19937_64 plant_rng(detail::stream_seed(cfg.seed, 1));
    std::mt19937_64 sensor_rng(detail::stream_seed(cfg.seed, 2));
    auto sched_cfg = cfg.schedule;
    sched_cfg.seed = detail::stream_seed(cfg.seed, 3);
    const double t_end = static_cast<double>(grid.steps * grid.dt_ns) * 1e-9;
    const auto schedule = sensors::build_schedule(sched_cfg, t_end);

    RunLog log;
    log.scheduled = schedule.size();
    const auto ticks = static_cast<std::size_t>(grid.steps / grid.every + 1);
    log.truth.reserve(ticks);
    log.commands.reserve(ticks);
    log.measurements.reserve(schedule.size());

    std::array<EstimationChannel, 3> channels{EstimationChannel(Channel::zed, cfg),
                                              EstimationChannel(Channel::d435i, cfg),
                                              EstimationChannel(Channel::ekf, cfg)};
    for (auto& e : log.estimates) e.reserve(ticks);
    FitWindow truth_window(static_cast<std::size_t>(cfg.estimator.fit_window), fit_options(cfg), cfg.task.r0);
    prefill(truth_window, cfg, static_cast<std::size_t>(cfg.estimator.fit_window));

    controller::DriftController ctrl(cfg.task, cfg.gains);
    sensors::ZedSensor zed(cfg.zed);
    plant::PlantState s = initial_state(cfg);
    ControlCommand cmd{cfg.gains.sideslip.ff, cfg.gains.circle.ff};
    std::size_t next = 0;

    for (std::int64_t i = 0;; ++i) {
        const std::int64_t t_ns = i * grid.dt_ns;
        s.t = static_cast<double>(t_ns) * 1e-9;

        if (i % grid.every == 0) {
            const std::int64_t k = i / grid.every;
            const bool fit_tick = k % grid.fit_every == 0;
            std::array<EstimationChannel::Sample, 3> samples;
            for (auto c : all_channels) {
                samples[index_of(c)] = channels[index_of(c)].sample(s.t, cmd, fit_tick);
                const auto& row = samples[index_of(c)].row;
                const double err = std::hypot(row.x - s.x, row.y - s.y);
                if (!(err <= cfg.divergence_limit)) {
                    throw DivergenceError("estimator '" + std::string(to_string(c)) + "' diverged at t="
                                          + std::to_string(s.t) + " s: position error " + std::to_string(err)
                                          + " m exceeds " + std::to_string(cfg.divergence_limit) + " m");
                }
                log.estimates[index_of(c)].push_back(row);
            }

            estimator::StateEstimate drive;
            double beta_hat = 0.0;
            double r_fit = 0.0;
            if (cfg.source == Source::truth) {
                drive.xhat << s.x, s.y, s.theta(), s.v;
                drive.t = s.t;
                beta_hat = s.beta;
                if (fit_tick) truth_window.push(s.x, s.y);
                r_fit = truth_window.radius();
            } else {
                const auto c = cfg.source == Source::zed ? Channel::zed
                             : cfg.source == Source::d435i ? Channel::d435i
                                                           : Channel::ekf;
                drive = samples[index_of(c)].est;
                beta_hat = samples[index_of(c)].row.beta;
                r_fit = channels[index_of(c)].r_fit();
            }
            const auto res = ctrl.step(drive, beta_hat, r_fit, grid.control_period);
            cmd = res.cmd;
            log.truth.push_back({s.t, s.x, s.y, s.psi, s.v, s.beta, cmd.delta, cmd.omega});
            log.commands.push_back({s.t, cmd.delta, cmd.omega, res.phi, res.r_ref, r_fit, beta_hat});
        }

        // reports stamped inside [t, t + dt) see the car extrapolated from the grid point
        while (next < schedule.size() && schedule[next].t_ns < t_ns + grid.dt_ns) {
            const auto& ev = schedule[next++];
            const double te = ev.t();
            const double tau = static_cast<double>(ev.t_ns - t_ns) * 1e-9;
            const auto at = tau > 0.0 ? plant::extrapolate(s, cmd, cfg.plant, tau) : s;
            const frames::Vec2<double> center(at.x, at.y);
            const double yaw = frames::frame_yaw_of_heading(at.psi);
            std::optional<logs::MeasurementRow> row;
            switch (ev.sensor) {
            case Sensor::zed_pos: {
                const auto m = zed.measure(te, center, yaw, sensor_rng);
                row = logs::MeasurementRow{te, Sensor::zed_pos, m.value(0), m.value(1)};
                break;
            }
            case Sensor::d435i_pos: {
                const auto obs = sensors::anchor_project(center, yaw, cfg.anchor, cfg.anchor_noise, sensor_rng);
                if (obs) {
                    const double yaw_est = frames::frame_yaw_of_heading(channels[index_of(Channel::ekf)].psi_at(te));
                    const auto p = sensors::anchor_localize(*obs, cfg.anchor, yaw_est, cfg.estimator.fusion);
                    row = logs::MeasurementRow{te, Sensor::d435i_pos, p(0), p(1)};
                }
                break;
            }
            case Sensor::imu_theta: {
                const frames::PlanarVelocity<double> vel{at.v * std::cos(at.theta()), at.v * std::sin(at.theta())};
                const auto m = sensors::imu_measure(te, at.psi, vel, cfg.imu, sensor_rng);
                if (m) {
                    row = logs::MeasurementRow{te, Sensor::imu_theta, m->value(0), m->value(1)};
                }
                break;
            }
            }
            if (!row) continue;
            log.measurements.push_back(*row);
            for (auto& ch : channels) ch.consume(*row, cmd);
        }

        if (i == grid.steps) break;
        s = plant::plant_step(s, cmd, cfg.plant, plant_rng);
    }

    for (auto c : all_channels) log.consumed[index_of(c)] = channels[index_of(c)].filter().consumed();
    return log;
}

/// Re-runs one estimation channel over a measurement log on the control grid
/// of cfg, with zero commands. With zero input coupling (b_delta = b_omega =
/// 0) this reproduces the closed-loop estimate log of that channel exactly.
inline std::vector<logs::EstimateRow> replay(const std::vector<logs::MeasurementRow>& rows,
                                             const ExperimentConfig& cfg, Channel ch)
{
    cfg.validate();
    const auto grid = detail::grid_of(cfg);
    EstimationChannel chan(ch, cfg);
    const ControlCommand u{};
    std::vector<logs::EstimateRow> out;
    std::size_t next = 0;
    for (std::int64_t k = 0; k * grid.every <= grid.steps; ++k) {
        const std::int64_t tick_ns = k * grid.every * grid.dt_ns;
        while (next < rows.size() && std::llround(rows[next].t * 1e9) < tick_ns) {
            chan.consume(rows[next++], u);
        }
        const double t = static_cast<double>(tick_ns) * 1e-9;
        out.push_back(chan.sample(t, u, k % grid.fit_every == 0).row);
    }
    while (next < rows.size()) chan.consume(rows[next++], u);
    return out;
}

/// Metrics over the run: tracking from the truth log after
/// cfg.metrics_t_start, estimation per channel, laps over the whole run.
inline nlohmann::ordered_json make_report(const ExperimentConfig& cfg, const RunLog& log)
{
    const metrics::MetricsWindow window{cfg.metrics_t_start, std::numeric_limits<double>::infinity()};
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["source"] = std::string(config::to_string(cfg.source));
    j["duration_s"] = cfg.duration;
    j["metrics_t_start_s"] = cfg.metrics_t_start;
    j["tracking"] = metrics::to_json(metrics::tracking_errors(log.truth, cfg.task, window));
    nlohmann::ordered_json est;
    for (auto c : all_channels) {
        est[std::string(to_string(c))] =
            metrics::to_json(metrics::estimation_errors(log.truth, log.estimates[index_of(c)], cfg.task, window));
    }
    j["estimation"] = est;
    const double laps = metrics::lap_count(log.truth, {});
    j["laps"] = laps;
    j["lap_period_s"] = laps > 0.0 ? (log.truth.back().t - log.truth.front().t) / laps : 0.0;
    std::array<std::size_t, 3> per_sensor{};
    for (const auto& m : log.measurements) ++per_sensor[static_cast<std::size_t>(m.sensor)];
    nlohmann::ordered_json counts;
    counts["zed_pos"] = per_sensor[0];
    counts["d435i_pos"] = per_sensor[1];
    counts["imu_theta"] = per_sensor[2];
    counts["scheduled"] = log.scheduled;
    counts["position_rate_hz"] = static_cast<double>(per_sensor[0] + per_sensor[1]) / cfg.duration;
    j["measurements"] = counts;
    nlohmann::ordered_json consumed;
    for (auto c : all_channels) consumed[std::string(to_string(c))] = log.consumed[index_of(c)];
    j["consumed"] = consumed;
    return j;
}

/// Writes truth.csv, measurements.csv, estimates_<channel>.csv, commands.csv,
/// report.json and the effective config.toml into dir.
inline void write_bundle(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RunLog& log)
{
    std::filesystem::create_directories(dir);
    logs::write_file((dir / "truth.csv").string(), logs::to_csv(log.truth));
    logs::write_file((dir / "measurements.csv").string(), logs::to_csv(log.measurements));
    for (auto c : all_channels) {
        logs::write_file((dir / ("estimates_" + std::string(to_string(c)) + ".csv")).string(),
                         logs::to_csv(log.estimates[index_of(c)]));
    }
    logs::write_file((dir / "commands.csv").string(), logs::to_csv(log.commands));
    logs::write_file((dir / "report.json").string(), make_report(cfg, log).dump(2) + "\n");
    logs::write_file((dir / "config.toml").string(), config::dump_config(cfg));
}

} // namespace driftlab::harness
