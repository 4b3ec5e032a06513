#pragma once

// Experiment configuration: defaults, TOML load with unknown-key rejection,
// and TOML dump.

#include <driftlab/controller.hpp>
#include <driftlab/errors.hpp>
#include <driftlab/estimator.hpp>
#include <driftlab/plant.hpp>
#include <driftlab/sensors.hpp>

#include <toml.hpp>

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

namespace driftlab::config {

/// Which estimate drives the controller.
enum class Source { truth, zed, d435i, ekf };

inline std::string_view to_string(Source s)
{
    switch (s) {
    case Source::truth: return "truth";
    case Source::zed: return "zed";
    case Source::d435i: return "d435i";
    case Source::ekf: return "ekf";
    }
    return "?";
}

inline Source parse_source(std::string_view s)
{
    if (s == "truth") return Source::truth;
    if (s == "zed") return Source::zed;
    if (s == "d435i") return Source::d435i;
    if (s == "ekf") return Source::ekf;
    throw ConfigError("unknown estimator source '" + std::string(s) + "' (truth, zed, d435i, ekf)");
}

struct EstimatorConfig {
    estimator::NoiseModel noise{
        estimator::Vec4(1e-5, 1e-5, 1e-2, 1e-2).asDiagonal(), 4e-2, 1.5e-4, 2.5e-5, 0.0, 0.0};
    estimator::TransitionMode transition = estimator::TransitionMode::velocity_column;
    estimator::UpdateMode update = estimator::UpdateMode::block;
    estimator::Vec4 initial_var{1e-4, 1e-4, 1e-3, 1e-2};
    double slip_threshold = 20.0; ///< h, rad/s
    int fit_window = 40;
    double fit_period = 0.05;     ///< s between fit samples
    std::optional<double> fit_lambda;
    bool fit_refit = true;
    sensors::RangeFusion fusion;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    double duration = 50.0;
    Source source = Source::ekf;
    double control_rate = 100.0;
    double divergence_limit = 10.0;
    double metrics_t_start = 10.0;

    controller::CircleTask task;
    controller::Gains gains;
    double wheel_radius = 0.05;

    EstimatorConfig estimator;

    sensors::SensorSchedule schedule;
    sensors::ZedConfig zed;
    sensors::AnchorModel anchor;
    sensors::AnchorNoise anchor_noise{1.0, 1.0, 0.01};
    sensors::ImuConfig imu;

    plant::PlantConfig plant{0.2, 0.3, 3.5, 0.05, 2.3, 0.1, {0.03, 0.03, 0.01}, 1e-3};

    void validate() const
    {
        if (!(duration > 0.0)) throw ConfigError("duration must be positive");
        if (!(control_rate > 0.0)) throw ConfigError("control_rate must be positive");
        if (!(divergence_limit > 0.0)) throw ConfigError("divergence_limit must be positive");
        if (!(wheel_radius > 0.0)) throw ConfigError("vehicle.wheel_radius must be positive");
        if (!(plant.dt > 0.0)) throw ConfigError("plant.dt must be positive");
        if (!(plant.tau_beta > 0.0) || !(plant.tau_v > 0.0)) throw ConfigError("plant time constants must be positive");
        if (!(plant.grip > 0.0)) throw ConfigError("plant.grip must be positive");
        const double ratio = 1.0 / (control_rate * plant.dt);
        if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
            throw ConfigError("control period must be a whole number of plant steps");
        }
        const double fit_ratio = estimator.fit_period * control_rate;
        if (std::abs(fit_ratio - std::round(fit_ratio)) > 1e-9 || fit_ratio < 1.0) {
            throw ConfigError("estimator.fit_period must be a whole number of control periods");
        }
        if (estimator.fit_window < 3) throw ConfigError("estimator.fit_window must be at least 3");
        if (!(estimator.slip_threshold > 0.0)) throw ConfigError("estimator.slip_threshold must be positive");
        if (estimator.fit_lambda && !(*estimator.fit_lambda > 0.0)) {
            throw ConfigError("estimator.fit_lambda must be positive");
        }
        task.validate();
        gains.sideslip.validate();
        gains.circle.validate();
        schedule.validate();
        anchor.validate();
        if (!(-std::sin(task.beta_ref) * plant.grip * task.r0 > plant.v_knee * plant.v_knee)) {
            throw ConfigError("no steady drift exists for this task and plant");
        }
    }
};

/// Defaults with feedforwards matched to the nominal drift equilibrium.
inline ExperimentConfig default_config()
{
    ExperimentConfig c;
    c.task = {0.0, 0.0, 1.0, -1.4, 0.5, 4.18};
    c.gains.sideslip = {-0.15, -0.3, 0.0, c.task.beta_ref / c.plant.g_delta, 0.5, -0.6, 0.6};
    c.gains.circle = {-5.0, -1.0, 0.0, controller::wheel_speed_feedforward(c.task, c.wheel_radius), 2.0, 0.0, 60.0};
    c.anchor.xA = c.task.x0;
    c.anchor.yA = c.task.y0;
    return c;
}

namespace detail {

/// Typed reader over one TOML table that remembers consumed keys.
class Section {
public:
    Section(const toml::table* tbl, std::string path) : tbl_(tbl), path_(std::move(path)) {}

    template <class T>
    void get(std::string_view key, T& out)
    {
        const toml::node* n = find(key);
        if (n == nullptr) return;
        if constexpr (std::is_same_v<T, bool>) {
            if (auto v = n->value_exact<bool>()) {
                out = *v;
                return;
            }
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = n->value_exact<std::string>()) {
                out = *v;
                return;
            }
        } else if constexpr (std::is_integral_v<T>) {
            if (auto v = n->value_exact<std::int64_t>()) {
                if (*v < 0 && std::is_unsigned_v<T>) {
                    throw ConfigError(where(key) + ": must be non-negative");
                }
                out = static_cast<T>(*v);
                return;
            }
        } else {
            if (auto v = n->value<double>()) {
                out = *v;
                return;
            }
        }
        throw ConfigError(where(key) + ": wrong value type");
    }

    void get(std::string_view key, std::optional<double>& out)
    {
        if (find(key) == nullptr) return;
        double v = 0.0;
        get(key, v);
        out = v;
    }

    Section sub(std::string_view key)
    {
        const toml::node* n = find(key);
        if (n == nullptr) return {nullptr, where(key)};
        if (!n->is_table()) throw ConfigError(where(key) + ": expected a table");
        return {n->as_table(), where(key)};
    }

    bool has(std::string_view key) const { return tbl_ != nullptr && tbl_->contains(key); }

    /// Rejects keys that no get()/sub() call asked for.
    void finish() const
    {
        if (tbl_ == nullptr) return;
        for (const auto& [k, v] : *tbl_) {
            if (!seen_.contains(std::string(k.str()))) {
                throw ConfigError("unknown config key '" + where(k.str()) + "'");
            }
        }
    }

private:
    const toml::node* find(std::string_view key)
    {
        seen_.insert(std::string(key));
        return tbl_ == nullptr ? nullptr : tbl_->get(key);
    }

    std::string where(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    const toml::table* tbl_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_pid(Section s, controller::PidGains& g)
{
    s.get("kp", g.kp);
    s.get("ki", g.ki);
    s.get("kd", g.kd);
    s.get("ff", g.ff);
    s.get("i_limit", g.i_limit);
    s.get("out_min", g.out_min);
    s.get("out_max", g.out_max);
    s.finish();
}

inline toml::table pid_table(const controller::PidGains& g)
{
    return toml::table{{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}, {"ff", g.ff},
                       {"i_limit", g.i_limit}, {"out_min", g.out_min}, {"out_max", g.out_max}};
}

inline std::string_view to_string(estimator::TransitionMode m)
{
    return m == estimator::TransitionMode::velocity_column ? "velocity_column" : "full_jacobian";
}

inline std::string_view to_string(estimator::UpdateMode m)
{
    return m == estimator::UpdateMode::block ? "block" : "sequential";
}

} // namespace detail

/// Parses a TOML document on top of the defaults. Omitted keys keep their
/// defaults; the wheel-speed and steering feedforwards, when omitted, follow
/// the loaded task and plant. Unknown keys are errors.
inline ExperimentConfig parse_config(std::string_view text)
{
    toml::table doc;
    try {
        doc = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config parse error at line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }

    ExperimentConfig c = default_config();
    detail::Section root(&doc, "");
    root.get("seed", c.seed);
    root.get("duration", c.duration);
    std::string source(to_string(c.source));
    root.get("source", source);
    c.source = parse_source(source);
    root.get("control_rate", c.control_rate);
    root.get("divergence_limit", c.divergence_limit);
    root.get("metrics_t_start", c.metrics_t_start);

    {
        auto s = root.sub("task");
        s.get("x0", c.task.x0);
        s.get("y0", c.task.y0);
        s.get("r0", c.task.r0);
        s.get("beta_ref", c.task.beta_ref);
        s.get("gamma", c.task.gamma);
        s.get("tau_nominal", c.task.tau_nominal);
        s.finish();
    }
    {
        auto s = root.sub("vehicle");
        s.get("wheel_radius", c.wheel_radius);
        s.finish();
    }
    {
        auto s = root.sub("plant");
        auto& p = c.plant;
        s.get("tau_beta", p.tau_beta);
        s.get("tau_v", p.tau_v);
        s.get("g_delta", p.g_delta);
        s.get("g_omega", p.g_omega);
        s.get("grip", p.grip);
        s.get("v_knee", p.v_knee);
        s.get("dt", p.dt);
        s.get("beta_noise", p.process_noise.beta_std);
        s.get("v_noise", p.process_noise.v_std);
        s.get("theta_noise", p.process_noise.theta_std);
        s.finish();
    }
    {
        auto s = root.sub("control");
        const bool steer_ff = s.has("sideslip") && s.sub("sideslip").has("ff");
        const bool wheel_ff = s.has("circle") && s.sub("circle").has("ff");
        if (!steer_ff) c.gains.sideslip.ff = c.task.beta_ref / c.plant.g_delta;
        if (!wheel_ff) c.gains.circle.ff = controller::wheel_speed_feedforward(c.task, c.wheel_radius);
        detail::read_pid(s.sub("sideslip"), c.gains.sideslip);
        detail::read_pid(s.sub("circle"), c.gains.circle);
        s.finish();
    }
    {
        auto s = root.sub("estimator");
        auto& e = c.estimator;
        double qx = e.noise.q_rate(0, 0), qy = e.noise.q_rate(1, 1), qt = e.noise.q_rate(2, 2), qv = e.noise.q_rate(3, 3);
        s.get("q_x", qx);
        s.get("q_y", qy);
        s.get("q_theta", qt);
        s.get("q_v", qv);
        e.noise.q_rate = estimator::Vec4(qx, qy, qt, qv).asDiagonal();
        s.get("r_zed", e.noise.r_zed_pos);
        s.get("r_d435i", e.noise.r_d435i_pos);
        s.get("r_imu", e.noise.r_imu_theta);
        s.get("b_delta", e.noise.b_delta);
        s.get("b_omega", e.noise.b_omega);
        std::string tm(detail::to_string(e.transition));
        s.get("transition", tm);
        if (tm == "velocity_column") e.transition = estimator::TransitionMode::velocity_column;
        else if (tm == "full_jacobian") e.transition = estimator::TransitionMode::full_jacobian;
        else throw ConfigError("estimator.transition must be 'velocity_column' or 'full_jacobian'");
        std::string um(detail::to_string(e.update));
        s.get("update", um);
        if (um == "block") e.update = estimator::UpdateMode::block;
        else if (um == "sequential") e.update = estimator::UpdateMode::sequential;
        else throw ConfigError("estimator.update must be 'block' or 'sequential'");
        s.get("init_var_x", e.initial_var(0));
        s.get("init_var_y", e.initial_var(1));
        s.get("init_var_theta", e.initial_var(2));
        s.get("init_var_v", e.initial_var(3));
        s.get("slip_threshold", e.slip_threshold);
        s.get("fit_window", e.fit_window);
        s.get("fit_period", e.fit_period);
        s.get("fit_lambda", e.fit_lambda);
        s.get("fit_refit", e.fit_refit);
        s.get("range_var_mono", e.fusion.var_mono);
        s.get("range_var_depth", e.fusion.var_depth);
        s.finish();
    }
    {
        auto s = root.sub("sensors");
        s.get("zed_rate", c.schedule.zed_rate);
        s.get("d435i_rate", c.schedule.d435i_rate);
        s.get("imu_rate", c.schedule.imu_rate);
        s.get("jitter_std", c.schedule.jitter_std);
        {
            auto z = s.sub("zed");
            z.get("psi0", c.zed.psi0);
            z.get("mount_x", c.zed.mount.px);
            z.get("mount_y", c.zed.mount.py);
            z.get("white_std", c.zed.white_std);
            z.get("bias_step_std", c.zed.bias_step_std);
            z.finish();
        }
        {
            auto a = s.sub("anchor");
            if (!a.has("x")) c.anchor.xA = c.task.x0;
            if (!a.has("y")) c.anchor.yA = c.task.y0;
            a.get("x", c.anchor.xA);
            a.get("y", c.anchor.yA);
            a.get("k1", c.anchor.k1);
            a.get("k2", c.anchor.k2);
            a.get("k_aspect", c.anchor.k_aspect);
            a.get("fov_half", c.anchor.fov_half);
            a.get("mount_x", c.anchor.mount.px);
            a.get("mount_y", c.anchor.mount.py);
            a.get("x_img_std", c.anchor_noise.x_img_std);
            a.get("w_img_std", c.anchor_noise.w_img_std);
            a.get("depth_std", c.anchor_noise.depth_std);
            a.finish();
        }
        {
            auto i = s.sub("imu");
            i.get("heading_std", c.imu.heading_std);
            i.finish();
        }
        s.finish();
    }
    root.finish();

    if (const char* env = std::getenv("DRIFTLAB_SEED"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') {
            throw ConfigError("DRIFTLAB_SEED must be a non-negative integer");
        }
        c.seed = v;
    }
    c.validate();
    return c;
}

inline std::string dump_config(const ExperimentConfig& c)
{
    const auto& e = c.estimator;
    toml::table est{
        {"q_x", e.noise.q_rate(0, 0)}, {"q_y", e.noise.q_rate(1, 1)},
        {"q_theta", e.noise.q_rate(2, 2)}, {"q_v", e.noise.q_rate(3, 3)},
        {"r_zed", e.noise.r_zed_pos}, {"r_d435i", e.noise.r_d435i_pos}, {"r_imu", e.noise.r_imu_theta},
        {"b_delta", e.noise.b_delta}, {"b_omega", e.noise.b_omega},
        {"transition", std::string(detail::to_string(e.transition))},
        {"update", std::string(detail::to_string(e.update))},
        {"init_var_x", e.initial_var(0)}, {"init_var_y", e.initial_var(1)},
        {"init_var_theta", e.initial_var(2)}, {"init_var_v", e.initial_var(3)},
        {"slip_threshold", e.slip_threshold},
        {"fit_window", static_cast<std::int64_t>(e.fit_window)},
        {"fit_period", e.fit_period},
        {"fit_refit", e.fit_refit},
        {"range_var_mono", e.fusion.var_mono}, {"range_var_depth", e.fusion.var_depth},
    };
    if (e.fit_lambda) {
        est.insert("fit_lambda", *e.fit_lambda);
    }
    toml::table doc{
        {"seed", static_cast<std::int64_t>(c.seed)},
        {"duration", c.duration},
        {"source", std::string(to_string(c.source))},
        {"control_rate", c.control_rate},
        {"divergence_limit", c.divergence_limit},
        {"metrics_t_start", c.metrics_t_start},
        {"task", toml::table{{"x0", c.task.x0}, {"y0", c.task.y0}, {"r0", c.task.r0},
                             {"beta_ref", c.task.beta_ref}, {"gamma", c.task.gamma},
                             {"tau_nominal", c.task.tau_nominal}}},
        {"vehicle", toml::table{{"wheel_radius", c.wheel_radius}}},
        {"control", toml::table{{"sideslip", detail::pid_table(c.gains.sideslip)},
                                {"circle", detail::pid_table(c.gains.circle)}}},
        {"estimator", est},
        {"sensors",
         toml::table{
             {"zed_rate", c.schedule.zed_rate}, {"d435i_rate", c.schedule.d435i_rate},
             {"imu_rate", c.schedule.imu_rate}, {"jitter_std", c.schedule.jitter_std},
             {"zed", toml::table{{"psi0", c.zed.psi0}, {"mount_x", c.zed.mount.px}, {"mount_y", c.zed.mount.py},
                                 {"white_std", c.zed.white_std}, {"bias_step_std", c.zed.bias_step_std}}},
             {"anchor", toml::table{{"x", c.anchor.xA}, {"y", c.anchor.yA}, {"k1", c.anchor.k1},
                                    {"k2", c.anchor.k2}, {"k_aspect", c.anchor.k_aspect},
                                    {"fov_half", c.anchor.fov_half}, {"mount_x", c.anchor.mount.px},
                                    {"mount_y", c.anchor.mount.py}, {"x_img_std", c.anchor_noise.x_img_std},
                                    {"w_img_std", c.anchor_noise.w_img_std},
                                    {"depth_std", c.anchor_noise.depth_std}}},
             {"imu", toml::table{{"heading_std", c.imu.heading_std}}},
         }},
        {"plant", toml::table{{"tau_beta", c.plant.tau_beta}, {"tau_v", c.plant.tau_v},
                              {"g_delta", c.plant.g_delta}, {"g_omega", c.plant.g_omega},
                              {"grip", c.plant.grip}, {"v_knee", c.plant.v_knee}, {"dt", c.plant.dt},
                              {"beta_noise", c.plant.process_noise.beta_std},
                              {"v_noise", c.plant.process_noise.v_std},
                              {"theta_noise", c.plant.process_noise.theta_std}}},
    };
    std::ostringstream out;
    out << doc << '\n';
    return out.str();
}

} // namespace driftlab::config
