// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <driftlab/driftlab.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

using namespace driftlab;
using estimator::Mat4;
using estimator::Measurement;
using estimator::Sensor;
using estimator::StateEstimate;
using estimator::Vec4;

namespace {

constexpr double pi = std::numbers::pi;

struct Verdict {
    bool pass = true;
    std::string detail;
};

void note(Verdict& v, bool ok, const char* fmt, auto... args)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, args...);
    if (!v.detail.empty()) v.detail += "; ";
    v.detail += buf;
    v.pass = v.pass && ok;
}

StateEstimate state(const Vec4& x, const Mat4& p, double t = 0.0)
{
    StateEstimate e;
    e.xhat = x;
    e.P = p;
    e.t = t;
    return e;
}

Measurement measurement(double t, Sensor s, double a, double b, double var)
{
    Measurement m;
    m.t = t;
    m.sensor = s;
    m.value << a, b;
    m.noise_var.setConstant(var);
    return m;
}

Mat4 random_spd(std::mt19937_64& rng)
{
    std::normal_distribution<double> g;
    Mat4 a;
    for (int i = 0; i < 16; ++i) a(i) = g(rng);
    return a * a.transpose() + 0.1 * Mat4::Identity();
}

Verdict closed_loop_reproduction()
{
    Verdict v;
    const auto cfg = config::default_config();
    const auto t0 = std::chrono::steady_clock::now();
    const auto log = harness::run_closed_loop(cfg);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double laps = metrics::lap_count(log.truth, {});
    const auto e = metrics::tracking_errors(log.truth, cfg.task, {cfg.duration - 40.0, cfg.duration});
    note(v, cfg.duration == 50.0 && cfg.task.r0 == 1.0 && cfg.task.beta_ref == -1.4, "r0=%g beta_ref=%g T=%g s",
         cfg.task.r0, cfg.task.beta_ref, cfg.duration);
    note(v, laps >= 11.0, "laps=%.2f", laps);
    note(v, e.radius.mean <= 0.2, "mean|r-r0|=%.4f m", e.radius.mean);
    note(v, e.sideslip.mean <= 0.05, "mean|b-b_ref|=%.4f rad", e.sideslip.mean);
    note(v, wall <= 10.0, "wall=%.2f s", wall);
    return v;
}

Verdict estimator_ordering()
{
    Verdict v;
    double sum[3] = {0, 0, 0};
    int per_seed_ok = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto cfg = config::default_config();
        cfg.seed = seed;
        const auto log = harness::run_closed_loop(cfg);
        double m[3];
        for (auto c : harness::all_channels) {
            const auto i = harness::index_of(c);
            m[i] = metrics::estimation_errors(log.truth, log.estimates[i], cfg.task, {cfg.metrics_t_start, cfg.duration})
                       .radius.mean;
            sum[i] += m[i] / 10.0;
        }
        const auto z = harness::index_of(harness::Channel::zed);
        const auto d = harness::index_of(harness::Channel::d435i);
        const auto k = harness::index_of(harness::Channel::ekf);
        if (m[k] < m[z] && m[k] <= 1.5 * m[d]) ++per_seed_ok;
    }
    const double zed = sum[harness::index_of(harness::Channel::zed)];
    const double d435i = sum[harness::index_of(harness::Channel::d435i)];
    const double ekf = sum[harness::index_of(harness::Channel::ekf)];
    note(v, ekf < zed, "ekf=%.4f m < zed=%.4f m", ekf, zed);
    note(v, ekf <= 1.5 * d435i, "ekf/d435i=%.2f <= 1.5", ekf / d435i);
    note(v, true, "seeds meeting both=%d/10", per_seed_ok);
    return v;
}

Verdict update_rate()
{
    Verdict v;
    const auto cfg = config::default_config();
    const auto log = harness::run_closed_loop(cfg);
    long positions = 0;
    bool ordered = true;
    std::array<long, 3> expected{};
    for (std::size_t i = 0; i < log.measurements.size(); ++i) {
        const auto& m = log.measurements[i];
        if (m.sensor != Sensor::imu_theta) ++positions;
        if (i > 0 && !(log.measurements[i - 1].t < m.t)) ordered = false;
        for (auto c : harness::all_channels) {
            if (harness::channel_accepts(c, m.sensor)) ++expected[harness::index_of(c)];
        }
    }
    const double rate = static_cast<double>(positions) / cfg.duration;
    note(v, std::abs(rate - 160.0) <= 0.05 * 160.0, "position fixes=%.1f/s", rate);
    note(v, ordered, "log strictly time-ordered=%s", ordered ? "yes" : "no");
    for (auto c : harness::all_channels) {
        const auto i = harness::index_of(c);
        note(v, log.consumed[i] == expected[i], "%s consumed %ld/%ld", std::string(harness::to_string(c)).c_str(),
             log.consumed[i], expected[i]);
    }
    return v;
}

Verdict circle_fit_robustness()
{
    Verdict v;
    using circlefit::Point;
    const double R = 1.5;
    int passed = 0;
    double worst_kasa = 1e9;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> g(0.0, 0.02);
        const double cx = 4.0 * u(rng) - 2.0;
        const double cy = 4.0 * u(rng) - 2.0;
        const double a0 = 2.0 * pi * u(rng);
        std::vector<double> ang(40);
        for (auto& a : ang) a = a0 + (pi / 2.0) * u(rng);
        std::vector<int> idx(40);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<bool> outlier(40, false);
        for (int k = 0; k < 4; ++k) outlier[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = true;
        std::vector<Point<double>> all;
        std::vector<Point<double>> clean;
        for (std::size_t i = 0; i < 40; ++i) {
            const double rr = R + (outlier[i] ? 0.5 : 0.0);
            const Point<double> p{cx + rr * std::cos(ang[i]) + g(rng), cy + rr * std::sin(ang[i]) + g(rng)};
            all.push_back(p);
            if (!outlier[i]) clean.push_back(p);
        }
        const auto oracle = circlefit::kasa_fit(clean);
        const auto plain = circlefit::kasa_fit(all);
        const auto res = circlefit::resilient_fit(all);
        const double kasa_err = std::abs(plain.r - R);
        worst_kasa = std::min(worst_kasa, kasa_err);
        const bool ok = std::hypot(res.x0 - oracle.x0, res.y0 - oracle.y0) <= 0.05
                        && std::abs(res.r - oracle.r) <= 0.05 && kasa_err > 0.2;
        if (ok) ++passed;
    }
    note(v, passed >= 95, "pass rate=%d/100", passed);
    note(v, true, "smallest plain KASA radius error=%.3f m", worst_kasa);
    return v;
}

Verdict circumnavigation_equilibrium()
{
    Verdict v;
    controller::CircleTask task = config::default_config().task;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ud(0.2 * task.r0, 3.0 * task.r0);
    std::uniform_real_distribution<double> up(-pi, pi);
    const double h = 1e-3;
    const double speed = 1.4;
    int converged = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        double d = ud(rng);
        double p = up(rng);
        for (int k = 0; k < 60000; ++k) {
            const auto k1 = controller::circumnav_derivatives(d, p, speed, task);
            const auto k2 = controller::circumnav_derivatives(d + h / 2 * k1.ddot, p + h / 2 * k1.phidot, speed, task);
            const auto k3 = controller::circumnav_derivatives(d + h / 2 * k2.ddot, p + h / 2 * k2.phidot, speed, task);
            const auto k4 = controller::circumnav_derivatives(d + h * k3.ddot, p + h * k3.phidot, speed, task);
            d += h / 6 * (k1.ddot + 2 * k2.ddot + 2 * k3.ddot + k4.ddot);
            p += h / 6 * (k1.phidot + 2 * k2.phidot + 2 * k3.phidot + k4.phidot);
        }
        const double err = std::max(std::abs(d - task.r0), std::abs(frames::wrap_angle(p - pi / 2.0)));
        worst = std::max(worst, err);
        if (err <= 1e-3) ++converged;
    }
    note(v, converged == 20, "converged=%d/20 within 60 s", converged);
    note(v, worst <= 1e-3, "worst |(d,phi) - (r0,pi/2)|=%.2e", worst);
    return v;
}

Verdict ekf_correctness()
{
    Verdict v;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);

    double gap = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const auto e = state(Vec4(g(rng), g(rng), g(rng), 1.0 + 0.1 * g(rng)), random_spd(rng));
        auto m = measurement(0.0, i % 2 ? Sensor::zed_pos : Sensor::d435i_pos, g(rng), g(rng), 0.0);
        m.noise_var << std::exp(g(rng)), std::exp(g(rng));
        const auto a = estimator::update(e, m, estimator::UpdateMode::block);
        const auto b = estimator::update(e, m, estimator::UpdateMode::sequential);
        gap = std::max({gap, (a.xhat - b.xhat).cwiseAbs().maxCoeff(), (a.P - b.P).cwiseAbs().maxCoeff()});
    }
    note(v, gap <= 1e-10, "block vs sequential=%.1e", gap);

    estimator::AsyncEkf f(state(Vec4(1, 0, 1.6, 1.4), Mat4::Identity()), estimator::NoiseModel{},
                          estimator::TransitionMode::full_jacobian);
    double t = 0.0;
    double asym = 0.0;
    double min_eig = 1e9;
    for (int k = 0; k < 100000; ++k) {
        t += 0.02 * u(rng);
        const double var = std::pow(10.0, -6.0 + 6.0 * u(rng));
        const double pick = u(rng);
        const auto m = pick < 0.4   ? measurement(t, Sensor::zed_pos, g(rng), g(rng), var)
                       : pick < 0.7 ? measurement(t, Sensor::d435i_pos, g(rng), g(rng), var)
                                    : measurement(t, Sensor::imu_theta, 3.0 * g(rng), 0.0, var);
        const auto& e = f.process(m, {}, 0.5 + u(rng));
        asym = std::max(asym, (e.P - e.P.transpose()).cwiseAbs().maxCoeff());
        min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Mat4>(e.P).eigenvalues().minCoeff());
    }
    note(v, asym <= 1e-10 && min_eig >= -1e-10, "1e5 steps: asym=%.1e min eig=%.1e", asym, min_eig);

    estimator::NoiseModel exact;
    exact.q_rate.setZero();
    exact.r_zed_pos = exact.r_d435i_pos = exact.r_imu_theta = 0.0;
    const double r = 1.0;
    Vec4 truth(1.0, 0.0, pi / 2.0, 1.4);
    estimator::AsyncEkf nf(state(truth, 1e-2 * Mat4::Identity()), exact);
    std::uniform_real_distribution<double> ug(0.002, 0.012);
    t = 0.0;
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double dt = ug(rng);
        t += dt;
        truth = estimator::transition(truth, dt, r) * truth;
        truth(estimator::itheta) = frames::wrap_angle(truth(estimator::itheta));
        const auto m = k % 3 == 2 ? measurement(t, Sensor::imu_theta, truth(estimator::itheta), 0.0, 0.0)
                                  : measurement(t, k % 3 ? Sensor::d435i_pos : Sensor::zed_pos, truth(estimator::ix),
                                                truth(estimator::iy), 0.0);
        Vec4 d = nf.process(m, {}, r).xhat - truth;
        d(estimator::itheta) = frames::wrap_angle(d(estimator::itheta));
        worst = std::max(worst, d.norm());
    }
    note(v, worst < 1e-8, "noiseless 1000 steps=%.1e", worst);

    const auto e = state(Vec4(0.1, 0.2, 0.3, 1.0), random_spd(rng));
    estimator::ObservationRows o;
    o.C = Eigen::MatrixXd::Zero(2, 4);
    o.y = Eigen::Vector2d(5.0, -5.0);
    o.r = Eigen::Vector2d(0.1, 0.1);
    o.angular = {false, false};
    const auto out = estimator::update_rows(e, o);
    note(v, out.xhat == e.xhat && out.P == e.P, "masked C no-op=%s", out.xhat == e.xhat && out.P == e.P ? "yes" : "no");
    return v;
}

Verdict anchor_round_trip()
{
    Verdict v;
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    std::uniform_real_distribution<double> yawd(-pi, pi);
    sensors::AnchorModel a = config::default_config().anchor;
    int checked = 0;
    double worst = 0.0;
    while (checked < 100) {
        const sensors::Vec2 c(u(rng), u(rng));
        const double yaw = yawd(rng);
        const auto o = sensors::anchor_project(c, yaw, a);
        if (!o) continue;
        worst = std::max(worst, (sensors::anchor_localize(*o, a, yaw) - c).norm());
        ++checked;
    }
    note(v, worst <= 1e-9, "100 in-view poses, worst=%.1e m", worst);
    return v;
}

Verdict slip_gate()
{
    Verdict v;
    const double h = config::default_config().estimator.slip_threshold;
    estimator::SideslipGate gate(h);
    const double r = 1.0;
    const double speed = 1.4;
    const double dt = 0.01;
    const double beta_ref = -1.4;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> jitter(-0.9, 0.9);
    double th = 0.5;
    double t = 0.0;
    bool normal_ok = true;
    bool spike_ok = true;
    for (int k = 0; k < 200; ++k) {
        if (k == 100) {
            const double predicted = frames::wrap_angle(th + speed * dt / r);
            const double psi = predicted - beta_ref;
            t += dt;
            const auto res = gate.step(state(Vec4(0, 0, frames::wrap_angle(predicted + 1.0), speed), Mat4::Identity(), t),
                                       psi, r);
            spike_ok = res.replaced && std::abs(frames::wrap_angle(res.beta - beta_ref)) < 1e-12;
            th = predicted;
            continue;
        }
        // any attitude step below h * dt passes through untouched
        const double step = jitter(rng) * h * dt;
        th = frames::wrap_angle(th + step);
        t += dt;
        const double psi = frames::wrap_angle(th + 0.3 * jitter(rng));
        const auto res = gate.step(state(Vec4(0, 0, th, speed), Mat4::Identity(), t), psi, r);
        if (k > 0 && (res.replaced || res.beta != frames::wrap_angle(th - psi))) normal_ok = false;
    }
    note(v, spike_ok, "1 rad spike replaced by prediction=%s", spike_ok ? "yes" : "no");
    note(v, normal_ok, "sub-threshold steps unchanged=%s", normal_ok ? "yes" : "no");
    return v;
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"closed-loop drift at r0=1 m, beta_ref=-1.4 rad", closed_loop_reproduction},
        {"estimator accuracy ordering over 10 seeds", estimator_ordering},
        {"160 position fixes per second, all consumed in order", update_rate},
        {"resilient circle fit under 4 outliers", circle_fit_robustness},
        {"circumnavigation equilibrium from 20 initial conditions", circumnavigation_equilibrium},
        {"EKF correctness suite", ekf_correctness},
        {"anchor project/localize round trip", anchor_round_trip},
        {"resilient slip-angle gate", slip_gate},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, run] : criteria) {
        ++n;
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %d %s: %s\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str());
        if (!v.pass) ++failed;
    }
    std::fflush(stdout);
    return failed == 0 ? 0 : 1;
}
