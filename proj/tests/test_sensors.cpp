#include <driftlab/sensors.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace driftlab;
using namespace driftlab::sensors;

namespace {

AnchorModel bare_anchor(double xa, double ya)
{
    AnchorModel a;
    a.xA = xa;
    a.yA = ya;
    a.mount = {0.0, 0.0};
    return a;
}

double sample_std(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace

TEST(AnchorProject, DeadAhead)
{
    auto a = bare_anchor(0.0, 2.0);
    a.k1 = 4.0;
    const auto o = anchor_project(Vec2(0, 0), 0.0, a);
    ASSERT_TRUE(o.has_value());
    EXPECT_NEAR(o->x_img, 0.0, 1e-15);
    EXPECT_NEAR(o->s_img, 4.0, 1e-12);
    EXPECT_NEAR(o->d_depth, 2.0, 1e-15);
    EXPECT_NEAR(o->w_img * o->w_img * a.k_aspect, o->s_img, 1e-12);
}

TEST(AnchorProject, BearingToPixels)
{
    auto a = bare_anchor(2.0 * std::sin(0.1), 2.0 * std::cos(0.1));
    a.k2 = 0.01;
    const auto o = anchor_project(Vec2(0, 0), 0.0, a);
    ASSERT_TRUE(o.has_value());
    EXPECT_NEAR(o->x_img, 10.0, 1e-12);
}

TEST(AnchorProject, OutOfView)
{
    auto a = bare_anchor(2.0 * std::sin(1.0), 2.0 * std::cos(1.0));
    a.fov_half = 0.75;
    EXPECT_FALSE(anchor_project(Vec2(0, 0), 0.0, a).has_value());
    EXPECT_FALSE(anchor_project(Vec2(0, 0), 0.0, bare_anchor(0.0, -2.0)).has_value());
    EXPECT_FALSE(anchor_project(Vec2(0, 0), 0.0, bare_anchor(0.0, 0.0)).has_value());
}

TEST(AnchorProject, VisibilitySymmetricInBearing)
{
    for (double b = 0.0; b < 1.5; b += 0.01) {
        const auto left = bare_anchor(-2.0 * std::sin(b), 2.0 * std::cos(b));
        const auto right = bare_anchor(2.0 * std::sin(b), 2.0 * std::cos(b));
        EXPECT_EQ(anchor_visible(Vec2(0, 0), 0.0, left), anchor_visible(Vec2(0, 0), 0.0, right)) << b;
    }
}

TEST(AnchorLocalize, DeadAheadPlacesCarBehindAnchor)
{
    const auto a = bare_anchor(0.0, 0.0);
    ImageObservation o;
    o.x_img = 0.0;
    o.w_img = a.k1 / std::sqrt(a.k_aspect) / 2.0;
    o.s_img = a.k_aspect * o.w_img * o.w_img;
    o.d_depth = 2.0;
    const auto p = anchor_localize(o, a, 0.0);
    EXPECT_NEAR(p(0), 0.0, 1e-12);
    EXPECT_NEAR(p(1), -2.0, 1e-12);
}

TEST(AnchorLocalize, RoundTripOverRandomPoses)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> yawd(-std::numbers::pi, std::numbers::pi);
    AnchorModel a;
    a.xA = 0.4;
    a.yA = -0.2;
    int checked = 0;
    while (checked < 100) {
        const Vec2 c(u(rng), u(rng));
        const double yaw = yawd(rng);
        const auto o = anchor_project(c, yaw, a);
        if (!o) continue;
        const auto back = anchor_localize(*o, a, yaw);
        EXPECT_LT((back - c).norm(), 1e-9);
        ++checked;
    }
}

TEST(AnchorLocalize, RejectsZeroWidth)
{
    EXPECT_THROW(anchor_localize(ImageObservation{}, AnchorModel{}, 0.0), DomainError);
}

TEST(FuseRanges, InverseVarianceWeighting)
{
    EXPECT_NEAR(fuse_ranges(2.0, 0.04, 2.2, 0.01), 2.16, 1e-12);
    EXPECT_DOUBLE_EQ(fuse_ranges(2.0, 0.0, 2.2, 0.01), 2.0);
    EXPECT_DOUBLE_EQ(fuse_ranges(2.0, 0.04, 2.2, 0.0), 2.2);
}

TEST(Zed, NoiseFreeReportsTruthInZedFrame)
{
    ZedConfig cfg;
    cfg.white_std = 0.0;
    cfg.bias_step_std = 0.0;
    ZedSensor z(cfg);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 100; ++i) {
        const Vec2 c(u(rng), u(rng));
        const double yaw = u(rng);
        const auto m = z.measure(0.01 * i, c, yaw, rng);
        EXPECT_EQ(m.sensor, Sensor::zed_pos);
        const auto g = frames::zed_to_ground(Vec2(m.value.transpose()), cfg.psi0, yaw, cfg.mount);
        EXPECT_LT((g - c).norm(), 1e-12);
    }
}

TEST(Zed, BiasRandomWalkGrowsWithSqrtTicks)
{
    ZedConfig cfg;
    cfg.white_std = 0.0;
    cfg.bias_step_std = 0.001;
    std::mt19937_64 rng(3);
    std::vector<double> finals;
    for (int run = 0; run < 300; ++run) {
        ZedSensor z(cfg);
        for (int k = 0; k < 10000; ++k) z.measure(0.0, Vec2(0, 0), 0.0, rng);
        finals.push_back(z.bias()(0));
        finals.push_back(z.bias()(1));
    }
    EXPECT_NEAR(sample_std(finals), 0.1, 0.02);
}

TEST(Zed, DeterministicPerSeed)
{
    ZedConfig cfg;
    ZedSensor a(cfg), b(cfg);
    std::mt19937_64 ra(4), rb(4);
    for (int k = 0; k < 1000; ++k) {
        const auto ma = a.measure(0.01 * k, Vec2(1, 2), 0.3, ra);
        const auto mb = b.measure(0.01 * k, Vec2(1, 2), 0.3, rb);
        ASSERT_EQ(ma.value, mb.value);
    }
}

TEST(Imu, NoiseFreeAttitude)
{
    std::mt19937_64 rng(5);
    const auto m = imu_measure(1.0, 0.4, frames::PlanarVelocity<double>{-1.0, 1.0}, ImuConfig{0.0}, rng);
    ASSERT_TRUE(m.has_value());
    EXPECT_NEAR(m->value(0), 3.0 * std::numbers::pi / 4.0, 1e-15);
    EXPECT_NEAR(m->value(1), 0.4, 1e-15);
    EXPECT_EQ(m->sensor, Sensor::imu_theta);
}

TEST(Imu, HeadingNoiseSetsAttitudeSpread)
{
    std::mt19937_64 rng(6);
    std::vector<double> err;
    for (int k = 0; k < 10000; ++k) {
        const auto m = imu_measure(0.01 * k, 1.0, frames::PlanarVelocity<double>{0.0, 1.5}, ImuConfig{0.01}, rng);
        err.push_back(frames::wrap_angle(m->value(0) - std::numbers::pi / 2.0));
    }
    EXPECT_NEAR(sample_std(err), 0.01, 0.0005);
}

TEST(Imu, StationaryCarIsSilent)
{
    std::mt19937_64 rng(7);
    EXPECT_FALSE(imu_measure(0.0, 0.0, frames::PlanarVelocity<double>{0.0, 0.0}, ImuConfig{}, rng).has_value());
}

TEST(Schedule, CameraStreamsGive160PerSecond)
{
    SensorSchedule s;
    s.imu_rate = 0.0;
    const auto e = build_schedule(s, 1.0);
    EXPECT_NEAR(static_cast<double>(e.size()), 160.0, 2.0);
    std::size_t zed = 0;
    for (const auto& x : e) zed += x.sensor == Sensor::zed_pos;
    EXPECT_NEAR(static_cast<double>(zed), 100.0, 1.0);
}

TEST(Schedule, StrictlyIncreasingAndUnique)
{
    for (std::uint64_t seed = 1; seed < 20; ++seed) {
        SensorSchedule s;
        s.seed = seed;
        s.jitter_std = 0.004; // large enough to force collisions and reorderings
        const auto e = build_schedule(s, 5.0);
        for (std::size_t i = 1; i < e.size(); ++i) ASSERT_LT(e[i - 1].t_ns, e[i].t_ns);
        for (const auto& x : e) ASSERT_GT(x.t_ns, 0);
    }
}

TEST(Schedule, ExactCollisionsAreSeparated)
{
    SensorSchedule s;
    s.jitter_std = 0.0;
    s.zed_rate = 100.0;
    s.d435i_rate = 50.0;
    s.imu_rate = 100.0;
    const auto e = build_schedule(s, 1.0);
    std::set<std::int64_t> stamps;
    for (const auto& x : e) stamps.insert(x.t_ns);
    EXPECT_EQ(stamps.size(), e.size());
    EXPECT_EQ(e.size(), 250u);
}

TEST(Schedule, ReproduciblePerSeed)
{
    SensorSchedule s;
    s.seed = 42;
    const auto a = build_schedule(s, 3.0);
    const auto b = build_schedule(s, 3.0);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].t_ns, b[i].t_ns);
        EXPECT_EQ(a[i].sensor, b[i].sensor);
    }
    s.seed = 43;
    const auto c = build_schedule(s, 3.0);
    bool differs = false;
    for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i) differs |= a[i].t_ns != c[i].t_ns;
    EXPECT_TRUE(differs);
}

TEST(Schedule, Validation)
{
    SensorSchedule s;
    s.zed_rate = 0.0;
    EXPECT_THROW(build_schedule(s, 1.0), ConfigError);
    EXPECT_THROW(build_schedule(SensorSchedule{}, 0.0), ConfigError);
    AnchorModel a;
    a.fov_half = 2.0;
    EXPECT_THROW(a.validate(), ConfigError);
}
