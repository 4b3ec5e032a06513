#include <driftlab/frames.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace driftlab;
using frames::Vec2;
constexpr double pi = std::numbers::pi;

TEST(WrapAngle, FixedPoints)
{
    EXPECT_EQ(frames::wrap_angle(0.0), 0.0);
    EXPECT_NEAR(frames::wrap_angle(3.0 * pi / 2.0), -pi / 2.0, 1e-15);
    EXPECT_EQ(frames::wrap_angle(-pi), pi);
    EXPECT_EQ(frames::wrap_angle(pi), pi);
}

TEST(WrapAngle, RejectsNonFinite)
{
    EXPECT_THROW(frames::wrap_angle(std::nan("")), DomainError);
    EXPECT_THROW(frames::wrap_angle(INFINITY), DomainError);
}

TEST(WrapAngle, IdempotentAndInRange)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1e4, 1e4);
    for (int i = 0; i < 10000; ++i) {
        const double a = u(rng);
        const double w = frames::wrap_angle(a);
        EXPECT_GT(w, -pi);
        EXPECT_LE(w, pi);
        EXPECT_EQ(frames::wrap_angle(w), w);
        EXPECT_NEAR(std::cos(w), std::cos(a), 1e-9);
        EXPECT_NEAR(std::sin(w), std::sin(a), 1e-9);
    }
}

TEST(ZedToGround, Examples)
{
    const frames::MountOffset<double> none{0.0, 0.0};
    auto g = frames::zed_to_ground(Vec2<double>(1, 0), 0.0, 0.0, none);
    EXPECT_NEAR(g(0), 1.0, 1e-15);
    EXPECT_NEAR(g(1), 0.0, 1e-15);

    g = frames::zed_to_ground(Vec2<double>(1, 0), pi / 2.0, 0.0, none);
    EXPECT_NEAR(g(0), 0.0, 1e-15);
    EXPECT_NEAR(g(1), 1.0, 1e-15);

    g = frames::zed_to_ground(Vec2<double>(1, 0), 0.0, pi, frames::MountOffset<double>{0.1, 0.0});
    EXPECT_NEAR(g(0), 0.9, 1e-15);
    EXPECT_NEAR(g(1), 0.0, 1e-15);
}

TEST(ZedToGround, IdentityWithoutRotationOrOffset)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 200; ++i) {
        const Vec2<double> p(u(rng), u(rng));
        const auto g = frames::zed_to_ground(p, 0.0, u(rng), frames::MountOffset<double>{0.0, 0.0});
        EXPECT_EQ(g, p);
    }
}

TEST(ZedToGround, InverseRoundTrip)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 200; ++i) {
        const Vec2<double> p(u(rng), u(rng));
        const double psi0 = u(rng);
        const double psi = u(rng);
        const frames::MountOffset<double> off{u(rng) * 0.1, u(rng) * 0.1};
        const auto back = frames::zed_to_ground(frames::ground_to_zed(p, psi0, psi, off), psi0, psi, off);
        EXPECT_NEAR((back - p).norm(), 0.0, 1e-12);
    }
}

TEST(ZedToGround, RejectsNonFinite)
{
    EXPECT_THROW(frames::zed_to_ground(Vec2<double>(NAN, 0), 0.0, 0.0, frames::MountOffset<double>{}),
                 DomainError);
}

TEST(FrameYaw, BodyForwardAxisPointsAlongHeading)
{
    for (double psi : {-3.0, -1.0, 0.0, 0.5, 2.5}) {
        const Vec2<double> fwd = Vec2<double>(0, 1) * frames::rotation(frames::frame_yaw_of_heading(psi));
        EXPECT_NEAR(fwd(0), std::cos(psi), 1e-15);
        EXPECT_NEAR(fwd(1), std::sin(psi), 1e-15);
    }
}

TEST(Sideslip, Examples)
{
    EXPECT_EQ(frames::sideslip_of(0.0, 0.0), 0.0);
    EXPECT_NEAR(frames::sideslip_of(0.1, 1.5), -1.4, 1e-15);
    EXPECT_NEAR(frames::sideslip_of(-3.0, 3.0), -6.0 + 2.0 * pi, 1e-15);
    EXPECT_NEAR(frames::sideslip_of(-3.0, 3.0), 0.28319, 1e-5);
}

TEST(Sideslip, FullTurnOfAttitudeChangesNothing)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-pi, pi);
    for (int i = 0; i < 1000; ++i) {
        const double th = u(rng);
        const double ps = u(rng);
        // theta + 2 pi is itself rounded, so agreement is to one ulp of 2 pi
        EXPECT_NEAR(frames::sideslip_of(th + 2.0 * pi, ps), frames::sideslip_of(th, ps), 1e-14);
    }
}

TEST(Phi, Examples)
{
    using V = frames::PlanarVelocity<double>;
    EXPECT_NEAR(frames::phi_of(Vec2<double>(1, 0), V{0, 1}, Vec2<double>(0, 0)), pi / 2.0, 1e-15);
    EXPECT_NEAR(frames::phi_of(Vec2<double>(0, 1), V{-1, 0}, Vec2<double>(0, 0)), pi / 2.0, 1e-15);
    EXPECT_NEAR(frames::phi_of(Vec2<double>(1, 0), V{1, 1}, Vec2<double>(0, 0)), pi / 4.0, 1e-15);
}

TEST(Phi, Errors)
{
    using V = frames::PlanarVelocity<double>;
    EXPECT_THROW(frames::phi_of(Vec2<double>(1, 0), V{0, 0}, Vec2<double>(0, 0)), DomainError);
    EXPECT_THROW(frames::phi_of(Vec2<double>(2, 3), V{1, 0}, Vec2<double>(2, 3)), DomainError);
}

TEST(Phi, InvariantUnderRigidRotation)
{
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 1000; ++i) {
        const Vec2<double> pos(u(rng), u(rng));
        const Vec2<double> c(u(rng), u(rng));
        const Vec2<double> v(u(rng), u(rng));
        const auto rot = frames::rotation(u(rng));
        const double a = frames::phi_of(pos, {v(0), v(1)}, c);
        const Vec2<double> v2 = v * rot;
        const double b = frames::phi_of(Vec2<double>(pos * rot), {v2(0), v2(1)}, Vec2<double>(c * rot));
        EXPECT_NEAR(std::remainder(a - b, 2.0 * pi), 0.0, 1e-12);
    }
}

TEST(PlanarVelocity, Speed)
{
    EXPECT_DOUBLE_EQ((frames::PlanarVelocity<double>{3, 4}.speed()), 5.0);
}
