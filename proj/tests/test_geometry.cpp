#include <gtest/gtest.h>

#include <random>

#include "mmwmap/errors.hpp"
#include "mmwmap/geometry.hpp"
#include "oracles.hpp"

using namespace mmwmap;

TEST(BistaticRange, MonostaticIsHalfPath) {
    EXPECT_NEAR(bistatic_range(1.0e-7, 0.3, 0.0), 14.9896229, 1e-7);
    EXPECT_EQ(bistatic_range(1.0e-7, 0.3, 0.0), 0.5 * kSpeedOfLight * 1.0e-7);
}

TEST(BistaticRange, BroadsideWithSeparation) {
    const double path = kSpeedOfLight * 1e-7;
    EXPECT_NEAR(bistatic_range(1.0e-7, kPi / 2, 0.6), std::sqrt(path * path - 0.36) / 2.0, 1e-9);
    EXPECT_NEAR(bistatic_range(1.0e-7, kPi / 2, 0.6), 14.98662, 1e-5);
}

TEST(BistaticRange, RoundTripThroughForwardGeometry) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    const auto f = oracle::forward(pose.tx_position, pose.rx_position, pose.ue_position, {5, 3});
    EXPECT_NEAR(bistatic_range(f.delay, f.ue_angle, 0.6), std::hypot(5.0, 3.0), 1e-9);
    EXPECT_NEAR(std::hypot(5.0, 3.0), 5.83095, 1e-5);
}

TEST(BistaticRange, InfeasibleDelayThrows) {
    EXPECT_THROW(bistatic_range(0.5 / kSpeedOfLight, 0.0, 0.6), GeometryError);
    EXPECT_THROW(bistatic_range(0.6 / kSpeedOfLight, 0.0, 0.6), GeometryError);
    try {
        bistatic_range(0.1 / kSpeedOfLight, 0.0, 0.6);
        FAIL();
    } catch (const GeometryError& e) {
        EXPECT_NE(std::string(e.what()).find("ellipse"), std::string::npos);
    }
}

TEST(BistaticRange, MonotoneInDelay) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(-kPi, kPi), sep(0.0, 1.0);
    for (int k = 0; k < 500; ++k) {
        const double phi = ang(rng), d = sep(rng);
        double prev = 0.0;
        for (double path = d + 0.01; path < 60.0; path += 0.37) {
            const double r = bistatic_range(path / kSpeedOfLight, phi, d);
            EXPECT_GT(r, prev);
            prev = r;
        }
    }
}

TEST(TxRxAngles, CoLocatedTxGivesUeAngle) {
    Pose pose = make_pose(0, {1, 2}, 0.4, 0.0);
    for (double a : {-2.0, 0.1, 1.3}) {
        const auto t = tx_rx_angles(pose, 2e-8, a);
        EXPECT_NEAR(wrap_angle(t.tx_angle - a), 0.0, 1e-12);
        EXPECT_NEAR(wrap_angle(t.rx_angle - a), 0.0, 1e-12);
    }
}

TEST(TxRxAngles, BroadsideScatterer) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    const auto f = oracle::forward(pose.tx_position, pose.rx_position, pose.ue_position, {0, 5});
    const auto t = tx_rx_angles(pose, f.delay, f.ue_angle);
    EXPECT_NEAR(t.tx_angle, std::atan2(5.0, 0.3), 1e-9);
    EXPECT_NEAR(t.rx_angle, std::atan2(5.0, -0.3), 1e-9);
}

TEST(TxRxAngles, MirrorSymmetry) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    for (double x : {-3.0, 0.5, 4.0}) {
        const auto up = path_delay(pose, {x, 2.5});
        const auto dn = path_delay(pose, {x, -2.5});
        const auto a = tx_rx_angles(pose, up.delay, up.ue_angle);
        const auto b = tx_rx_angles(pose, dn.delay, dn.ue_angle);
        EXPECT_NEAR(a.tx_angle, -b.tx_angle, 1e-9);
        EXPECT_NEAR(a.rx_angle, -b.rx_angle, 1e-9);
    }
}

TEST(TxRxAngles, DegenerateOnBaseline) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    // A path equal to the baseline collapses the ellipse onto the TX-RX segment.
    EXPECT_THROW(tx_rx_angles(pose, 0.6 / kSpeedOfLight, 0.0), GeometryError);
    EXPECT_THROW(tx_rx_angles(pose, 0.6 / kSpeedOfLight, 1.0), GeometryError);
}

TEST(CellToCartesian, TrivialCases) {
    const Pose a = make_pose(0, {0, 0}, 0.0, 0.0);
    const Vec2 p = cell_to_cartesian(a, 1e-7, 0.0);
    EXPECT_NEAR(p.x(), 14.9896229, 1e-7);
    EXPECT_NEAR(p.y(), 0.0, 1e-12);
    const Pose b = make_pose(0, {2, 1}, kPi / 2, 0.0);
    const Vec2 q = cell_to_cartesian(b, 1e-7, 0.0);
    EXPECT_NEAR(q.x(), 2.0, 1e-9);
    EXPECT_NEAR(q.y(), 1.0 + 14.9896229, 1e-7);
}

TEST(CellToCartesian, RoundTripRandom) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0), o(-kPi, kPi);
    for (int k = 0; k < 10000; ++k) {
        const Pose pose = make_pose(k, {3 * u(rng), 3 * u(rng)}, o(rng), 0.6);
        Vec2 s;
        do {
            s = Vec2(30 * u(rng), 30 * u(rng));
        } while (s.norm() > 30.0 || (s - pose.ue_position).norm() < 0.5);
        const auto f = oracle::forward(pose.tx_position, pose.rx_position, pose.ue_position, s);
        const Vec2 back = cell_to_cartesian(pose, f.delay, wrap_angle(f.ue_angle - pose.orientation));
        ASSERT_LT((back - s).norm(), 1e-9);
    }
}

TEST(PathDelay, MonostaticDelay) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.0);
    const auto g = path_delay(pose, {3, 4});
    EXPECT_NEAR(g.delay, 10.0 / kSpeedOfLight, 1e-20);
}

TEST(PathDelay, BistaticDistanceSums) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    const auto g = path_delay(pose, {5, 3});
    EXPECT_NEAR(g.delay, (std::hypot(5.3, 3.0) + std::hypot(4.7, 3.0)) / kSpeedOfLight, 1e-20);
    EXPECT_NEAR(g.delay * kSpeedOfLight, g.tx_range + g.rx_range, 1e-12);
    EXPECT_GE(g.delay * kSpeedOfLight, 0.6);
}

TEST(PathDelay, ConsistentWithBistaticRange) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-30.0, 30.0), o(-kPi, kPi);
    for (int k = 0; k < 10000; ++k) {
        const Pose pose = make_pose(k, {0, 0}, o(rng), 0.6);
        Vec2 s(u(rng), u(rng));
        if (s.norm() > 30.0 || s.norm() < 0.5) continue;
        const auto g = path_delay(pose, s);
        const double axis = pose.orientation;
        ASSERT_NEAR(bistatic_range(g.delay, g.ue_angle - axis, 0.6), g.ue_range, 1e-9);
    }
}

TEST(PathDelay, ZeroSeparationAnglesCoincide) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    const Pose pose = make_pose(0, {1, -1}, 0.7, 0.0);
    for (int k = 0; k < 1000; ++k) {
        const Vec2 s(u(rng), u(rng));
        const auto g = path_delay(pose, s);
        ASSERT_EQ(g.tx_angle, g.ue_angle);
        ASSERT_EQ(g.rx_angle, g.ue_angle);
    }
}

TEST(PathDelay, CoincidentPointThrows) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    EXPECT_THROW(path_delay(pose, pose.tx_position), GeometryError);
    EXPECT_THROW(path_delay(pose, pose.rx_position), GeometryError);
}

TEST(Pose, Invariants) {
    const Pose pose = make_pose(4, {1, 2}, 1.1, 0.6);
    EXPECT_NEAR(pose.antenna_separation(), 0.6, 1e-15);
    EXPECT_LT((0.5 * (pose.tx_position + pose.rx_position) - pose.ue_position).norm(), 1e-15);
    EXPECT_THROW(make_pose(0, {0, 0}, 0.0, -1.0), GeometryError);
}

TEST(WrapAngle, Range) {
    EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
    EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
    EXPECT_NEAR(wrap_angle(3 * kPi + 0.1), -kPi + 0.1, 1e-12);
}
