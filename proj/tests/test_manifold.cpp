#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hvmgp/manifold.hpp"

using namespace hvmgp;
constexpr double pi = std::numbers::pi;

TEST(CircleFromAngle, Examples) {
    const auto a = circle_from_angle(0.0);
    EXPECT_EQ(a.e1(), 1.0);
    EXPECT_EQ(a.e2(), 0.0);

    const auto b = circle_from_angle(pi);
    EXPECT_NEAR(b.e1(), -1.0, 1e-15);
    EXPECT_NEAR(b.e2(), 0.0, 1e-15);

    const auto c = circle_from_angle(2.0 * pi);
    EXPECT_NEAR(c.e1(), a.e1(), 1e-12);
    EXPECT_NEAR(c.e2(), a.e2(), 1e-12);
}

TEST(CircleFromAngle, RejectsNonFinite) {
    EXPECT_THROW(circle_from_angle(std::nan("")), std::invalid_argument);
    EXPECT_THROW(circle_from_angle(INFINITY), std::invalid_argument);
}

TEST(CircleFromAngle, PeriodicProperty) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(-10.0, 10.0);
    std::uniform_int_distribution<int> k(-5, 5);
    for (int i = 0; i < 1000; ++i) {
        const double t = ang(rng);
        const auto p = circle_from_angle(t);
        const auto q = circle_from_angle(t + 2.0 * pi * k(rng));
        EXPECT_NEAR(p.e1(), q.e1(), 1e-12);
        EXPECT_NEAR(p.e2(), q.e2(), 1e-12);
        EXPECT_NEAR(std::hypot(p.e1(), p.e2()), 1.0, 1e-12);
    }
}

TEST(CirclePoint, CanonicalAngleInRange) {
    EXPECT_DOUBLE_EQ(circle_from_angle(-0.5).angle(), 2.0 * pi - 0.5);
    EXPECT_EQ(circle_from_angle(0.0).angle(), 0.0);
    EXPECT_NEAR(circle_from_angle(3.0).angle(), 3.0, 1e-15);
}

TEST(TorusMetric, Examples) {
    const auto u = TorusPoint::from_angles({0.3, 1.2, -2.0});
    const Eigen::VectorXd self = torus_metric(u, u);
    for (int s = 0; s < 3; ++s) EXPECT_NEAR(self[s], 1.0, 1e-12);

    const auto v = TorusPoint::from_angles({0.3, 1.2 + pi, -2.0});
    const Eigen::VectorXd anti = torus_metric(u, v);
    EXPECT_NEAR(anti[0], 1.0, 1e-12);
    EXPECT_NEAR(anti[1], -1.0, 1e-12);
    EXPECT_NEAR(anti[2], 1.0, 1e-12);

    // cos(pi/2) = 0, cos(pi/3) = 0.5
    const Eigen::VectorXd d = torus_metric(TorusPoint::from_angles({0.0, 0.0}), TorusPoint::from_angles({pi / 2, pi / 3}));
    EXPECT_NEAR(d[0], 0.0, 1e-15);
    EXPECT_NEAR(d[1], 0.5, 1e-15);
}

TEST(TorusMetric, SymmetricAndRejectsMismatch) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * pi);
    for (int i = 0; i < 200; ++i) {
        const auto u = TorusPoint::from_angles({ang(rng), ang(rng), ang(rng)});
        const auto v = TorusPoint::from_angles({ang(rng), ang(rng), ang(rng)});
        const Eigen::VectorXd a = torus_metric(u, v), b = torus_metric(v, u);
        EXPECT_TRUE((a.array() == b.array()).all());
        EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0 + 1e-15);
    }
    EXPECT_THROW(torus_metric(TorusPoint::from_angles({0.0}), TorusPoint::from_angles({0.0, 1.0})),
                 DimensionMismatch);
}

TEST(AoaEmbedding, Examples) {
    const std::vector<Vec2> east{Vec2(1, 0)};
    auto p = aoa_embedding(Vec2(0, 0), east);
    EXPECT_DOUBLE_EQ(p[0].e1(), 1.0);
    EXPECT_DOUBLE_EQ(p[0].e2(), 0.0);

    const std::vector<Vec2> r34{Vec2(3, 4)};
    p = aoa_embedding(Vec2(0, 0), r34);
    EXPECT_NEAR(p[0].e1(), 0.6, 1e-15);
    EXPECT_NEAR(p[0].e2(), 0.8, 1e-15);

    const std::vector<Vec2> two{Vec2(1, 2), Vec2(2, 1)};
    p = aoa_embedding(Vec2(1, 1), two);
    EXPECT_EQ(p.dim(), 2u);
    EXPECT_DOUBLE_EQ(p[0].e1(), 0.0);
    EXPECT_DOUBLE_EQ(p[0].e2(), 1.0);
    EXPECT_DOUBLE_EQ(p[1].e1(), 1.0);
    EXPECT_DOUBLE_EQ(p[1].e2(), 0.0);
}

TEST(AoaEmbedding, SingularAtReference) {
    const std::vector<Vec2> refs{Vec2(5, 5)};
    EXPECT_THROW(aoa_embedding(Vec2(5, 5), refs), SingularityError);
    EXPECT_THROW(aoa_embedding(Vec2(5 + 1e-10, 5), refs), SingularityError);
    EXPECT_NO_THROW(aoa_embedding(Vec2(5 + 1e-6, 5), refs));
}

TEST(AoaEmbedding, UnitNormProperty) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> pos(0.0, 30.0);
    for (int i = 0; i < 1000; ++i) {
        const std::vector<Vec2> refs{Vec2(pos(rng), pos(rng))};
        const auto p = aoa_embedding(Vec2(pos(rng), pos(rng)), refs);
        EXPECT_NEAR(std::hypot(p[0].e1(), p[0].e2()), 1.0, 1e-12);
    }
}
