#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hvmgp/gp.hpp"
#include "hvmgp/io.hpp"

using namespace hvmgp;
constexpr double pi = std::numbers::pi;

namespace {

std::vector<TorusPoint> random_points(std::mt19937_64 &rng, std::size_t n, std::size_t m) {
    std::uniform_real_distribution<double> ang(0.0, 2.0 * pi);
    std::vector<TorusPoint> pts;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> a(m);
        for (auto &x : a) x = ang(rng);
        pts.push_back(TorusPoint::from_angles(a));
    }
    return pts;
}

Eigen::MatrixXd random_spd(std::mt19937_64 &rng, int d) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd A(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) A(i, j) = g(rng);
    return A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
}

Eigen::MatrixXd random_matrix(std::mt19937_64 &rng, int r, int c) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd A(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) A(i, j) = g(rng);
    return A;
}

const Kernel kHvm = Kernel::hvm({1.2, {0.8, 0.6, 1.1}, {0.2, 0.1, 0.15}});

}  // namespace

TEST(Fit, ScalarExample) {
    const std::vector<TorusPoint> x{TorusPoint::from_angles({0.4})};
    const Kernel k = Kernel::pvm({{1.0}, {1.0}});
    const double e = std::exp(1.0);
    const TrainedGp gp = fit(x, Eigen::VectorXd::Constant(1, 2.0), k, 0.1);
    EXPECT_NEAR(gp.alpha()[0], 2.0 / (e + 0.1), 1e-14);
    EXPECT_NEAR(gp.factor().matrixLLT()(0, 0), std::sqrt(e + 0.1), 1e-14);

    const PosteriorGaussian p = predict(gp, x[0]);
    EXPECT_NEAR(p.mean[0], 2.0 * e / (e + 0.1), 1e-13);
    EXPECT_NEAR(p.cov(0, 0), e - e * e / (e + 0.1), 1e-13);
}

TEST(Fit, BlockDiagonalMatchesIndependentFits) {
    std::mt19937_64 rng(10);
    const auto x = random_points(rng, 15, 3);
    const Eigen::MatrixXd Z = random_matrix(rng, 15, 3);
    const Eigen::Vector3d r(0.1, 0.2, 0.05);
    const TrainedGp joint = fit(x, Z, kHvm, r, Eigen::MatrixXd::Identity(3, 3));
    const Eigen::MatrixXd Kxx = gram(x, kHvm);
    for (int j = 0; j < 3; ++j) {
        const TrainedGp single = fit(x, Eigen::VectorXd(Z.col(j)), kHvm, r[j]);
        EXPECT_LT((joint.alpha().segment(j * 15, 15) - single.alpha()).cwiseAbs().maxCoeff(), 1e-10);
        const Eigen::MatrixXd block = joint.system_matrix().block(j * 15, j * 15, 15, 15);
        EXPECT_LT((block - Kxx - r[j] * Eigen::MatrixXd::Identity(15, 15)).cwiseAbs().maxCoeff(), 1e-14);
    }
    EXPECT_EQ(joint.system_matrix().block(0, 15, 15, 15).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fit, MatchesDenseInverse) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_points(rng, 12, 3);
        const Eigen::MatrixXd Z = random_matrix(rng, 12, 2);
        const Eigen::MatrixXd B = random_spd(rng, 2);
        const Eigen::Vector2d r(0.05, 0.1);
        const TrainedGp gp = fit(x, Z, kHvm, r, B);

        // Independent assembly: explicit Kronecker loops and full-pivot LU.
        const Eigen::MatrixXd Kxx = gram(x, kHvm);
        Eigen::MatrixXd K(24, 24);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int i = 0; i < 12; ++i)
                    for (int j = 0; j < 12; ++j)
                        K(a * 12 + i, b * 12 + j) = B(a, b) * Kxx(i, j) + (a == b && i == j ? r[a] : 0.0);
        Eigen::VectorXd z(24);
        z << Z.col(0), Z.col(1);
        const Eigen::VectorXd alpha = K.fullPivLu().solve(z);
        EXPECT_LT((alpha - gp.alpha()).cwiseAbs().maxCoeff(), 1e-8 * (1.0 + alpha.cwiseAbs().maxCoeff()));
        EXPECT_LT((gp.system_inverse() - K.inverse()).cwiseAbs().maxCoeff(), 1e-8 * (1.0 + K.inverse().cwiseAbs().maxCoeff()));
    }
}

TEST(Fit, RejectsBadShapes) {
    std::mt19937_64 rng(12);
    const auto x = random_points(rng, 5, 3);
    EXPECT_THROW(fit(x, Eigen::VectorXd::Zero(4), kHvm, 0.1), DimensionMismatch);
    EXPECT_THROW(fit(x, Eigen::MatrixXd::Zero(5, 2), kHvm, Eigen::Vector2d(0.1, 0.1), Eigen::MatrixXd::Identity(3, 3)),
                 DimensionMismatch);
    EXPECT_THROW(fit(x, Eigen::VectorXd::Zero(5), kHvm, 0.0), std::invalid_argument);
    const auto x2 = random_points(rng, 5, 2);
    EXPECT_THROW(fit(x2, Eigen::VectorXd::Zero(5), kHvm, 0.1), DimensionMismatch);
}

TEST(Fit, JitterOnDuplicateInputs) {
    const std::vector<TorusPoint> x(4, TorusPoint::from_angles({1.0, 2.0}));
    const Kernel k = Kernel::pvm({{1.0, 1.0}, {1.0, 1.0}});
    // Noise far below round-off of the rank-1 Gram: jitter must step in.
    const TrainedGp gp = fit(x, Eigen::VectorXd::Ones(4), k, 1e-30);
    EXPECT_GT(gp.jitter_used(), 0.0);
    EXPECT_LE(gp.jitter_used(), 1e-3 * std::exp(2.0) * (1 + 1e-12));

    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(3, 3);
    bad(2, 2) = -1.0;
    try {
        factorize(bad, "test");
        FAIL() << "expected NotPositiveDefinite";
    } catch (const NotPositiveDefinite &e) {
        EXPECT_EQ(e.kernel(), "test");
        EXPECT_LT(e.min_pivot(), 0.0);
    }
}

TEST(Predict, InterpolatesWithTinyNoise) {
    std::mt19937_64 rng(13);
    const auto x = random_points(rng, 10, 3);
    const Eigen::MatrixXd Z = random_matrix(rng, 10, 2);
    const Eigen::MatrixXd B = random_spd(rng, 2);
    const TrainedGp gp = fit(x, Z, kHvm, Eigen::Vector2d(1e-10, 1e-10), B);
    for (int i = 0; i < 10; ++i) {
        const PosteriorGaussian p = predict(gp, x[static_cast<std::size_t>(i)]);
        EXPECT_LT((p.mean - Z.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-4);
        EXPECT_LT(p.cov.cwiseAbs().maxCoeff(), 1e-4);
    }
}

TEST(Predict, ObservationAddsNoise) {
    std::mt19937_64 rng(14);
    const auto x = random_points(rng, 8, 3);
    const Eigen::MatrixXd Z = random_matrix(rng, 8, 3);
    const Eigen::Vector3d r(0.1, 0.2, 0.3);
    const TrainedGp gp = fit(x, Z, kHvm, r, random_spd(rng, 3));
    const auto t = random_points(rng, 1, 3)[0];
    const PosteriorGaussian f = predict(gp, t), y = predict_observation(gp, t);
    EXPECT_LT((y.mean - f.mean).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((y.cov - f.cov - Eigen::MatrixXd(r.asDiagonal())).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Predict, SinglePointFormulaMultiOutput) {
    std::mt19937_64 rng(15);
    const auto x = random_points(rng, 9, 3);
    const Eigen::MatrixXd Z = random_matrix(rng, 9, 2);
    const Eigen::MatrixXd B = random_spd(rng, 2);
    const TrainedGp gp = fit(x, Z, kHvm, Eigen::Vector2d(0.1, 0.2), B);
    const auto t = random_points(rng, 1, 3)[0];
    const std::vector<TorusPoint> tv{t};
    const Eigen::MatrixXd k = gram(tv, x, kHvm);  // 1 x n
    const Eigen::MatrixXd Kt = kron(B, k);      // d x nd
    const Eigen::MatrixXd Kinv = gp.system_matrix().inverse();
    Eigen::VectorXd z(18);
    z << Z.col(0), Z.col(1);
    const Eigen::VectorXd mean = Kt * Kinv * z;
    const Eigen::MatrixXd cov = kHvm(t, t) * B - Kt * Kinv * Kt.transpose();
    const PosteriorGaussian p = predict(gp, t);
    EXPECT_LT((p.mean - mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((p.cov - cov).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Predict, PermutationInvariance) {
    std::mt19937_64 rng(16);
    const auto x = random_points(rng, 12, 3);
    const Eigen::MatrixXd Z = random_matrix(rng, 12, 2);
    const Eigen::MatrixXd B = random_spd(rng, 2);
    const Eigen::Vector2d r(0.05, 0.07);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<TorusPoint> xp;
    Eigen::MatrixXd Zp(12, 2);
    for (int i = 0; i < 12; ++i) {
        xp.push_back(x[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
        Zp.row(i) = Z.row(perm[static_cast<std::size_t>(i)]);
    }
    const TrainedGp a = fit(x, Z, kHvm, r, B), b = fit(xp, Zp, kHvm, r, B);
    const auto tests = random_points(rng, 5, 3);
    const PosteriorGaussian pa = predict(a, tests), pb = predict(b, tests);
    EXPECT_LT((pa.mean - pb.mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((pa.cov - pb.cov).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Predict, VarianceShrinksWithMoreData) {
    std::mt19937_64 rng(17);
    const auto x = random_points(rng, 20, 3);
    const Eigen::VectorXd z = random_matrix(rng, 20, 1).col(0);
    const auto tests = random_points(rng, 10, 3);
    const TrainedGp big = fit(x, z, kHvm, 0.1);
    const TrainedGp small = fit(std::vector<TorusPoint>(x.begin(), x.begin() + 10), Eigen::VectorXd(z.head(10)), kHvm, 0.1);
    for (const auto &t : tests) {
        const double vb = predict(big, t).cov(0, 0), vs = predict(small, t).cov(0, 0);
        EXPECT_LE(vb, vs + 1e-10);
        EXPECT_GE(vb, -1e-10);
        EXPECT_LE(vs, kHvm(t, t) + 1e-10);
    }
}

TEST(Predict, BatchedMarginalsMatchPerPoint) {
    std::mt19937_64 rng(18);
    const auto x = random_points(rng, 20, 3);
    const Eigen::MatrixXd Z = random_matrix(rng, 20, 3);
    const TrainedGp gp = fit(x, Z, kHvm, Eigen::Vector3d(0.02, 0.03, 0.04), random_spd(rng, 3));
    const auto tests = random_points(rng, 25, 3);
    const auto batch = predict_observation_marginals(gp, tests);
    ASSERT_EQ(batch.size(), tests.size());
    for (std::size_t i = 0; i < tests.size(); ++i) {
        const PosteriorGaussian p = predict_observation(gp, tests[i]);
        EXPECT_LT((batch[i].mean - p.mean).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((batch[i].cov - p.cov).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Predict, LargeSignalVarianceKeepsPositiveMarginals) {
    // Prior variance ~7e4 against noise ~1e-4, dense inputs: a regime where
    // prior - k^T K^{-1} k loses all digits if formed through K^{-1}.
    std::mt19937_64 rng(19);
    const auto x = random_points(rng, 150, 3);
    const Eigen::MatrixXd Z = 20.0 * random_matrix(rng, 150, 3);
    const Kernel k = Kernel::hvm({30.0, {0.03, 0.03, 0.02}, {0.01, 0.006, 0.009}});
    const Eigen::Matrix3d B = (Eigen::Matrix3d() << 76, 41, 19, 41, 70, 15, 19, 15, 81).finished();
    const Eigen::Vector3d noise = Eigen::Vector3d::Constant(1.2e-4);
    const TrainedGp gp = fit(x, Z, k, noise, B);
    const auto tests = random_points(rng, 40, 3);
    const auto batch = predict_observation_marginals(gp, tests);
    for (std::size_t i = 0; i < tests.size(); ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) EXPECT_GE(batch[i].cov(j, j), 0.99 * noise[j]) << i;
        EXPECT_TRUE(Eigen::LLT<Eigen::MatrixXd>(batch[i].cov).info() == Eigen::Success) << i;
        const PosteriorGaussian p = predict_observation(gp, tests[i]);
        EXPECT_LT((batch[i].cov - p.cov).cwiseAbs().maxCoeff(), 1e-2 * noise[0]) << i;
    }
}

TEST(LogLikelihood, ScalarAndDenseOracles) {
    // d = 1, n = 1: log N(z; mu, s2) by hand.
    const std::vector<TorusPoint> x{TorusPoint::from_angles({0.0})};
    const Kernel k = Kernel::pvm({{1.0}, {1.0}});
    const TrainedGp gp = fit(x, Eigen::VectorXd::Constant(1, 1.0), k, 0.5);
    const auto t = TorusPoint::from_angles({1.0});
    const PosteriorGaussian p = predict_observation(gp, t);
    const double mu = p.mean[0], s2 = p.cov(0, 0), z = 0.3;
    const double expect = -0.5 * std::log(2 * pi * s2) - 0.5 * (z - mu) * (z - mu) / s2;
    EXPECT_NEAR(log_likelihood(gp, t, Eigen::VectorXd::Constant(1, z)), expect, 1e-12);

    std::mt19937_64 rng(19);
    const auto xs = random_points(rng, 10, 3);
    const TrainedGp g3 = fit(xs, random_matrix(rng, 10, 3), kHvm, Eigen::Vector3d(0.1, 0.1, 0.2), random_spd(rng, 3));
    const auto tt = random_points(rng, 1, 3)[0];
    const PosteriorGaussian q = predict_observation(g3, tt);
    const Eigen::Vector3d zz(0.1, -0.2, 0.4);
    const Eigen::Vector3d r = zz - q.mean;
    const double dense = -0.5 * (r.dot(q.cov.inverse() * r) + std::log(q.cov.determinant()) + 3 * std::log(2 * pi));
    EXPECT_NEAR(log_likelihood(g3, tt, zz), dense, 1e-9);
}

TEST(LogLikelihood, SingularCovarianceThrows) {
    PosteriorGaussian g{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero()};
    EXPECT_THROW(gaussian_log_density(g, Eigen::Vector2d::Zero()), SingularCovariance);
    g.cov = Eigen::Matrix2d::Identity();
    EXPECT_THROW(gaussian_log_density(g, Eigen::Vector3d::Zero()), DimensionMismatch);
}

TEST(Serialization, RoundTripPredictions) {
    std::mt19937_64 rng(20);
    const auto x = random_points(rng, 15, 3);
    const TrainedGp gp = fit(x, random_matrix(rng, 15, 3), kHvm, Eigen::Vector3d(0.01, 0.02, 0.03), random_spd(rng, 3));
    const TrainedGp back = gp_from_json(nlohmann::json::parse(gp_to_json(gp).dump()));
    const auto tests = random_points(rng, 6, 3);
    const PosteriorGaussian a = predict(gp, tests), b = predict(back, tests);
    EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.cov - b.cov).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(back.kernel().name(), gp.kernel().name());
}
