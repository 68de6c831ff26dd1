#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "hvmgp/gp.hpp"
#include "hvmgp/kernels.hpp"

using namespace hvmgp;
constexpr double pi = std::numbers::pi;

namespace {

TorusPoint random_point(std::mt19937_64 &rng, std::size_t m) {
    std::uniform_real_distribution<double> ang(0.0, 2.0 * pi);
    std::vector<double> a(m);
    for (auto &x : a) x = ang(rng);
    return TorusPoint::from_angles(a);
}

HvmHyperparams random_hvm(std::mt19937_64 &rng, std::size_t m) {
    std::uniform_real_distribution<double> u(0.0, 1.5);
    HvmHyperparams p;
    p.omega = 0.5 + u(rng);
    for (std::size_t s = 0; s < m; ++s) p.lambda.push_back(u(rng));
    for (std::size_t s = 0; s < num_pairs(m); ++s) p.corr.push_back(0.5 * u(rng));
    return p;
}

BaselineKernelParams random_baseline(std::mt19937_64 &rng, std::size_t m) {
    std::uniform_real_distribution<double> u(0.3, 2.0);
    BaselineKernelParams p;
    for (std::size_t s = 0; s < m; ++s) {
        p.omega.push_back(u(rng));
        p.scale.push_back(u(rng));
    }
    return p;
}

}  // namespace

TEST(KVm, Examples) {
    const auto u = circle_from_angle(0.7);
    EXPECT_NEAR(k_vm(u, u, {2.0, 1.5}), 4.0 * std::exp(1.5), 1e-12);
    EXPECT_NEAR(k_vm(u, u, {2.0, 1.5}), 17.92676, 1e-5);
    EXPECT_NEAR(k_vm(u, circle_from_angle(0.7 + pi), {1.0, 1.0}), 0.367879, 1e-6);
    EXPECT_NEAR(k_vm(u, circle_from_angle(0.7 + pi / 2), {1.0, 2.0}), 1.0, 1e-14);
}

TEST(KVm, Bounds) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ang(-pi, pi);
    const VmHyperparams p{1.3, 0.8};
    for (int i = 0; i < 500; ++i) {
        const double k = k_vm(circle_from_angle(ang(rng)), circle_from_angle(ang(rng)), p);
        EXPECT_GE(k, p.omega * p.omega * std::exp(-p.lambda) * (1 - 1e-14));
        EXPECT_LE(k, p.omega * p.omega * std::exp(p.lambda) * (1 + 1e-14));
    }
    EXPECT_THROW((VmHyperparams{1.0, 0.0}.validate()), std::invalid_argument);
}

TEST(KHvm, Examples) {
    const auto u = TorusPoint::from_angles({0.1, 2.0, 4.0});
    const HvmHyperparams ones{1.0, {1, 1, 1}, {1, 1, 1}};
    EXPECT_NEAR(k_hvm(u, u, ones), std::exp(9.0), 1e-9);
    EXPECT_NEAR(k_hvm(u, u, ones), 8103.08, 1e-2);

    const HvmHyperparams set2{1.0, {0.3, 0.3}, {0.3}};
    const auto o = TorusPoint::from_angles({0.0, 0.0});
    EXPECT_NEAR(k_hvm(o, TorusPoint::from_angles({pi / 2, pi / 2}), set2), 1.0, 1e-14);
    EXPECT_NEAR(k_hvm(o, TorusPoint::from_angles({pi, pi}), set2), 1.0, 1e-14);
}

TEST(KHvm, ZeroCorrIsProductOfVonMises) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        HvmHyperparams p = random_hvm(rng, 3);
        std::fill(p.corr.begin(), p.corr.end(), 0.0);
        for (auto &l : p.lambda) l += 0.01;  // k_vm needs lambda > 0
        const auto u = random_point(rng, 3), v = random_point(rng, 3);
        const double w = std::cbrt(p.omega);
        double prod = 1.0;
        for (int s = 0; s < 3; ++s) prod *= k_vm(u[s], v[s], {w, p.lambda[s]});
        EXPECT_NEAR(k_hvm(u, v, p), prod, 1e-12 * prod);
    }
}

TEST(KHvm, LambdaMatrixLayout) {
    // Lambda = [[0, a1, a3], [a1, 0, a2], [a3, a2, 0]]
    const HvmHyperparams p{1.0, {0, 0, 0}, {0.1, 0.2, 0.3}};
    const Eigen::MatrixXd L = p.lambda_matrix();
    EXPECT_EQ(L(0, 1), 0.1);
    EXPECT_EQ(L(1, 2), 0.2);
    EXPECT_EQ(L(0, 2), 0.3);
    EXPECT_EQ(L(1, 0), 0.1);
    EXPECT_EQ(L(0, 0), 0.0);

    // Quadratic form matches the dense Lambda.
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) {
        const auto u = random_point(rng, 3), v = random_point(rng, 3);
        const Eigen::VectorXd d = torus_metric(u, v);
        const double expect = std::exp(d.sum() * 0.0 + d.dot(L * d));
        EXPECT_NEAR(k_hvm(u, v, p), expect, 1e-13 * expect);
    }
}

TEST(KHvm, RejectsBadParameters) {
    EXPECT_THROW((HvmHyperparams{1.0, {1, 1, 1}, {1, 1}}.validate()), DimensionMismatch);
    EXPECT_THROW((HvmHyperparams{1.0, {-1, 1, 1}, {1, 1, 1}}.validate()), std::invalid_argument);
    EXPECT_THROW((HvmHyperparams{0.0, {1, 1, 1}, {1, 1, 1}}.validate()), std::invalid_argument);
    EXPECT_NO_THROW((HvmHyperparams{1.0, {0, 0, 0}, {0, 0, 0}}.validate()));
    const HvmHyperparams p{1.0, {1, 1}, {1}};
    EXPECT_THROW(k_hvm(TorusPoint::from_angles({0.0, 1.0, 2.0}), TorusPoint::from_angles({0.0, 1.0, 2.0}), p),
                 DimensionMismatch);
}

TEST(Baselines, Examples) {
    std::mt19937_64 rng(8);
    const BaselineKernelParams p = random_baseline(rng, 3);
    const auto u = random_point(rng, 3);
    double wmax = 1.0, vmmax = 1.0;
    for (int s = 0; s < 3; ++s) {
        wmax *= p.omega[s] * p.omega[s];
        vmmax *= p.omega[s] * p.omega[s] * std::exp(p.scale[s]);
    }
    EXPECT_NEAR(k_pse(u, u, p), wmax, 1e-14 * wmax);
    EXPECT_NEAR(k_pprd(u, u, p), wmax, 1e-14 * wmax);
    EXPECT_NEAR(k_pvm(u, u, p), vmmax, 1e-13 * vmmax);

    const BaselineKernelParams one{{1.0}, {0.7}};
    // PPRD: 0.05 and 2 pi - 0.05 are 0.1 apart on the circle.
    const auto a = TorusPoint::from_angles({0.05}), b = TorusPoint::from_angles({2 * pi - 0.05});
    EXPECT_NEAR(k_pprd(a, b, one), std::exp(-2.0 * std::pow(std::sin(0.05), 2) / 0.49), 1e-12);
    EXPECT_NEAR(k_pse(TorusPoint::from_angles({0.1}), TorusPoint::from_angles({0.1}), one), 1.0, 1e-15);
    // PSE sees the chart gap of 2 pi - 0.1.
    EXPECT_LT(k_pse(a, b, one), 1e-6);
    EXPECT_GT(k_pprd(a, b, one), 0.9);
}

TEST(Baselines, PvmMatchesHvmWithoutCorrelation) {
    std::mt19937_64 rng(21);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const BaselineKernelParams b = random_baseline(rng, 3);
        HvmHyperparams h;
        h.omega = b.omega[0] * b.omega[1] * b.omega[2];
        h.lambda = b.scale;
        h.corr = {0, 0, 0};
        const auto u = random_point(rng, 3), v = random_point(rng, 3);
        worst = std::max(worst, std::abs(k_hvm(u, v, h) - k_pvm(u, v, b)));
    }
    EXPECT_LT(worst, 1e-12);
}

TEST(KernelProperties, SymmetryMaximalityPeriodicity) {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 1000; ++i) {
        const HvmHyperparams h = random_hvm(rng, 3);
        const BaselineKernelParams b = random_baseline(rng, 3);
        const auto u = random_point(rng, 3), v = random_point(rng, 3);
        const auto ang = u.angles();
        const auto us = TorusPoint::from_angles({ang[0] + 2 * pi, ang[1] - 2 * pi, ang[2] + 4 * pi});

        EXPECT_NEAR(k_vm(u[0], v[0], {h.omega, h.lambda[0] + 0.1}), k_vm(v[0], u[0], {h.omega, h.lambda[0] + 0.1}), 1e-14);
        EXPECT_EQ(k_hvm(u, v, h), k_hvm(v, u, h));
        EXPECT_NEAR(k_pvm(u, v, b), k_pvm(v, u, b), 1e-14 * k_pvm(u, v, b));
        EXPECT_NEAR(k_pprd(u, v, b), k_pprd(v, u, b), 1e-14);
        EXPECT_NEAR(k_pse(u, v, b), k_pse(v, u, b), 1e-14);

        EXPECT_GE(k_hvm(u, u, h), k_hvm(u, v, h));

        const double kh = k_hvm(u, v, h);
        EXPECT_LT(std::abs(k_hvm(us, v, h) - kh), 1e-12 * std::max(1.0, kh));
        EXPECT_LT(std::abs(k_pvm(us, v, b) - k_pvm(u, v, b)), 1e-12 * std::max(1.0, k_pvm(u, v, b)));
        EXPECT_LT(std::abs(k_pprd(us, v, b) - k_pprd(u, v, b)), 1e-12);
        EXPECT_LT(std::abs(k_vm(us[0], v[0], {1.0, 1.0}) - k_vm(u[0], v[0], {1.0, 1.0})), 1e-12);
    }
}

TEST(Gram, Examples) {
    const std::vector<TorusPoint> one{TorusPoint::from_angles({1.0})};
    const Kernel vm = Kernel::pvm({{1.0}, {1.0}});
    const GramMatrix K = gram(one, vm);
    ASSERT_EQ(K.rows(), 1);
    EXPECT_NEAR(K(0, 0), std::exp(1.0), 1e-15);

    std::mt19937_64 rng(4);
    std::vector<TorusPoint> pts;
    for (int i = 0; i < 5; ++i) pts.push_back(random_point(rng, 3));
    const HvmHyperparams h = random_hvm(rng, 3);
    const Kernel kh = Kernel::hvm(h);
    const GramMatrix G = gram(pts, kh);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) EXPECT_NEAR(G(i, j), k_hvm(pts[i], pts[j], h), 1e-13 * G(i, j));
    EXPECT_LT((G - G.transpose()).cwiseAbs().maxCoeff(), 1e-12);

    for (KernelKind kind : {KernelKind::pvm, KernelKind::pprd, KernelKind::pse}) {
        const Kernel k = Kernel::baseline(kind, random_baseline(rng, 3));
        const GramMatrix Gb = gram(pts, k);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) EXPECT_NEAR(Gb(i, j), k(pts[i], pts[j]), 1e-13 * std::max(1.0, Gb(i, j)));
    }

    const std::vector<TorusPoint> bad{TorusPoint::from_angles({0.0, 1.0})};
    EXPECT_THROW(gram(bad, kh), DimensionMismatch);
    EXPECT_THROW(gram(std::vector<TorusPoint>{}, kh), std::invalid_argument);
}

TEST(ComponentDistances, Examples) {
    const std::vector<TorusPoint> one{TorusPoint::from_angles({0.2, 0.4, 0.6})};
    const auto D1 = component_distance_matrices(one);
    ASSERT_EQ(D1.size(), 3u);
    for (const auto &D : D1) EXPECT_EQ(D(0, 0), 1.0);

    const std::vector<TorusPoint> two{TorusPoint::from_angles({0.2, 0.4}), TorusPoint::from_angles({0.2 + pi, 0.4})};
    const auto D2 = component_distance_matrices(two);
    EXPECT_NEAR(D2[0](0, 1), -1.0, 1e-15);
    EXPECT_NEAR(D2[1](0, 1), 1.0, 1e-15);
}

TEST(ComponentDistances, ReassembleHvmGram) {
    std::mt19937_64 rng(31);
    std::vector<TorusPoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back(random_point(rng, 3));
    const HvmHyperparams h = random_hvm(rng, 3);
    const auto D = component_distance_matrices(pts);
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(10, 10);
    for (int s = 0; s < 3; ++s) E += h.lambda[s] * D[s];
    const auto pairs = circle_pairs(3);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        E += 2.0 * h.corr[p] * D[pairs[p].first].cwiseProduct(D[pairs[p].second]);
    }
    const Eigen::MatrixXd K = h.omega * h.omega * E.array().exp().matrix();
    const GramMatrix G = gram(pts, Kernel::hvm(h));
    EXPECT_LT(((K - G).array() / G.array()).abs().maxCoeff(), 1e-13);
    for (const auto &Ds : D) {
        EXPECT_EQ((Ds - Ds.transpose()).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_TRUE((Ds.diagonal().array() == 1.0).all());
    }
}

TEST(CirclePairs, Ordering) {
    const auto p3 = circle_pairs(3);
    ASSERT_EQ(p3.size(), 3u);
    using P = std::pair<std::size_t, std::size_t>;
    EXPECT_EQ(p3[0], P(0, 1));
    EXPECT_EQ(p3[1], P(1, 2));
    EXPECT_EQ(p3[2], P(0, 2));
    // Cyclic rule (s, s mod 3 + 1) in 1-based indices.
    for (std::size_t s = 1; s <= 3; ++s) {
        const std::size_t i = s - 1, j = s % 3;
        EXPECT_EQ(std::minmax(i, j), std::minmax(p3[s - 1].first, p3[s - 1].second));
    }
    EXPECT_EQ(circle_pairs(4).size(), 6u);
    EXPECT_EQ(circle_pairs(1).size(), 0u);
}

// Natural-parameter derivatives of the Gram matrix against central differences.
TEST(GramDerivatives, FiniteDifferenceOracle) {
    std::mt19937_64 rng(77);
    std::vector<TorusPoint> pts;
    for (int i = 0; i < 8; ++i) pts.push_back(random_point(rng, 3));
    for (KernelKind kind : {KernelKind::hvm, KernelKind::pvm, KernelKind::pprd, KernelKind::pse}) {
        std::vector<double> theta = kind == KernelKind::hvm ? std::vector<double>{1.3, 0.5, 0.8, 0.2, 0.3, 0.1, 0.4}
                                                            : std::vector<double>{1.3, 0.9, 1.4, 0.7};
        const Kernel k = Kernel::from_natural(kind, 3, theta);
        const Eigen::MatrixXd K = gram(pts, k);
        const auto dK = gram_derivatives(pts, k, K);
        ASSERT_EQ(dK.size(), theta.size());
        for (std::size_t t = 0; t < theta.size(); ++t) {
            const double h = 1e-6;
            auto tp = theta, tm = theta;
            tp[t] += h;
            tm[t] -= h;
            const Eigen::MatrixXd fd =
                (gram(pts, Kernel::from_natural(kind, 3, tp)) - gram(pts, Kernel::from_natural(kind, 3, tm))) / (2 * h);
            EXPECT_LT((fd - dK[t]).cwiseAbs().maxCoeff(), 1e-6 * (1.0 + fd.cwiseAbs().maxCoeff()))
                << to_string(kind) << " coordinate " << t;
        }
    }
}

TEST(GramPositiveDefinite, JitterPolicySucceedsForStandardKernels) {
    std::mt19937_64 rng(123);
    std::vector<TorusPoint> pts;
    for (int i = 0; i < 100; ++i) pts.push_back(random_point(rng, 3));
    const std::vector<TorusPoint> circle(pts.begin(), pts.end());
    std::vector<TorusPoint> on_circle;
    for (const auto &p : pts) on_circle.push_back(TorusPoint(std::vector<CirclePoint>{p[0]}));

    const auto check = [](const Eigen::MatrixXd &K, const std::string &name) {
        const CholeskyFactor f = factorize(K, name);
        EXPECT_GT(f.llt.matrixLLT().diagonal().minCoeff(), 0.0) << name;
    };
    check(gram(on_circle, Kernel::pvm({{1.0}, {2.0}})), "vm");
    check(gram(pts, Kernel::pprd({{1, 1, 1}, {1.0, 1.0, 1.0}})), "pprd");
    check(gram(pts, Kernel::pvm({{1, 1, 1}, {1.0, 1.0, 1.0}})), "pvm");

    // Recorded, not asserted: the HvM kernel's positive definiteness is unproven.
    const Eigen::MatrixXd Kh = gram(pts, Kernel::hvm({1.0, {1, 1, 1}, {0.5, 0.5, 0.5}}));
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Kh).eigenvalues().minCoeff();
    RecordProperty("hvm_min_eigenvalue", std::to_string(min_eig));
    std::cout << "HvM Gram (n=100) minimum eigenvalue without jitter: " << min_eig << "\n";
}
