#ifndef HVMGP_CASE_STUDIES_HPP
#define HVMGP_CASE_STUDIES_HPP

// The two circular demonstrations: SE vs vM regression on S^1, and
// HvM kernel sweeps on the 2-torus.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/SVD>

#include "gp.hpp"
#include "hyperopt.hpp"
#include "random.hpp"
#include "simulator.hpp"

namespace hvmgp {

struct Case1Curve {
    std::string kernel;            // "se" or "vm"
    Theta theta;
    OptResult report;
    std::vector<double> mean;      // at Case1Result::theta_grid
    std::vector<double> variance;  // latent posterior variance
    double boundary_gap = 0.0;     // |mean(2 pi - eps) - mean(0)|, the jump at the chart boundary
};

struct Case1Result {
    std::vector<double> train_theta;
    std::vector<double> train_z;
    std::vector<double> theta_grid;  // uniform on [-2 pi, 4 pi]
    Case1Curve se, vm;
};

inline constexpr double kBoundaryEps = 1e-9;

/// Samples the circular mixture at uniform random angles, fits SE (PSE, m=1)
/// and vM (PvM, m=1) GPs by maximum marginal likelihood, and evaluates both
/// posteriors on a grid spanning three periods.
inline Case1Result run_case1(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                             const OptimizeOptions &opt_in = {}, const CircularDensity &f = {}) {
    Rng rng(derive_seed(seed, {0x63617365ULL, 1}));
    Case1Result res;
    TrainingData data;
    data.obs.resize(static_cast<Eigen::Index>(n_train), 1);
    for (std::size_t i = 0; i < n_train; ++i) {
        const double th = 2.0 * std::numbers::pi * rng.uniform();
        const double z = case_study_1_observe(th, f, rng);
        res.train_theta.push_back(th);
        res.train_z.push_back(z);
        data.inputs.push_back(TorusPoint::from_angles({th}));
        data.obs(static_cast<Eigen::Index>(i), 0) = z;
    }
    for (std::size_t k = 0; k < n_test; ++k) {
        res.theta_grid.push_back(-2.0 * std::numbers::pi +
                                 6.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_test - 1));
    }
    std::vector<TorusPoint> tests;
    for (double th : res.theta_grid) tests.push_back(TorusPoint::from_angles({th}));
    const std::array<TorusPoint, 2> edge{TorusPoint::from_angles({2.0 * std::numbers::pi - kBoundaryEps}),
                                         TorusPoint::from_angles({0.0})};

    const auto run = [&](KernelKind kind, const char *name) {
        ModelSpec spec{kind, 1, 1, false};
        OptimizeOptions opt = opt_in;
        opt.seed = derive_seed(seed, {0x63617365ULL, 2});
        Case1Curve c;
        c.kernel = name;
        c.report = optimize(data, spec, opt);
        c.theta = c.report.theta;
        const TrainedGp gp = fit_model(data, spec, c.theta);
        for (const auto &t : tests) {
            const PosteriorGaussian p = predict(gp, t);
            c.mean.push_back(p.mean[0]);
            c.variance.push_back(p.cov(0, 0));
        }
        c.boundary_gap = std::abs(predict(gp, edge[0]).mean[0] - predict(gp, edge[1]).mean[0]);
        return c;
    };
    res.se = run(KernelKind::pse, "se");
    res.vm = run(KernelKind::pvm, "vm");
    return res;
}

/// Singular values of a sweep matrix, descending.
inline Eigen::VectorXd singular_values(const Eigen::MatrixXd &M) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues();
}

}  // namespace hvmgp

#endif
