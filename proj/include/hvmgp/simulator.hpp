#ifndef HVMGP_SIMULATOR_HPP
#define HVMGP_SIMULATOR_HPP

// Synthetic data: the ranging sensor network, the training grid, reference
// trajectories, and the two circular case studies.
//
// Sensor model at position x with references iota_1..iota_m:
//   h(x)   = (|iota_s - x|)_s
//   z      = (1 + c) h(x) + v,   v ~ N(0, xi^2 I)
// Agent dynamics (filter prediction model): x_{t+1} = x_t + w_t, w_t ~ N(0, Q).

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "kernels.hpp"
#include "manifold.hpp"
#include "random.hpp"

namespace hvmgp {

enum class TrajectoryKind { T1, T2, T3 };

inline std::string to_string(TrajectoryKind t) {
    switch (t) {
        case TrajectoryKind::T1: return "T1";
        case TrajectoryKind::T2: return "T2";
        case TrajectoryKind::T3: return "T3";
    }
    return "?";
}

inline TrajectoryKind trajectory_from_string(const std::string &s) {
    if (s == "T1" || s == "t1") return TrajectoryKind::T1;
    if (s == "T2" || s == "t2") return TrajectoryKind::T2;
    if (s == "T3" || s == "t3") return TrajectoryKind::T3;
    throw std::invalid_argument("unknown trajectory '" + s + "'");
}

struct ScenarioConfig {
    double width = 30.0;   // m
    double height = 30.0;  // m
    std::vector<Vec2> references{Vec2(5.0, 5.0), Vec2(25.0, 5.0), Vec2(15.0, 25.0)};
    TrajectoryKind trajectory = TrajectoryKind::T1;
    std::size_t steps = 1000;
    Eigen::Matrix2d process_cov = Eigen::Vector2d(0.16, 0.16).asDiagonal();
    double noise_xi = 0.01;     // m
    double offset_ratio = 0.05;
    std::size_t grid_x = 24;
    std::size_t grid_y = 10;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(width > 0.0) || !(height > 0.0)) throw std::invalid_argument("arena must have positive size");
        if (references.empty()) throw std::invalid_argument("need at least one reference point");
        for (std::size_t i = 0; i < references.size(); ++i) {
            const auto &r = references[i];
            if (r.x() < 0.0 || r.x() > width || r.y() < 0.0 || r.y() > height) {
                throw std::invalid_argument("reference point outside the arena");
            }
            for (std::size_t j = 0; j < i; ++j) {
                if ((references[j] - r).norm() <= kReferenceCollision) {
                    throw std::invalid_argument("reference points must be pairwise distinct");
                }
            }
        }
        if (!(noise_xi >= 0.0)) throw std::invalid_argument("noise level must be nonnegative");
        if (!(offset_ratio > -1.0)) throw std::invalid_argument("offset ratio must exceed -1");
        if (grid_x < 1 || grid_y < 1) throw std::invalid_argument("grid counts must be at least 1");
        if (steps < 1) throw std::invalid_argument("need at least one step");
    }
};

/// Noise-free ranges to every reference.
inline Eigen::VectorXd ranges(const Vec2 &x, std::span<const Vec2> references) {
    Eigen::VectorXd h(static_cast<Eigen::Index>(references.size()));
    for (std::size_t s = 0; s < references.size(); ++s) {
        const double r = (references[s] - x).norm();
        if (r <= kReferenceCollision) throw SingularityError("position coincides with a reference point");
        h[static_cast<Eigen::Index>(s)] = r;
    }
    return h;
}

/// One random-walk step. Always consumes two normal draws.
inline Vec2 simulate_dynamics(const Vec2 &x, const Eigen::Matrix2d &Q, Rng &rng) {
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Q);
    const Eigen::Vector2d sd = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::Vector2d e(rng.normal(), rng.normal());
    return x + es.eigenvectors() * sd.cwiseProduct(e);
}

inline Eigen::VectorXd measure_range(const Vec2 &x, const ScenarioConfig &cfg, Rng &rng) {
    Eigen::VectorXd z = (1.0 + cfg.offset_ratio) * ranges(x, cfg.references);
    for (Eigen::Index s = 0; s < z.size(); ++s) z[s] += cfg.noise_xi * rng.normal();
    return z;
}

/// Grid point (col, row): ((col + 1/2) W / nx, (row + 1/2) H / ny), half-cell margins.
inline Vec2 grid_point(const ScenarioConfig &cfg, std::size_t col, std::size_t row) {
    return {(static_cast<double>(col) + 0.5) * cfg.width / static_cast<double>(cfg.grid_x),
            (static_cast<double>(row) + 0.5) * cfg.height / static_cast<double>(cfg.grid_y)};
}

struct TrainingSet {
    std::vector<Vec2> positions;       // grid positions, m
    std::vector<TorusPoint> inputs;    // AoA toward each reference
    Eigen::MatrixXd obs;               // n x m ranges, m

    std::size_t size() const { return inputs.size(); }
};

/// Row-major over the grid: index = row * grid_x + col, x varying fastest.
inline TrainingSet build_training_set(const ScenarioConfig &cfg, Rng &rng) {
    cfg.validate();
    TrainingSet ts;
    const std::size_t n = cfg.grid_x * cfg.grid_y;
    ts.obs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.references.size()));
    for (std::size_t row = 0; row < cfg.grid_y; ++row) {
        for (std::size_t col = 0; col < cfg.grid_x; ++col) {
            const Vec2 x = grid_point(cfg, col, row);
            const auto i = static_cast<Eigen::Index>(ts.positions.size());
            ts.positions.push_back(x);
            ts.inputs.push_back(aoa_embedding(x, cfg.references));
            ts.obs.row(i) = measure_range(x, cfg, rng).transpose();
        }
    }
    return ts;
}

inline TrainingSet build_training_set(const ScenarioConfig &cfg) {
    Rng rng(derive_seed(cfg.seed, {0x7261696eULL}));
    return build_training_set(cfg, rng);
}

namespace detail {

// Closed curve of period 1 for each trajectory kind, not arc-length parameterized.
inline Vec2 trajectory_curve(TrajectoryKind kind, double s) {
    constexpr double pi = std::numbers::pi;
    switch (kind) {
        case TrajectoryKind::T1:
            return {15.0 + 9.0 * std::cos(2.0 * pi * s), 15.0 + 9.0 * std::sin(2.0 * pi * s)};
        case TrajectoryKind::T2:
            return {15.0 + 9.0 * std::sin(2.0 * pi * s), 15.0 + 9.0 * std::sin(4.0 * pi * s)};
        case TrajectoryKind::T3: {
            // Rounded rectangle on [7, 23]^2 with corner radius 3, counter-clockwise
            // from the middle of the bottom edge.
            constexpr double lo = 7.0, hi = 23.0, rad = 3.0;
            constexpr double edge = hi - lo - 2.0 * rad;
            constexpr double arc = 0.5 * pi * rad;
            constexpr double total = 4.0 * edge + 4.0 * arc;
            double u = (s - std::floor(s)) * total;
            // Segments: half bottom, corner, right, corner, top, corner, left, corner, half bottom.
            const double cx[4] = {hi - rad, hi - rad, lo + rad, lo + rad};
            const double cy[4] = {lo + rad, hi - rad, hi - rad, lo + rad};
            const auto corner = [&](int k, double t) {
                const double a = -0.5 * pi + 0.5 * pi * k + t / rad;
                return Vec2(cx[k] + rad * std::cos(a), cy[k] + rad * std::sin(a));
            };
            if (u < 0.5 * edge) return {15.0 + u, lo};
            u -= 0.5 * edge;
            if (u < arc) return corner(0, u);
            u -= arc;
            if (u < edge) return {hi, lo + rad + u};
            u -= edge;
            if (u < arc) return corner(1, u);
            u -= arc;
            if (u < edge) return {hi - rad - u, hi};
            u -= edge;
            if (u < arc) return corner(2, u);
            u -= arc;
            if (u < edge) return {lo, hi - rad - u};
            u -= edge;
            if (u < arc) return corner(3, u);
            u -= arc;
            return {lo + rad + u, lo};
        }
    }
    return {0.0, 0.0};
}

}  // namespace detail

struct Trajectory {
    std::vector<Vec2> positions;
    double length = 0.0;  // total closed-curve length, m
    double step_length() const { return positions.empty() ? 0.0 : length / static_cast<double>(positions.size()); }
};

/// Samples `steps` points at uniform arc-length increments over one period,
/// starting at the curve origin; the point after the last closes the loop.
///   T1: circle, radius 9, centered at (15, 15)
///   T2: figure-eight (Lissajous 1:2) spanning [6, 24]^2
///   T3: rounded rectangle perimeter on [7, 23]^2, corner radius 3
/// Consecutive points are at most length / steps apart.
inline Trajectory trajectory(TrajectoryKind kind, std::size_t steps) {
    if (steps < 1) throw std::invalid_argument("trajectory needs at least one step");
    constexpr std::size_t fine = 20000;
    std::vector<double> cum(fine + 1, 0.0);
    Vec2 prev = detail::trajectory_curve(kind, 0.0);
    for (std::size_t i = 1; i <= fine; ++i) {
        const Vec2 p = detail::trajectory_curve(kind, static_cast<double>(i) / fine);
        cum[i] = cum[i - 1] + (p - prev).norm();
        prev = p;
    }
    Trajectory tr;
    tr.length = cum.back();
    tr.positions.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double target = tr.length * static_cast<double>(k) / static_cast<double>(steps);
        const auto it = std::upper_bound(cum.begin(), cum.end(), target);
        const std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), fine);
        const std::size_t lo = hi - 1;
        const double seg = cum[hi] - cum[lo];
        const double frac = seg > 0.0 ? (target - cum[lo]) / seg : 0.0;
        tr.positions.push_back(
            detail::trajectory_curve(kind, (static_cast<double>(lo) + frac) / static_cast<double>(fine)));
    }
    return tr;
}

inline Trajectory trajectory(const ScenarioConfig &cfg) { return trajectory(cfg.trajectory, cfg.steps); }

// ---------------------------------------------------------------------------
// Case study 1: a noisy function on S^1.

/// Modified Bessel function I_0 by power series, summed until the relative
/// increment drops below 1e-15.
inline double bessel_i0(double x) {
    const double q = 0.25 * x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 500; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k));
        sum += term;
        if (term < 1e-15 * sum) break;
    }
    return sum;
}

inline double von_mises_pdf(double theta, double mu, double kappa) {
    return std::exp(kappa * std::cos(theta - mu)) / (2.0 * std::numbers::pi * bessel_i0(kappa));
}

/// Bingham density on S^1 with Z = diag(z, 0) in the frame of `axis`:
/// f(x) = exp(z (m^T x)^2) / (2 pi e^{z/2} I_0(z/2)),  m = (cos axis, sin axis).
inline double bingham_pdf(double theta, double axis, double z) {
    const double c = std::cos(theta - axis);
    return std::exp(z * c * c) / (2.0 * std::numbers::pi * std::exp(0.5 * z) * bessel_i0(0.5 * z));
}

struct CircularDensity {
    struct VonMises {
        double mu, kappa;
    };
    std::array<VonMises, 3> vm{{{0.0, 2.0}, {0.5 * std::numbers::pi, 4.0}, {4.0, 1.0}}};
    double bingham_axis = 1.0;
    double bingham_z = -3.0;
    double noise_variance = 0.0025;

    /// (1/3) sum f_vM + f_B.
    double mean(double theta) const {
        double v = 0.0;
        for (const auto &c : vm) v += von_mises_pdf(theta, c.mu, c.kappa);
        return v / 3.0 + bingham_pdf(theta, bingham_axis, bingham_z);
    }
};

inline double case_study_1_observe(double theta, const CircularDensity &f, Rng &rng) {
    if (!std::isfinite(theta)) throw std::invalid_argument("case_study_1_observe: non-finite angle");
    return f.mean(theta) + std::sqrt(f.noise_variance) * rng.normal();
}

// ---------------------------------------------------------------------------
// Case study 2: HvM kernel sweeps on the torus.

/// The four parameter sets: omega = 1; lambda = 0.3 (sets 1, 2) or 1 (sets 3, 4);
/// off-diagonal Lambda = 0 (sets 1, 3), 0.3 (set 2), 1 (set 4).
inline std::array<HvmHyperparams, 4> case_study_2_parameter_sets() {
    return {{{1.0, {0.3, 0.3}, {0.0}}, {1.0, {0.3, 0.3}, {0.3}}, {1.0, {1.0, 1.0}, {0.0}}, {1.0, {1.0, 1.0}, {1.0}}}};
}

struct KernelSweep {
    std::vector<double> alpha;   // row angles
    std::vector<double> beta;    // column angles
    Eigen::MatrixXd values;      // values(i, j) = k(u, v(alpha_i, beta_j))
    Eigen::MatrixXd normalized;  // values / max
};

/// k_hvm(u, v(alpha, beta)) with u at zero angle on both circles, over an
/// inclusive grid on [-pi, pi]^2 (so odd resolutions contain the origin).
inline KernelSweep case_study_2_sweep(const HvmHyperparams &params, std::size_t resolution) {
    if (resolution < 2) throw std::invalid_argument("sweep resolution must be at least 2");
    if (params.dim() != 2) throw DimensionMismatch("case study 2 sweeps live on the 2-torus");
    params.validate();
    KernelSweep sw;
    const auto r = static_cast<Eigen::Index>(resolution);
    for (std::size_t i = 0; i < resolution; ++i) {
        const double a = -std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(i) /
                                                 static_cast<double>(resolution - 1);
        sw.alpha.push_back(a);
        sw.beta.push_back(a);
    }
    const TorusPoint u = TorusPoint::from_angles({0.0, 0.0});
    sw.values.resize(r, r);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < r; ++j) {
            const TorusPoint v = TorusPoint::from_angles(
                {sw.alpha[static_cast<std::size_t>(i)], sw.beta[static_cast<std::size_t>(j)]});
            sw.values(i, j) = k_hvm(u, v, params);
        }
    }
    sw.normalized = sw.values / sw.values.maxCoeff();
    return sw;
}

}  // namespace hvmgp

#endif
