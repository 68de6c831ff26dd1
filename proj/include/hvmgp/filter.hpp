#ifndef HVMGP_FILTER_HPP
#define HVMGP_FILTER_HPP

// Bootstrap particle filter for the random-walk agent. Each step propagates
// the particles through the dynamics, reweights them by a measurement
// likelihood (a trained GP queried at the particle's AoA point, or the
// parametric range model), and resamples systematically.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "gp.hpp"
#include "manifold.hpp"
#include "random.hpp"
#include "simulator.hpp"

namespace hvmgp {

enum class Method { HvM, PvM, PPRD, PSE, Parametric };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::HvM: return "HvM";
        case Method::PvM: return "PvM";
        case Method::PPRD: return "PPRD";
        case Method::PSE: return "PSE";
        case Method::Parametric: return "Parametric";
    }
    return "?";
}

inline Method method_from_string(const std::string &s) {
    std::string l = s;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (l == "hvm") return Method::HvM;
    if (l == "pvm") return Method::PvM;
    if (l == "pprd") return Method::PPRD;
    if (l == "pse") return Method::PSE;
    if (l == "parametric") return Method::Parametric;
    throw std::invalid_argument("unknown method '" + s + "'");
}

inline KernelKind kernel_for(Method m) {
    switch (m) {
        case Method::HvM: return KernelKind::hvm;
        case Method::PvM: return KernelKind::pvm;
        case Method::PPRD: return KernelKind::pprd;
        case Method::PSE: return KernelKind::pse;
        case Method::Parametric: break;
    }
    throw std::invalid_argument("the parametric method has no kernel");
}

inline const std::vector<Method> &all_methods() {
    static const std::vector<Method> m{Method::HvM, Method::PvM, Method::PPRD, Method::PSE, Method::Parametric};
    return m;
}

struct ParticleSet {
    std::vector<Vec2> positions;
    std::vector<double> weights;

    std::size_t size() const { return positions.size(); }

    Vec2 mean() const {
        Vec2 m = Vec2::Zero();
        for (std::size_t i = 0; i < positions.size(); ++i) m += weights[i] * positions[i];
        return m;
    }
};

/// Log-likelihood of one range measurement at many candidate positions.
class MeasurementModel {
public:
    virtual ~MeasurementModel() = default;
    virtual std::vector<double> log_likelihoods(std::span<const Vec2> positions, const Eigen::VectorXd &z) const = 0;
};

/// Predictive observation density of a trained GP at each particle's AoA point.
class GpMeasurementModel final : public MeasurementModel {
public:
    GpMeasurementModel(std::shared_ptr<const TrainedGp> gp, std::vector<Vec2> references)
        : gp_(std::move(gp)), refs_(std::move(references)) {}

    std::vector<double> log_likelihoods(std::span<const Vec2> positions, const Eigen::VectorXd &z) const override {
        std::vector<double> out(positions.size(), -std::numeric_limits<double>::infinity());
        std::vector<TorusPoint> pts;
        std::vector<std::size_t> idx;
        pts.reserve(positions.size());
        for (std::size_t i = 0; i < positions.size(); ++i) {
            try {
                pts.push_back(aoa_embedding(positions[i], refs_));
                idx.push_back(i);
            } catch (const SingularityError &) {
            }
        }
        const auto pred = predict_observation_marginals(*gp_, pts);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            try {
                out[idx[k]] = gaussian_log_density(pred[k], z);
            } catch (const SingularCovariance &) {
            }
        }
        return out;
    }

    const TrainedGp &gp() const { return *gp_; }

private:
    std::shared_ptr<const TrainedGp> gp_;
    std::vector<Vec2> refs_;
};

/// z ~ N(h(x) + bias, cov), with bias and cov the sample mean and covariance
/// of training residuals z_i - h(x_i). Ignores where the residual came from.
class ParametricModel final : public MeasurementModel {
public:
    ParametricModel(Eigen::VectorXd bias, Eigen::MatrixXd cov, std::vector<Vec2> references)
        : bias_(std::move(bias)), cov_(std::move(cov)), refs_(std::move(references)), llt_(cov_) {
        if (llt_.info() != Eigen::Success) throw SingularCovariance("parametric model covariance is singular");
        const auto &L = llt_.matrixLLT();
        log_norm_ = static_cast<double>(bias_.size()) * std::log(2.0 * std::numbers::pi);
        for (Eigen::Index i = 0; i < L.rows(); ++i) log_norm_ += 2.0 * std::log(L(i, i));
    }

    static ParametricModel fit(std::span<const Vec2> positions, const Eigen::MatrixXd &obs,
                               std::vector<Vec2> references) {
        const auto n = static_cast<Eigen::Index>(positions.size());
        if (n < 2 || obs.rows() != n) throw DimensionMismatch("parametric fit needs >= 2 matching rows");
        Eigen::MatrixXd res(n, obs.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            res.row(i) = obs.row(i) - ranges(positions[static_cast<std::size_t>(i)], references).transpose();
        }
        const Eigen::VectorXd bias = res.colwise().mean().transpose();
        const Eigen::MatrixXd C = res.rowwise() - bias.transpose();
        const Eigen::MatrixXd cov = C.transpose() * C / static_cast<double>(n - 1);
        return ParametricModel(bias, cov, std::move(references));
    }

    const Eigen::VectorXd &bias() const { return bias_; }
    const Eigen::MatrixXd &cov() const { return cov_; }

    std::vector<double> log_likelihoods(std::span<const Vec2> positions, const Eigen::VectorXd &z) const override {
        std::vector<double> out(positions.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < positions.size(); ++i) {
            Eigen::VectorXd r;
            try {
                r = z - ranges(positions[i], refs_) - bias_;
            } catch (const SingularityError &) {
                continue;
            }
            llt_.matrixL().solveInPlace(r);
            out[i] = -0.5 * (r.squaredNorm() + log_norm_);
        }
        return out;
    }

private:
    Eigen::VectorXd bias_;
    Eigen::MatrixXd cov_;
    std::vector<Vec2> refs_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double log_norm_ = 0.0;
};

/// Systematic resampling: one uniform offset, N evenly spaced pointers into
/// the cumulative weights. Returns the selected ancestor indices.
inline std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng &rng) {
    const std::size_t n = weights.size();
    std::vector<std::size_t> out(n);
    if (n == 0) return out;
    const double u0 = rng.uniform() / static_cast<double>(n);
    double cum = weights[0];
    std::size_t i = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = u0 + static_cast<double>(k) / static_cast<double>(n);
        while (u > cum && i + 1 < n) cum += weights[++i];
        out[k] = i;
    }
    return out;
}

/// Normalizes in place from log weights with a max shift; false if no
/// weight is finite.
inline bool normalize_log_weights(std::span<const double> logw, std::vector<double> &w) {
    w.resize(logw.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (double l : logw) {
        if (std::isfinite(l)) mx = std::max(mx, l);
    }
    if (!std::isfinite(mx)) return false;
    double sum = 0.0;
    for (std::size_t i = 0; i < logw.size(); ++i) {
        w[i] = std::isfinite(logw[i]) ? std::exp(logw[i] - mx) : 0.0;
        sum += w[i];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) return false;
    for (double &x : w) x /= sum;
    return true;
}

inline ParticleSet initial_particles(const Vec2 &center, std::size_t n, Rng &rng) {
    ParticleSet ps;
    ps.positions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rng.normal();
        const double dy = rng.normal();
        ps.positions.emplace_back(center.x() + dx, center.y() + dy);
    }
    ps.weights.assign(n, 1.0 / static_cast<double>(n));
    return ps;
}

struct StepOutcome {
    ParticleSet particles;  // after resampling, uniform weights
    ParticleSet weighted;   // after reweighting, before resampling
    Vec2 estimate;          // weighted mean of `weighted`
    bool diverged = false;  // every weight vanished; uniform reset applied
};

inline StepOutcome step(const ParticleSet &prior, const Eigen::VectorXd &z, const MeasurementModel &model,
                        const Eigen::Matrix2d &Q, Rng &rng) {
    if (prior.size() == 0) throw std::invalid_argument("step: empty particle set");
    StepOutcome out;
    out.weighted.positions.reserve(prior.size());
    for (const auto &p : prior.positions) out.weighted.positions.push_back(simulate_dynamics(p, Q, rng));

    std::vector<double> logw = model.log_likelihoods(out.weighted.positions, z);
    for (std::size_t i = 0; i < logw.size(); ++i) {
        logw[i] += prior.weights[i] > 0.0 ? std::log(prior.weights[i]) : -std::numeric_limits<double>::infinity();
    }
    if (!normalize_log_weights(logw, out.weighted.weights)) {
        out.diverged = true;
        out.weighted.weights.assign(prior.size(), 1.0 / static_cast<double>(prior.size()));
    }
    out.estimate = out.weighted.mean();

    const auto ancestors = systematic_resample(out.weighted.weights, rng);
    out.particles.positions.reserve(prior.size());
    for (auto a : ancestors) out.particles.positions.push_back(out.weighted.positions[a]);
    out.particles.weights.assign(prior.size(), 1.0 / static_cast<double>(prior.size()));
    return out;
}

struct TrackingResult {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<Vec2> truth;
    std::vector<Vec2> estimates;
    std::vector<double> ape;
    double rmse = 0.0;
    bool diverged = false;
    std::size_t divergence_events = 0;
};

struct FilterOptions {
    std::size_t particles = 100;
    double initial_spread = 1.0;  // std of the initial cloud around the first true position, m
};

/// One filtering pass along cfg's trajectory. Measurements come from
/// `measurement_seed` (shared across methods for common random numbers),
/// filter randomness from `filter_seed`.
inline TrackingResult run_tracking(const ScenarioConfig &cfg, const std::string &method_tag,
                                   const MeasurementModel &model, std::uint64_t measurement_seed,
                                   std::uint64_t filter_seed, const FilterOptions &opt = {}) {
    cfg.validate();
    const Trajectory traj = trajectory(cfg);
    Rng meas_rng(measurement_seed);
    Rng rng(filter_seed);

    TrackingResult res;
    res.method = method_tag;
    res.seed = measurement_seed;
    res.truth = traj.positions;

    ParticleSet ps = initial_particles(traj.positions.front(), opt.particles, rng);
    if (opt.initial_spread != 1.0) {
        for (auto &p : ps.positions) {
            p = traj.positions.front() + opt.initial_spread * (p - traj.positions.front());
        }
    }
    double sq = 0.0;
    for (const auto &x : traj.positions) {
        const Eigen::VectorXd z = measure_range(x, cfg, meas_rng);
        StepOutcome o = step(ps, z, model, cfg.process_cov, rng);
        if (o.diverged) {
            res.diverged = true;
            ++res.divergence_events;
        }
        res.estimates.push_back(o.estimate);
        const double e = (o.estimate - x).norm();
        res.ape.push_back(e);
        sq += e * e;
        ps = std::move(o.particles);
    }
    res.rmse = std::sqrt(sq / static_cast<double>(res.ape.size()));
    return res;
}

}  // namespace hvmgp

#endif
