#ifndef HVMGP_HYPEROPT_HPP
#define HVMGP_HYPEROPT_HPP

// Maximum marginal likelihood for the models in gp.hpp.
//
// Objective (twice the log marginal likelihood):
//   F(theta) = -z^T K^{-1} z - log|K| - N log(2 pi),   N = n*d
// Gradient per natural coordinate:
//   dF/dtheta_i = z^T K^{-1} dK K^{-1} z - tr(K^{-1} dK) = <a a^T - K^{-1}, dK>,   a = K^{-1} z
// with
//   dK/domega     = (2/omega) B (x) K_xx
//   dK/dlambda_s  = B (x) (K_xx o D^s)
//   dK/da_p       = 2 B (x) (K_xx o D^i o D^j)          pair p = (i, j)
//   dK/db_ij      = E_ij (x) K_xx
//   dK/dsigma_s   = 2 sigma_s E_ss (x) I_n
//
// Natural coordinates theta = [kernel..., vec(B) (multi-output only), sigma_1..d].
// Unconstrained coordinates phi used by the optimizer:
//   kernel parameters and noise deviations: phi = log(theta)
//   B = G G^T with G lower triangular; phi holds G's lower triangle column by column.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "gp.hpp"
#include "kernels.hpp"

namespace hvmgp {

struct ModelSpec {
    KernelKind kernel = KernelKind::hvm;
    std::size_t circles = 3;  // m
    std::size_t outputs = 1;  // d
    bool multi_output = false;

    void validate() const {
        if (circles == 0) throw std::invalid_argument("model needs at least one circle");
        if (!multi_output && outputs != 1) throw std::invalid_argument("single-output model must have d = 1");
        if (outputs == 0) throw std::invalid_argument("model needs at least one output");
    }
};

struct TrainingData {
    std::vector<TorusPoint> inputs;
    Eigen::MatrixXd obs;  // n x d

    Eigen::VectorXd stacked() const { return Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size()); }
};

/// Natural hyperparameters of a model.
struct Theta {
    std::vector<double> kernel;
    Eigen::MatrixXd B;      // d x d; [1] for single-output models
    Eigen::VectorXd sigma;  // observation noise deviations, length d

    Kernel make_kernel(const ModelSpec &spec) const { return Kernel::from_natural(spec.kernel, spec.circles, kernel); }
    Eigen::VectorXd noise_variances() const { return sigma.cwiseProduct(sigma); }

    /// Flat natural vector [kernel..., vec(B) if multi, sigma...].
    Eigen::VectorXd flat(const ModelSpec &spec) const {
        const auto nk = static_cast<Eigen::Index>(kernel.size());
        const Eigen::Index nb = spec.multi_output ? B.size() : 0;
        Eigen::VectorXd v(nk + nb + sigma.size());
        for (Eigen::Index i = 0; i < nk; ++i) v[i] = kernel[static_cast<std::size_t>(i)];
        if (nb) v.segment(nk, nb) = Eigen::Map<const Eigen::VectorXd>(B.data(), nb);
        v.tail(sigma.size()) = sigma;
        return v;
    }
};

inline std::vector<std::string> theta_names(const ModelSpec &spec) {
    auto names = Kernel::natural_names(spec.kernel, spec.circles);
    if (spec.multi_output) {
        for (std::size_t j = 0; j < spec.outputs; ++j) {
            for (std::size_t i = 0; i < spec.outputs; ++i) {
                names.push_back("b_" + std::to_string(i + 1) + std::to_string(j + 1));
            }
        }
    }
    for (std::size_t s = 0; s < spec.outputs; ++s) names.push_back("sigma_r_" + std::to_string(s + 1));
    return names;
}

/// Factorization failure while evaluating the objective; carries the offending theta.
class ObjectiveError : public std::runtime_error {
public:
    ObjectiveError(const std::string &what, Eigen::VectorXd theta)
        : std::runtime_error(what), theta_(std::move(theta)) {}
    const Eigen::VectorXd &theta() const { return theta_; }

private:
    Eigen::VectorXd theta_;
};

struct Evaluation {
    double value = 0.0;
    Eigen::VectorXd gradient;  // natural coordinates; empty when not requested
};

inline Evaluation evaluate(const Theta &theta, const TrainingData &data, const ModelSpec &spec, bool with_gradient,
                           const JitterPolicy &policy = {}) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(data.inputs.size());
    const auto d = static_cast<Eigen::Index>(spec.outputs);
    if (data.obs.rows() != n || data.obs.cols() != d) throw DimensionMismatch("training data shape mismatch");

    Kernel kernel = theta.make_kernel(spec);
    const Eigen::MatrixXd Kxx = gram(data.inputs, kernel);
    const Eigen::MatrixXd K = system_matrix(Kxx, theta.B, theta.noise_variances());
    const Eigen::VectorXd z = data.stacked();

    CholeskyFactor f;
    try {
        f = factorize(K, kernel.name(), policy);
    } catch (const NotPositiveDefinite &e) {
        throw ObjectiveError(e.what(), theta.flat(spec));
    }
    const Eigen::VectorXd alpha = f.llt.solve(z);
    const auto N = static_cast<double>(z.size());

    Evaluation ev;
    ev.value = -z.dot(alpha) - f.log_det() - N * std::log(2.0 * std::numbers::pi);
    if (!with_gradient) return ev;

    // Omega = a a^T - K^{-1}; each gradient entry is <Omega, dK>.
    Eigen::MatrixXd Omega = inverse_from_factor(f.llt);
    Omega = alpha * alpha.transpose() - Omega;

    const auto block = [&](Eigen::Index j, Eigen::Index k) { return Omega.block(j * n, k * n, n, n); };

    // Kernel coordinates: <Omega, B (x) M> = <sum_jk B_jk Omega_jk, M>.
    Eigen::MatrixXd Wsum = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index k = 0; k < d; ++k) Wsum += theta.B(j, k) * block(j, k);
    }
    const auto dKxx = gram_derivatives(data.inputs, kernel, Kxx);

    const auto nk = static_cast<Eigen::Index>(dKxx.size());
    const Eigen::Index nb = spec.multi_output ? d * d : 0;
    ev.gradient.resize(nk + nb + d);
    for (Eigen::Index t = 0; t < nk; ++t) ev.gradient[t] = Wsum.cwiseProduct(dKxx[static_cast<std::size_t>(t)]).sum();

    if (spec.multi_output) {
        // b_s = B_ij with s = d*(j-1) + i: <Omega, E_ij (x) K_xx> = <Omega_ij, K_xx>.
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index i = 0; i < d; ++i) ev.gradient[nk + j * d + i] = block(i, j).cwiseProduct(Kxx).sum();
        }
    }
    for (Eigen::Index s = 0; s < d; ++s) {
        ev.gradient[nk + nb + s] = 2.0 * theta.sigma[s] * block(s, s).trace();
    }
    return ev;
}

inline double objective(const Theta &theta, const TrainingData &data, const ModelSpec &spec) {
    return evaluate(theta, data, spec, false).value;
}

inline Eigen::VectorXd gradient(const Theta &theta, const TrainingData &data, const ModelSpec &spec) {
    return evaluate(theta, data, spec, true).gradient;
}

/// Bijection between free unconstrained coordinates phi and natural Theta.
/// Kernel coordinates may be frozen at fixed natural values (including 0).
class ParamTransform {
public:
    explicit ParamTransform(ModelSpec spec, std::vector<std::pair<std::size_t, double>> frozen_kernel = {})
        : spec_(spec), frozen_(std::move(frozen_kernel)) {
        spec_.validate();
        nk_ = Kernel::num_natural(spec_.kernel, spec_.circles);
        free_.assign(nk_, true);
        for (const auto &[idx, value] : frozen_) {
            if (idx >= nk_) throw std::invalid_argument("frozen coordinate out of range");
            free_[idx] = false;
        }
    }

    const ModelSpec &spec() const { return spec_; }

    std::size_t num_kernel_free() const { return static_cast<std::size_t>(std::count(free_.begin(), free_.end(), true)); }
    std::size_t num_factor() const { return spec_.multi_output ? spec_.outputs * (spec_.outputs + 1) / 2 : 0; }
    std::size_t size() const { return num_kernel_free() + num_factor() + spec_.outputs; }

    Theta to_theta(const Eigen::VectorXd &phi) const {
        if (static_cast<std::size_t>(phi.size()) != size()) throw DimensionMismatch("phi has the wrong length");
        Theta t;
        t.kernel.assign(nk_, 0.0);
        Eigen::Index k = 0;
        for (std::size_t i = 0; i < nk_; ++i) t.kernel[i] = free_[i] ? std::exp(phi[k++]) : frozen_value(i);
        const auto d = static_cast<Eigen::Index>(spec_.outputs);
        if (spec_.multi_output) {
            const Eigen::MatrixXd G = factor_from(phi, k);
            k += static_cast<Eigen::Index>(num_factor());
            t.B = G * G.transpose();
        } else {
            t.B = Eigen::MatrixXd::Identity(1, 1);
        }
        t.sigma = phi.segment(k, d).array().exp();
        return t;
    }

    /// Requires strictly positive free kernel values and positive-definite B.
    Eigen::VectorXd to_phi(const Theta &t) const {
        Eigen::VectorXd phi(static_cast<Eigen::Index>(size()));
        Eigen::Index k = 0;
        for (std::size_t i = 0; i < nk_; ++i) {
            if (free_[i]) phi[k++] = std::log(t.kernel[i]);
        }
        if (spec_.multi_output) {
            const Eigen::LLT<Eigen::MatrixXd> llt(t.B);
            if (llt.info() != Eigen::Success) throw std::invalid_argument("B must be positive definite to map to phi");
            const Eigen::MatrixXd G = llt.matrixL();
            for (Eigen::Index j = 0; j < G.cols(); ++j) {
                for (Eigen::Index i = j; i < G.rows(); ++i) phi[k++] = G(i, j);
            }
        }
        phi.segment(k, t.sigma.size()) = t.sigma.array().log();
        return phi;
    }

    /// Chain rule: natural gradient -> gradient in free phi.
    Eigen::VectorXd pullback(const Eigen::VectorXd &phi, const Theta &t, const Eigen::VectorXd &grad_theta) const {
        Eigen::VectorXd g(static_cast<Eigen::Index>(size()));
        Eigen::Index k = 0;
        for (std::size_t i = 0; i < nk_; ++i) {
            if (free_[i]) g[k++] = grad_theta[static_cast<Eigen::Index>(i)] * t.kernel[i];
        }
        const auto d = static_cast<Eigen::Index>(spec_.outputs);
        Eigen::Index nb = 0;
        if (spec_.multi_output) {
            nb = d * d;
            const Eigen::MatrixXd S = Eigen::Map<const Eigen::MatrixXd>(
                grad_theta.data() + static_cast<Eigen::Index>(nk_), d, d);
            const Eigen::MatrixXd G = factor_from(phi, k);
            // B = G G^T  =>  dF/dG = (S + S^T) G.
            const Eigen::MatrixXd dG = (S + S.transpose()) * G;
            for (Eigen::Index j = 0; j < d; ++j) {
                for (Eigen::Index i = j; i < d; ++i) g[k++] = dG(i, j);
            }
        }
        for (Eigen::Index s = 0; s < d; ++s) {
            g[k++] = grad_theta[static_cast<Eigen::Index>(nk_) + nb + s] * t.sigma[s];
        }
        return g;
    }

private:
    double frozen_value(std::size_t i) const {
        for (const auto &[idx, v] : frozen_) {
            if (idx == i) return v;
        }
        return 0.0;
    }

    Eigen::MatrixXd factor_from(const Eigen::VectorXd &phi, Eigen::Index offset) const {
        const auto d = static_cast<Eigen::Index>(spec_.outputs);
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index i = j; i < d; ++i) G(i, j) = phi[offset++];
        }
        return G;
    }

    ModelSpec spec_;
    std::vector<std::pair<std::size_t, double>> frozen_;
    std::vector<bool> free_;
    std::size_t nk_ = 0;
};

/// Scale-aware starting point: omega = std(obs), lambda/lengthscale = 1,
/// corr = 0.1, B = sample output covariance (projected to PD), sigma = 0.1 std.
inline Theta default_initial_theta(const TrainingData &data, const ModelSpec &spec) {
    const Eigen::MatrixXd &Z = data.obs;
    const double nz = static_cast<double>(Z.size());
    const double mean_all = Z.mean();
    double std_all = std::sqrt((Z.array() - mean_all).square().sum() / std::max(1.0, nz - 1.0));
    if (!(std_all > 0.0)) std_all = 1.0;

    Theta t;
    t.kernel.assign(Kernel::num_natural(spec.kernel, spec.circles), 1.0);
    t.kernel[0] = std_all;
    if (spec.kernel == KernelKind::hvm) {
        for (std::size_t p = 0; p < num_pairs(spec.circles); ++p) t.kernel[1 + spec.circles + p] = 0.1;
    }

    const auto d = Z.cols();
    const double rows = static_cast<double>(Z.rows());
    const Eigen::RowVectorXd mu = Z.colwise().mean();
    const Eigen::MatrixXd C = Z.rowwise() - mu;
    Eigen::MatrixXd cov = (C.transpose() * C) / std::max(1.0, rows - 1.0);
    t.sigma.resize(d);
    for (Eigen::Index s = 0; s < d; ++s) {
        const double sd = std::sqrt(cov(s, s));
        t.sigma[s] = sd > 0.0 ? 0.1 * sd : 0.1;
    }
    if (spec.multi_output) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        Eigen::VectorXd ev = es.eigenvalues();
        const double floor = std::max(1e-6 * std::max(ev.maxCoeff(), 0.0), 1e-12);
        ev = ev.cwiseMax(floor);
        t.B = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        t.B = 0.5 * (t.B + t.B.transpose());
    } else {
        t.B = Eigen::MatrixXd::Identity(1, 1);
    }
    return t;
}

struct OptimizeOptions {
    std::size_t max_iterations = 200;  // per restart, >= 1
    std::size_t restarts = 4;
    std::uint64_t seed = 0;
    double restart_spread = 0.5;        // std of the phi perturbation for restarts 2..k
    double max_step = 2.0;              // largest |delta phi| component per iteration
    double rel_tol = 1e-6;              // stop on |dF| < rel_tol * max(1, |F|)
    double grad_tol = 1e-5;             // stop on |grad_phi| < grad_tol * (1 + |F|)
    double stationarity_tol = 1e-4;     // converged iff |grad_phi| < this * (1 + |F|) at exit
    std::size_t memory = 10;
    std::optional<Theta> initial;
    std::vector<std::pair<std::size_t, double>> frozen_kernel;
    JitterPolicy jitter;
};

struct OptResult {
    Theta theta;
    double value = -std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    std::vector<double> trace;  // accepted objective values of the winning restart
    std::size_t best_restart = 0;
    std::vector<double> restart_values;
    std::string stop_reason;
};

namespace detail {

struct PhiEval {
    double value;
    Eigen::VectorXd grad;  // in phi
    Theta theta;
};

inline std::optional<PhiEval> eval_phi(const Eigen::VectorXd &phi, const ParamTransform &tr, const TrainingData &data,
                                       const JitterPolicy &policy) {
    if (!phi.allFinite()) return std::nullopt;
    Theta t = tr.to_theta(phi);
    for (double v : t.kernel) {
        if (!std::isfinite(v)) return std::nullopt;
    }
    try {
        const Evaluation ev = evaluate(t, data, tr.spec(), true, policy);
        if (!std::isfinite(ev.value) || !ev.gradient.allFinite()) return std::nullopt;
        Eigen::VectorXd g = tr.pullback(phi, t, ev.gradient);
        return PhiEval{ev.value, std::move(g), std::move(t)};
    } catch (const ObjectiveError &) {
        return std::nullopt;
    }
}

// One monotone L-BFGS ascent run with backtracking (Armijo) and a step cap.
inline OptResult ascend(Eigen::VectorXd phi, const ParamTransform &tr, const TrainingData &data,
                        const OptimizeOptions &opt) {
    OptResult res;
    auto cur = eval_phi(phi, tr, data, opt.jitter);
    if (!cur) {
        res.stop_reason = "initial point not factorizable";
        return res;
    }
    res.trace.push_back(cur->value);

    std::vector<Eigen::VectorXd> S, Y;
    const auto stationary = [&](const PhiEval &e, double tol) {
        return e.grad.norm() < tol * (1.0 + std::abs(e.value));
    };

    std::size_t it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (stationary(*cur, opt.grad_tol)) {
            res.stop_reason = "gradient";
            break;
        }
        // Two-loop recursion on the negated objective, returned as an ascent direction.
        Eigen::VectorXd q = cur->grad;
        std::vector<double> a(S.size());
        for (std::size_t i = S.size(); i-- > 0;) {
            a[i] = S[i].dot(q) / Y[i].dot(S[i]);
            q -= a[i] * Y[i];
        }
        if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double b = Y[i].dot(q) / Y[i].dot(S[i]);
            q += (a[i] - b) * S[i];
        }
        Eigen::VectorXd dir = q;
        if (!(dir.dot(cur->grad) > 0.0) || !dir.allFinite()) {
            dir = cur->grad;
            S.clear();
            Y.clear();
        }
        double step = S.empty() ? std::min(1.0, 1.0 / std::max(cur->grad.norm(), 1e-300)) : 1.0;
        const double maxc = dir.cwiseAbs().maxCoeff() * step;
        if (maxc > opt.max_step) step *= opt.max_step / maxc;

        const double slope = dir.dot(cur->grad);
        std::optional<PhiEval> next;
        Eigen::VectorXd trial;
        for (int ls = 0; ls < 40; ++ls) {
            trial = phi + step * dir;
            next = eval_phi(trial, tr, data, opt.jitter);
            if (next && next->value >= cur->value + 1e-4 * step * slope && next->value >= cur->value) break;
            next.reset();
            step *= 0.5;
        }
        if (!next) {
            if (!S.empty()) {  // retry once from steepest ascent
                S.clear();
                Y.clear();
                continue;
            }
            res.stop_reason = "line search";
            break;
        }

        const Eigen::VectorXd s = trial - phi;
        const Eigen::VectorXd y = cur->grad - next->grad;  // gradient of -F changes by -(g_new - g_old)
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            if (S.size() > opt.memory) {
                S.erase(S.begin());
                Y.erase(Y.begin());
            }
        }
        const double change = next->value - cur->value;
        phi = trial;
        cur = std::move(next);
        res.trace.push_back(cur->value);
        if (std::abs(change) < opt.rel_tol * std::max(1.0, std::abs(cur->value))) {
            ++it;
            res.stop_reason = "objective change";
            break;
        }
    }
    if (res.stop_reason.empty()) res.stop_reason = "budget";

    res.iterations = it;
    res.value = cur->value;
    res.theta = cur->theta;
    res.gradient_norm = cur->grad.norm();
    res.converged = stationary(*cur, opt.stationarity_tol);
    return res;
}

}  // namespace detail

/// Multi-start maximization of F. Restart 1 starts at the initial theta
/// (default_initial_theta unless given); the others perturb it in phi with
/// a generator seeded from `seed`. Deterministic for a fixed seed.
inline OptResult optimize(const TrainingData &data, const ModelSpec &spec, const OptimizeOptions &opt = {}) {
    if (opt.max_iterations < 1) throw std::invalid_argument("optimize: budget must be at least one iteration");
    const ParamTransform tr(spec, opt.frozen_kernel);
    Theta init = opt.initial ? *opt.initial : default_initial_theta(data, spec);
    for (const auto &[idx, v] : opt.frozen_kernel) init.kernel[idx] = v;
    const Eigen::VectorXd phi0 = tr.to_phi(init);

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, opt.restart_spread);

    OptResult best;
    bool any = false;
    const std::size_t restarts = std::max<std::size_t>(1, opt.restarts);
    std::vector<double> values;
    for (std::size_t r = 0; r < restarts; ++r) {
        Eigen::VectorXd phi = phi0;
        if (r > 0) {
            for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] += normal(rng);
        }
        OptResult run = detail::ascend(phi, tr, data, opt);
        values.push_back(run.trace.empty() ? -std::numeric_limits<double>::infinity() : run.value);
        if (run.trace.empty()) continue;
        if (!any || run.value > best.value) {
            best = std::move(run);
            best.best_restart = r;
            any = true;
        }
    }
    if (!any) {
        throw ObjectiveError("optimize: every restart failed to factorize the kernel matrix", init.flat(spec));
    }
    best.restart_values = std::move(values);
    return best;
}

/// Fits the GP at the given hyperparameters.
inline TrainedGp fit_model(const TrainingData &data, const ModelSpec &spec, const Theta &theta,
                           const JitterPolicy &policy = {}) {
    if (spec.multi_output) {
        return fit(data.inputs, data.obs, theta.make_kernel(spec), theta.noise_variances(), theta.B, policy);
    }
    return fit(data.inputs, Eigen::VectorXd(data.obs.col(0)), theta.make_kernel(spec), theta.sigma[0] * theta.sigma[0],
               policy);
}

}  // namespace hvmgp

#endif
