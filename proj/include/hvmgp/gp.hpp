#ifndef HVMGP_GP_HPP
#define HVMGP_GP_HPP

// Exact Gaussian-process regression with zero prior mean.
//
// Single output:  K = K_xx + s^2 I_n
// Multi output (intrinsic coregionalization):
//                 K = B (x) K_xx + R (x) I_n,   R = diag(s_1^2, ..., s_d^2)
// with observations stacked as vec([z_1, ..., z_n]^T): entry j*n + i holds
// output j of training point i. Test blocks use the same output-major order,
// so at one test point K_tx = B (x) k_tx and K_tt = k(x, x) B.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "errors.hpp"
#include "kernels.hpp"
#include "manifold.hpp"

namespace hvmgp {

struct PosteriorGaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

inline Eigen::MatrixXd kron(const Eigen::MatrixXd &A, const Eigen::MatrixXd &M) {
    Eigen::MatrixXd out(A.rows() * M.rows(), A.cols() * M.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            out.block(i * M.rows(), j * M.cols(), M.rows(), M.cols()) = A(i, j) * M;
        }
    }
    return out;
}

/// Jitter schedule relative to mean(diag K): none, then 1e-9, 1e-8, ... up to 1e-3.
struct JitterPolicy {
    double initial = 1e-9;
    double growth = 10.0;
    double maximum = 1e-3;
};

struct CholeskyFactor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;  // absolute amount added to the diagonal

    double log_det() const {
        const auto &L = llt.matrixLLT();
        double s = 0.0;
        for (Eigen::Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
        return 2.0 * s;
    }
};

/// Factorizes K, adding escalating diagonal jitter on failure.
inline CholeskyFactor factorize(const Eigen::MatrixXd &K, const std::string &kernel_name,
                                const JitterPolicy &policy = {}) {
    const double scale = K.diagonal().mean();
    CholeskyFactor f;
    f.llt.compute(K);
    if (f.llt.info() == Eigen::Success && std::isfinite(scale)) return f;

    const auto n = K.rows();
    for (double rel = policy.initial; rel <= policy.maximum * (1.0 + 1e-12); rel *= policy.growth) {
        f.jitter = rel * scale;
        f.llt.compute(K + f.jitter * Eigen::MatrixXd::Identity(n, n));
        if (f.llt.info() == Eigen::Success) return f;
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(K + policy.maximum * scale * Eigen::MatrixXd::Identity(n, n));
    throw NotPositiveDefinite(kernel_name, ldlt.vectorD().minCoeff());
}

class TrainedGp {
public:
    const std::vector<TorusPoint> &inputs() const { return inputs_; }
    /// Observations in vec order (length n*d).
    const Eigen::VectorXd &obs() const { return obs_; }
    const Kernel &kernel() const { return kernel_; }
    const Eigen::MatrixXd &coregionalization() const { return B_; }
    const Eigen::VectorXd &noise_variances() const { return noise_; }
    bool multi_output() const { return multi_; }
    std::size_t num_outputs() const { return static_cast<std::size_t>(B_.rows()); }
    std::size_t num_points() const { return inputs_.size(); }
    double jitter_used() const { return factor_.jitter; }
    const Eigen::MatrixXd &system_matrix() const { return K_; }
    const Eigen::LLT<Eigen::MatrixXd> &factor() const { return factor_.llt; }
    const Eigen::VectorXd &alpha() const { return alpha_; }
    const Eigen::MatrixXd &system_inverse() const { return Kinv_; }
    /// L^{-1} for K = L L^T.
    const Eigen::MatrixXd &factor_inverse() const { return Linv_; }

    /// Observations as an n x d matrix.
    Eigen::MatrixXd obs_matrix() const {
        return Eigen::Map<const Eigen::MatrixXd>(obs_.data(), static_cast<Eigen::Index>(num_points()),
                                                 static_cast<Eigen::Index>(num_outputs()));
    }

private:
    friend TrainedGp fit_impl(std::vector<TorusPoint>, Eigen::VectorXd, Kernel, Eigen::VectorXd,
                              Eigen::MatrixXd, bool, const JitterPolicy &);

    TrainedGp(Kernel k) : kernel_(std::move(k)) {}

    std::vector<TorusPoint> inputs_;
    Eigen::VectorXd obs_;
    Kernel kernel_;
    Eigen::MatrixXd B_;
    Eigen::VectorXd noise_;
    bool multi_ = false;
    Eigen::MatrixXd K_;
    CholeskyFactor factor_;
    Eigen::VectorXd alpha_;
    Eigen::MatrixXd Linv_;
    Eigen::MatrixXd Kinv_;
};

/// B (x) K_xx + R (x) I_n.
inline Eigen::MatrixXd system_matrix(const Eigen::MatrixXd &Kxx, const Eigen::MatrixXd &B,
                                     const Eigen::VectorXd &noise_var) {
    Eigen::MatrixXd K = kron(B, Kxx);
    const auto n = Kxx.rows();
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i) K(j * n + i, j * n + i) += noise_var[j];
    }
    return K;
}

inline Eigen::MatrixXd inverse_factor(const Eigen::LLT<Eigen::MatrixXd> &llt) {
    const auto N = llt.matrixLLT().rows();
    Eigen::MatrixXd Li = Eigen::MatrixXd::Identity(N, N);
    llt.matrixL().solveInPlace(Li);
    return Li;
}

/// K^{-1} from the triangular factor: L^{-T} L^{-1}.
inline Eigen::MatrixXd inverse_from_factor(const Eigen::LLT<Eigen::MatrixXd> &llt) {
    const Eigen::MatrixXd Li = inverse_factor(llt);
    Eigen::MatrixXd out(Li.rows(), Li.rows());
    out.noalias() = Li.transpose() * Li;
    return out;
}

inline TrainedGp fit_impl(std::vector<TorusPoint> inputs, Eigen::VectorXd obs, Kernel kernel,
                          Eigen::VectorXd noise_var, Eigen::MatrixXd B, bool multi, const JitterPolicy &policy) {
    if (inputs.empty()) throw std::invalid_argument("fit: need at least one training point");
    for (const auto &x : inputs) require_same_dim(x.dim(), kernel.dim(), "fit");
    const auto n = static_cast<Eigen::Index>(inputs.size());
    const auto d = B.rows();
    if (B.cols() != d || noise_var.size() != d) throw DimensionMismatch("fit: B must be d x d and R length d");
    if (obs.size() != n * d) throw DimensionMismatch("fit: observation vector must have length n*d");
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(noise_var[j] > 0.0)) throw std::invalid_argument("fit: noise variances must be positive");
    }
    if ((B - B.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + B.cwiseAbs().maxCoeff())) {
        throw std::invalid_argument("fit: coregionalization matrix must be symmetric");
    }

    TrainedGp gp(std::move(kernel));
    const Eigen::MatrixXd Kxx = gram(inputs, gp.kernel_);
    gp.K_ = system_matrix(Kxx, B, noise_var);
    gp.factor_ = factorize(gp.K_, gp.kernel_.name(), policy);
    gp.alpha_ = gp.factor_.llt.solve(obs);
    gp.Linv_ = inverse_factor(gp.factor_.llt);
    gp.Kinv_.noalias() = gp.Linv_.transpose() * gp.Linv_;
    gp.inputs_ = std::move(inputs);
    gp.obs_ = std::move(obs);
    gp.B_ = std::move(B);
    gp.noise_ = std::move(noise_var);
    gp.multi_ = multi;
    return gp;
}

/// Single-output fit: K = K_xx + noise_var I.
inline TrainedGp fit(std::vector<TorusPoint> inputs, Eigen::VectorXd obs, Kernel kernel, double noise_var,
                     const JitterPolicy &policy = {}) {
    return fit_impl(std::move(inputs), std::move(obs), std::move(kernel), Eigen::VectorXd::Constant(1, noise_var),
                    Eigen::MatrixXd::Identity(1, 1), false, policy);
}

/// Multi-output fit; `obs` is n x d with one row per training point.
inline TrainedGp fit(std::vector<TorusPoint> inputs, const Eigen::MatrixXd &obs, Kernel kernel,
                     Eigen::VectorXd noise_var, Eigen::MatrixXd B, const JitterPolicy &policy = {}) {
    if (obs.rows() != static_cast<Eigen::Index>(inputs.size()) || obs.cols() != B.rows()) {
        throw DimensionMismatch("fit: observation matrix must be n x d");
    }
    Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size());
    return fit_impl(std::move(inputs), std::move(z), std::move(kernel), std::move(noise_var), std::move(B), true,
                    policy);
}

/// Joint posterior of the latent function at `tests` (output-major order).
inline PosteriorGaussian predict(const TrainedGp &gp, std::span<const TorusPoint> tests) {
    if (tests.empty()) throw std::invalid_argument("predict: no test points");
    for (const auto &x : tests) require_same_dim(x.dim(), gp.kernel().dim(), "predict");
    const Eigen::MatrixXd &B = gp.coregionalization();
    const Eigen::MatrixXd Ktx = kron(B, gram(tests, gp.inputs(), gp.kernel()));
    const Eigen::MatrixXd Ktt = kron(B, gram(tests, gp.kernel()));

    PosteriorGaussian post;
    post.mean = Ktx * gp.alpha();
    Eigen::MatrixXd V = Ktx.transpose();
    gp.factor().matrixL().solveInPlace(V);
    post.cov = Ktt;
    post.cov.noalias() -= V.transpose() * V;
    post.cov = 0.5 * (post.cov + post.cov.transpose());
    return post;
}

inline PosteriorGaussian predict(const TrainedGp &gp, const TorusPoint &test) {
    return predict(gp, std::span<const TorusPoint>(&test, 1));
}

/// Adds observation noise (R (x) I_t) to the latent posterior.
inline PosteriorGaussian predict_observation(const TrainedGp &gp, std::span<const TorusPoint> tests) {
    PosteriorGaussian post = predict(gp, tests);
    const auto t = static_cast<Eigen::Index>(tests.size());
    for (Eigen::Index j = 0; j < gp.noise_variances().size(); ++j) {
        for (Eigen::Index i = 0; i < t; ++i) post.cov(j * t + i, j * t + i) += gp.noise_variances()[j];
    }
    return post;
}

inline PosteriorGaussian predict_observation(const TrainedGp &gp, const TorusPoint &test) {
    return predict_observation(gp, std::span<const TorusPoint>(&test, 1));
}

/// Per-point predictive observation distributions for many test points at
/// once. Each entry equals predict_observation(gp, tests[i]). Covariances
/// use V = L^{-1} (B (x) k_i), never K^{-1}: the explicit inverse cancels
/// catastrophically when the signal variance dwarfs the posterior variance.
inline std::vector<PosteriorGaussian> predict_observation_marginals(const TrainedGp &gp,
                                                                    std::span<const TorusPoint> tests) {
    if (tests.empty()) return {};
    const auto n = static_cast<Eigen::Index>(gp.num_points());
    const auto d = static_cast<Eigen::Index>(gp.num_outputs());
    const auto t = static_cast<Eigen::Index>(tests.size());
    const Eigen::MatrixXd &B = gp.coregionalization();
    const Eigen::MatrixXd Ktn = gram(tests, gp.inputs(), gp.kernel());
    const Eigen::Map<const Eigen::MatrixXd> A(gp.alpha().data(), n, d);
    const Eigen::MatrixXd means = (Ktn * A) * B.transpose();  // row i: B (k_i^T alpha_j)_j

    // M_l = L^{-1}[:, block l] K_nt, then V_j = sum_l B(l, j) M_l.
    const Eigen::MatrixXd &Li = gp.factor_inverse();
    std::vector<Eigen::MatrixXd> M(static_cast<std::size_t>(d));
    for (Eigen::Index l = 0; l < d; ++l) M[static_cast<std::size_t>(l)].noalias() = Li.middleCols(l * n, n) * Ktn.transpose();
    std::vector<Eigen::MatrixXd> V(static_cast<std::size_t>(d), Eigen::MatrixXd::Zero(n * d, t));
    for (Eigen::Index j = 0; j < d; ++j) {
        for (Eigen::Index l = 0; l < d; ++l) V[static_cast<std::size_t>(j)] += B(l, j) * M[static_cast<std::size_t>(l)];
    }

    const double prior = gp.kernel().prior_variance();
    std::vector<PosteriorGaussian> out(static_cast<std::size_t>(t));
    for (Eigen::Index i = 0; i < t; ++i) {
        auto &o = out[static_cast<std::size_t>(i)];
        o.mean = means.row(i).transpose();
        o.cov = prior * B;
        for (Eigen::Index j = 0; j < d; ++j) {
            for (Eigen::Index k = 0; k <= j; ++k) {
                const double q = V[static_cast<std::size_t>(j)].col(i).dot(V[static_cast<std::size_t>(k)].col(i));
                o.cov(j, k) -= q;
                if (k != j) o.cov(k, j) -= q;
            }
        }
        o.cov = 0.5 * (o.cov + o.cov.transpose());
        o.cov.diagonal() += gp.noise_variances();
    }
    return out;
}

/// log N(z; mean, cov) for a Gaussian given by mean/cov.
inline double gaussian_log_density(const PosteriorGaussian &g, const Eigen::VectorXd &z) {
    require_same_dim(static_cast<std::size_t>(z.size()), static_cast<std::size_t>(g.mean.size()), "log density");
    const Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
    if (llt.info() != Eigen::Success) throw SingularCovariance("predictive covariance is numerically singular");
    const auto &L = llt.matrixLLT();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
        if (!(L(i, i) > 0.0)) throw SingularCovariance("predictive covariance is numerically singular");
        logdet += 2.0 * std::log(L(i, i));
    }
    Eigen::VectorXd r = z - g.mean;
    llt.matrixL().solveInPlace(r);
    return -0.5 * (r.squaredNorm() + logdet + static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi));
}

/// Log predictive density of observation z at one test point.
inline double log_likelihood(const TrainedGp &gp, const TorusPoint &point, const Eigen::VectorXd &z) {
    return gaussian_log_density(predict_observation(gp, point), z);
}

}  // namespace hvmgp

#endif
