#ifndef HVMGP_KERNELS_HPP
#define HVMGP_KERNELS_HPP

// Covariance functions on circles and hypertori.
//
//   k_vm(u, v)  = w^2 exp(lambda u^T v)                          (u, v on S^1)
//   k_hvm(u, v) = w^2 exp(lambda^T d + d^T Lambda d),  d_s = (u^s)^T v^s
//
// Lambda is hollow and symmetric and is stored as its upper triangle `corr`,
// so d^T Lambda d = 2 sum_{pairs (i,j)} corr_ij d_i d_j. Pair order groups
// pairs by index offset: (1,2),(2,3),...,(m-1,m),(1,3),(2,4),... which for
// m = 3 is (1,2),(2,3),(1,3), the cyclic pairing (s, s mod 3 + 1).
//
// Baselines are products of per-circle kernels on the canonical angle chart
// theta in [0, 2*pi):
//   PSE  : w_s^2 exp(-(theta - theta')^2 / (2 l_s^2))   (unwrapped, aperiodic on purpose)
//   PPRD : w_s^2 exp(-2 sin^2((theta - theta') / 2) / l_s^2)
//   PvM  : w_s^2 exp(lambda_s cos(theta - theta'))
//
// No kernel asserts positive definiteness of its Gram matrices; the gp
// module owns the jitter policy.

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "manifold.hpp"

namespace hvmgp {

using GramMatrix = Eigen::MatrixXd;

struct VmHyperparams {
    double omega = 1.0;
    double lambda = 1.0;

    void validate() const {
        if (!(omega > 0.0) || !(lambda > 0.0)) {
            throw std::invalid_argument("von Mises kernel needs omega > 0 and lambda > 0");
        }
    }
};

inline double k_vm(const CirclePoint &u, const CirclePoint &v, const VmHyperparams &p) {
    return p.omega * p.omega * std::exp(p.lambda * u.dot(v));
}

/// Index pairs (i, j), i < j, in the storage order of HvmHyperparams::corr.
inline std::vector<std::pair<std::size_t, std::size_t>> circle_pairs(std::size_t m) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t offset = 1; offset < m; ++offset) {
        for (std::size_t i = 0; i + offset < m; ++i) pairs.emplace_back(i, i + offset);
    }
    return pairs;
}

inline std::size_t num_pairs(std::size_t m) { return m * (m - 1) / 2; }

struct HvmHyperparams {
    double omega = 1.0;
    std::vector<double> lambda;
    std::vector<double> corr;

    std::size_t dim() const { return lambda.size(); }

    void validate() const {
        if (lambda.empty()) throw std::invalid_argument("HvM kernel needs at least one circle");
        if (corr.size() != num_pairs(lambda.size())) {
            throw DimensionMismatch("HvM kernel: corr must have m(m-1)/2 entries");
        }
        if (!(omega > 0.0)) throw std::invalid_argument("HvM kernel needs omega > 0");
        for (double l : lambda) {
            if (!(l >= 0.0)) throw std::invalid_argument("HvM kernel needs lambda_s >= 0");
        }
        for (double a : corr) {
            if (!(a >= 0.0)) throw std::invalid_argument("HvM kernel needs corr entries >= 0");
        }
    }

    /// Dense hollow symmetric Lambda, for inspection and tests.
    Eigen::MatrixXd lambda_matrix() const {
        const auto m = static_cast<Eigen::Index>(dim());
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
        const auto pairs = circle_pairs(dim());
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const auto i = static_cast<Eigen::Index>(pairs[p].first);
            const auto j = static_cast<Eigen::Index>(pairs[p].second);
            L(i, j) = L(j, i) = corr[p];
        }
        return L;
    }
};

namespace detail {

inline double hvm_exponent(const double *d, const HvmHyperparams &p) {
    const std::size_t m = p.dim();
    double e = 0.0;
    for (std::size_t s = 0; s < m; ++s) e += p.lambda[s] * d[s];
    std::size_t k = 0;
    for (std::size_t offset = 1; offset < m; ++offset) {
        for (std::size_t i = 0; i + offset < m; ++i, ++k) e += 2.0 * p.corr[k] * d[i] * d[i + offset];
    }
    return e;
}

}  // namespace detail

inline double k_hvm(const TorusPoint &u, const TorusPoint &v, const HvmHyperparams &p) {
    require_same_dim(u.dim(), v.dim(), "k_hvm");
    require_same_dim(u.dim(), p.dim(), "k_hvm");
    double d[16];
    std::vector<double> heap;
    double *dp = d;
    if (u.dim() > 16) {
        heap.resize(u.dim());
        dp = heap.data();
    }
    for (std::size_t s = 0; s < u.dim(); ++s) dp[s] = u[s].dot(v[s]);
    return p.omega * p.omega * std::exp(detail::hvm_exponent(dp, p));
}

enum class KernelKind { hvm, pvm, pprd, pse };

inline std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::hvm: return "hvm";
        case KernelKind::pvm: return "pvm";
        case KernelKind::pprd: return "pprd";
        case KernelKind::pse: return "pse";
    }
    return "?";
}

inline KernelKind kernel_kind_from_string(const std::string &s) {
    if (s == "hvm" || s == "HvM") return KernelKind::hvm;
    if (s == "pvm" || s == "PvM") return KernelKind::pvm;
    if (s == "pprd" || s == "PPRD") return KernelKind::pprd;
    if (s == "pse" || s == "PSE") return KernelKind::pse;
    throw std::invalid_argument("unknown kernel '" + s + "'");
}

/// Per-circle signal deviation and shape parameter (concentration for PvM,
/// lengthscale for PPRD and PSE).
struct BaselineKernelParams {
    std::vector<double> omega;
    std::vector<double> scale;

    std::size_t dim() const { return scale.size(); }

    void validate() const {
        if (scale.empty() || omega.size() != scale.size()) {
            throw DimensionMismatch("baseline kernel: omega and scale need one entry per circle");
        }
        for (std::size_t s = 0; s < scale.size(); ++s) {
            if (!(omega[s] > 0.0) || !(scale[s] > 0.0)) {
                throw std::invalid_argument("baseline kernel parameters must be positive");
            }
        }
    }
};

namespace detail {

inline double pse_factor(double dtheta, double l) { return std::exp(-dtheta * dtheta / (2.0 * l * l)); }

inline double pprd_factor(double dtheta, double l) {
    const double s = std::sin(0.5 * dtheta);
    return std::exp(-2.0 * s * s / (l * l));
}

}  // namespace detail

inline double k_pvm(const TorusPoint &u, const TorusPoint &v, const BaselineKernelParams &p) {
    require_same_dim(u.dim(), v.dim(), "k_pvm");
    require_same_dim(u.dim(), p.dim(), "k_pvm");
    double k = 1.0;
    for (std::size_t s = 0; s < u.dim(); ++s) k *= k_vm(u[s], v[s], {p.omega[s], p.scale[s]});
    return k;
}

inline double k_pprd(const TorusPoint &u, const TorusPoint &v, const BaselineKernelParams &p) {
    require_same_dim(u.dim(), v.dim(), "k_pprd");
    require_same_dim(u.dim(), p.dim(), "k_pprd");
    double k = 1.0;
    for (std::size_t s = 0; s < u.dim(); ++s) {
        k *= p.omega[s] * p.omega[s] * detail::pprd_factor(u[s].angle() - v[s].angle(), p.scale[s]);
    }
    return k;
}

inline double k_pse(const TorusPoint &u, const TorusPoint &v, const BaselineKernelParams &p) {
    require_same_dim(u.dim(), v.dim(), "k_pse");
    require_same_dim(u.dim(), p.dim(), "k_pse");
    double k = 1.0;
    for (std::size_t s = 0; s < u.dim(); ++s) {
        k *= p.omega[s] * p.omega[s] * detail::pse_factor(u[s].angle() - v[s].angle(), p.scale[s]);
    }
    return k;
}

/// A covariance function on T^m: the HvM kernel or one of the product baselines.
///
/// For optimization every kernel exposes a "natural" parameter vector:
///   hvm              : [omega, lambda_1..m, corr_1..m(m-1)/2]
///   pvm, pprd, pse   : [omega, scale_1..m]
/// A baseline built from natural parameters carries omega on circle 1 and
/// unit deviation on the others, which removes the redundant per-circle
/// signal scales.
class Kernel {
public:
    static Kernel hvm(HvmHyperparams p) {
        p.validate();
        Kernel k;
        k.kind_ = KernelKind::hvm;
        k.hvm_ = std::move(p);
        return k;
    }
    static Kernel baseline(KernelKind kind, BaselineKernelParams p) {
        if (kind == KernelKind::hvm) throw std::invalid_argument("use Kernel::hvm for the HvM kernel");
        p.validate();
        Kernel k;
        k.kind_ = kind;
        k.base_ = std::move(p);
        return k;
    }
    static Kernel pvm(BaselineKernelParams p) { return baseline(KernelKind::pvm, std::move(p)); }
    static Kernel pprd(BaselineKernelParams p) { return baseline(KernelKind::pprd, std::move(p)); }
    static Kernel pse(BaselineKernelParams p) { return baseline(KernelKind::pse, std::move(p)); }

    static std::size_t num_natural(KernelKind kind, std::size_t m) {
        return kind == KernelKind::hvm ? 1 + m + num_pairs(m) : 1 + m;
    }

    static Kernel from_natural(KernelKind kind, std::size_t m, std::span<const double> theta) {
        if (theta.size() != num_natural(kind, m)) {
            throw DimensionMismatch("kernel parameter vector has the wrong length");
        }
        if (kind == KernelKind::hvm) {
            HvmHyperparams p;
            p.omega = theta[0];
            p.lambda.assign(theta.begin() + 1, theta.begin() + 1 + static_cast<std::ptrdiff_t>(m));
            p.corr.assign(theta.begin() + 1 + static_cast<std::ptrdiff_t>(m), theta.end());
            return hvm(std::move(p));
        }
        BaselineKernelParams p;
        p.omega.assign(m, 1.0);
        p.omega[0] = theta[0];
        p.scale.assign(theta.begin() + 1, theta.end());
        return baseline(kind, std::move(p));
    }

    /// Inverse of from_natural; per-circle baseline deviations fold into omega.
    std::vector<double> natural() const {
        std::vector<double> t;
        if (kind_ == KernelKind::hvm) {
            t.push_back(hvm_.omega);
            t.insert(t.end(), hvm_.lambda.begin(), hvm_.lambda.end());
            t.insert(t.end(), hvm_.corr.begin(), hvm_.corr.end());
            return t;
        }
        double w = 1.0;
        for (double o : base_.omega) w *= o;
        t.push_back(w);
        t.insert(t.end(), base_.scale.begin(), base_.scale.end());
        return t;
    }

    static std::vector<std::string> natural_names(KernelKind kind, std::size_t m) {
        std::vector<std::string> names{"omega"};
        const std::string shape = kind == KernelKind::hvm || kind == KernelKind::pvm ? "lambda" : "lengthscale";
        for (std::size_t s = 0; s < m; ++s) names.push_back(shape + "_" + std::to_string(s + 1));
        if (kind == KernelKind::hvm) {
            for (const auto &[i, j] : circle_pairs(m)) {
                names.push_back("corr_" + std::to_string(i + 1) + std::to_string(j + 1));
            }
        }
        return names;
    }

    KernelKind kind() const { return kind_; }
    std::string name() const { return to_string(kind_); }
    std::size_t dim() const { return kind_ == KernelKind::hvm ? hvm_.dim() : base_.dim(); }
    const HvmHyperparams &hvm_params() const { return hvm_; }
    const BaselineKernelParams &baseline_params() const { return base_; }

    /// Prior variance k(x, x); the same for every x.
    double prior_variance() const {
        if (kind_ == KernelKind::hvm) {
            std::vector<double> ones(hvm_.dim(), 1.0);
            return hvm_.omega * hvm_.omega * std::exp(detail::hvm_exponent(ones.data(), hvm_));
        }
        double k = 1.0;
        for (std::size_t s = 0; s < base_.dim(); ++s) {
            k *= base_.omega[s] * base_.omega[s] * (kind_ == KernelKind::pvm ? std::exp(base_.scale[s]) : 1.0);
        }
        return k;
    }

    double operator()(const TorusPoint &u, const TorusPoint &v) const {
        switch (kind_) {
            case KernelKind::hvm: return k_hvm(u, v, hvm_);
            case KernelKind::pvm: return k_pvm(u, v, base_);
            case KernelKind::pprd: return k_pprd(u, v, base_);
            case KernelKind::pse: return k_pse(u, v, base_);
        }
        return 0.0;
    }

private:
    Kernel() = default;

    KernelKind kind_ = KernelKind::hvm;
    HvmHyperparams hvm_;
    BaselineKernelParams base_;
};

namespace detail {

// Row-major n x m table of embedded coordinates and chart angles.
struct PointTable {
    std::size_t n = 0, m = 0;
    std::vector<double> e1, e2, angle;

    PointTable(std::span<const TorusPoint> pts, std::size_t dim, bool need_angles) : n(pts.size()), m(dim) {
        e1.resize(n * m);
        e2.resize(n * m);
        if (need_angles) angle.resize(n * m);
        for (std::size_t i = 0; i < n; ++i) {
            require_same_dim(pts[i].dim(), m, "gram");
            for (std::size_t s = 0; s < m; ++s) {
                e1[i * m + s] = pts[i][s].e1();
                e2[i * m + s] = pts[i][s].e2();
                if (need_angles) angle[i * m + s] = pts[i][s].angle();
            }
        }
    }
};

}  // namespace detail

/// Entry (i, j) = kernel(a_i, b_j).
inline GramMatrix gram(std::span<const TorusPoint> a, std::span<const TorusPoint> b, const Kernel &kernel) {
    if (a.empty() || b.empty()) throw std::invalid_argument("gram: empty input list");
    const std::size_t m = kernel.dim();
    const bool angles = kernel.kind() == KernelKind::pprd || kernel.kind() == KernelKind::pse;
    const detail::PointTable ta(a, m, angles), tb(b, m, angles);
    GramMatrix K(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    std::vector<double> d(m);

    for (std::size_t i = 0; i < ta.n; ++i) {
        for (std::size_t j = 0; j < tb.n; ++j) {
            const std::size_t oi = i * m, oj = j * m;
            double value = 0.0;
            switch (kernel.kind()) {
                case KernelKind::hvm: {
                    const auto &p = kernel.hvm_params();
                    for (std::size_t s = 0; s < m; ++s) d[s] = ta.e1[oi + s] * tb.e1[oj + s] + ta.e2[oi + s] * tb.e2[oj + s];
                    value = p.omega * p.omega * std::exp(detail::hvm_exponent(d.data(), p));
                    break;
                }
                case KernelKind::pvm: {
                    const auto &p = kernel.baseline_params();
                    double e = 0.0, w = 1.0;
                    for (std::size_t s = 0; s < m; ++s) {
                        e += p.scale[s] * (ta.e1[oi + s] * tb.e1[oj + s] + ta.e2[oi + s] * tb.e2[oj + s]);
                        w *= p.omega[s] * p.omega[s];
                    }
                    value = w * std::exp(e);
                    break;
                }
                case KernelKind::pprd:
                case KernelKind::pse: {
                    const auto &p = kernel.baseline_params();
                    const bool pse = kernel.kind() == KernelKind::pse;
                    value = 1.0;
                    for (std::size_t s = 0; s < m; ++s) {
                        const double dt = ta.angle[oi + s] - tb.angle[oj + s];
                        value *= p.omega[s] * p.omega[s] *
                                 (pse ? detail::pse_factor(dt, p.scale[s]) : detail::pprd_factor(dt, p.scale[s]));
                    }
                    break;
                }
            }
            K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
        }
    }
    return K;
}

inline GramMatrix gram(std::span<const TorusPoint> a, const Kernel &kernel) { return gram(a, a, kernel); }

/// D^s_ij = (x_i^s)^T x_j^s, one matrix per circle.
inline std::vector<Eigen::MatrixXd> component_distance_matrices(std::span<const TorusPoint> inputs) {
    if (inputs.empty()) throw std::invalid_argument("component_distance_matrices: empty input list");
    const std::size_t m = inputs.front().dim();
    const auto n = static_cast<Eigen::Index>(inputs.size());
    std::vector<Eigen::MatrixXd> D(m, Eigen::MatrixXd(n, n));
    for (Eigen::Index i = 0; i < n; ++i) {
        require_same_dim(inputs[static_cast<std::size_t>(i)].dim(), m, "component_distance_matrices");
        for (Eigen::Index j = 0; j <= i; ++j) {
            for (std::size_t s = 0; s < m; ++s) {
                const double v = inputs[static_cast<std::size_t>(i)][s].dot(inputs[static_cast<std::size_t>(j)][s]);
                D[s](i, j) = D[s](j, i) = v;
            }
        }
        for (std::size_t s = 0; s < m; ++s) D[s](i, i) = 1.0;
    }
    return D;
}

/// Derivatives of the training Gram matrix K (= gram(inputs, kernel)) with
/// respect to each natural kernel parameter, in natural order.
///
/// HvM: dK/domega = (2/omega) K, dK/dlambda_s = K o D^s,
///      dK/dcorr_(i,j) = 2 K o D^i o D^j   (o = Hadamard product).
inline std::vector<Eigen::MatrixXd> gram_derivatives(std::span<const TorusPoint> inputs, const Kernel &kernel,
                                                     const Eigen::MatrixXd &K) {
    const std::size_t m = kernel.dim();
    const auto n = static_cast<Eigen::Index>(inputs.size());
    const std::vector<double> theta = kernel.natural();
    std::vector<Eigen::MatrixXd> dK;
    dK.reserve(theta.size());
    dK.push_back((2.0 / theta[0]) * K);

    if (kernel.kind() == KernelKind::hvm || kernel.kind() == KernelKind::pvm) {
        const auto D = component_distance_matrices(inputs);
        for (std::size_t s = 0; s < m; ++s) dK.push_back(K.cwiseProduct(D[s]));
        if (kernel.kind() == KernelKind::hvm) {
            for (const auto &[i, j] : circle_pairs(m)) {
                dK.push_back(2.0 * K.cwiseProduct(D[i]).cwiseProduct(D[j]));
            }
        }
        return dK;
    }

    const auto &p = kernel.baseline_params();
    const bool pse = kernel.kind() == KernelKind::pse;
    for (std::size_t s = 0; s < m; ++s) {
        const double l = p.scale[s];
        Eigen::MatrixXd F(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                const double dt =
                    inputs[static_cast<std::size_t>(i)][s].angle() - inputs[static_cast<std::size_t>(j)][s].angle();
                double g;
                if (pse) {
                    g = dt * dt / (l * l * l);
                } else {
                    const double sn = std::sin(0.5 * dt);
                    g = 4.0 * sn * sn / (l * l * l);
                }
                F(i, j) = F(j, i) = g;
            }
        }
        dK.push_back(K.cwiseProduct(F));
    }
    return dK;
}

}  // namespace hvmgp

#endif
