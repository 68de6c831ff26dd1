#ifndef HVMGP_MANIFOLD_HPP
#define HVMGP_MANIFOLD_HPP

// Points on the unit circle S^1 and on hypertori T^m = S^1 x ... x S^1.
// Points are stored as embedded unit vectors; angles are only a chart.

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "errors.hpp"

namespace hvmgp {

using Vec2 = Eigen::Vector2d;

class CirclePoint {
public:
    CirclePoint() = default;

    /// Normalizes (e1, e2); throws if the vector is zero or non-finite.
    static CirclePoint from_vector(double e1, double e2) {
        const double r = std::hypot(e1, e2);
        if (!std::isfinite(r) || r == 0.0) {
            throw std::invalid_argument("circle point needs a finite nonzero vector");
        }
        return CirclePoint(e1 / r, e2 / r);
    }

    double e1() const { return e1_; }
    double e2() const { return e2_; }

    double dot(const CirclePoint &o) const { return e1_ * o.e1_ + e2_ * o.e2_; }

    /// Canonical chart: atan2 angle mapped into [0, 2*pi).
    double angle() const {
        double a = std::atan2(e2_, e1_);
        if (a < 0.0) a += 2.0 * std::numbers::pi;
        if (a >= 2.0 * std::numbers::pi) a = 0.0;
        return a;
    }

    bool operator==(const CirclePoint &) const = default;

private:
    CirclePoint(double e1, double e2) : e1_(e1), e2_(e2) {}

    double e1_ = 1.0;
    double e2_ = 0.0;
};

inline CirclePoint circle_from_angle(double theta) {
    if (!std::isfinite(theta)) {
        throw std::invalid_argument("circle_from_angle: non-finite angle");
    }
    // Reduce first so that theta and theta + 2*pi*k give the same bits
    // whenever the reduction is exact.
    const double r = std::remainder(theta, 2.0 * std::numbers::pi);
    return CirclePoint::from_vector(std::cos(r), std::sin(r));
}

class TorusPoint {
public:
    TorusPoint() = default;
    explicit TorusPoint(std::vector<CirclePoint> components) : components_(std::move(components)) {
        if (components_.empty()) throw std::invalid_argument("torus point needs m >= 1 circles");
    }

    static TorusPoint from_angles(std::span<const double> angles) {
        std::vector<CirclePoint> c;
        c.reserve(angles.size());
        for (double a : angles) c.push_back(circle_from_angle(a));
        return TorusPoint(std::move(c));
    }
    static TorusPoint from_angles(std::initializer_list<double> angles) {
        return from_angles(std::span<const double>(angles.begin(), angles.size()));
    }

    std::size_t dim() const { return components_.size(); }
    const CirclePoint &operator[](std::size_t s) const { return components_[s]; }
    const std::vector<CirclePoint> &components() const { return components_; }

    std::vector<double> angles() const {
        std::vector<double> a;
        a.reserve(components_.size());
        for (const auto &c : components_) a.push_back(c.angle());
        return a;
    }

    bool operator==(const TorusPoint &) const = default;

private:
    std::vector<CirclePoint> components_;
};

inline void require_same_dim(std::size_t a, std::size_t b, const char *what) {
    if (a != b) {
        throw DimensionMismatch(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
    }
}

/// Component-wise inner products d_s = (u^s)^T v^s.
inline Eigen::VectorXd torus_metric(const TorusPoint &u, const TorusPoint &v) {
    require_same_dim(u.dim(), v.dim(), "torus_metric");
    Eigen::VectorXd d(static_cast<Eigen::Index>(u.dim()));
    for (std::size_t s = 0; s < u.dim(); ++s) d[static_cast<Eigen::Index>(s)] = u[s].dot(v[s]);
    return d;
}

inline constexpr double kReferenceCollision = 1e-9;

/// Directions from `position` toward each reference, one circle per reference.
inline TorusPoint aoa_embedding(const Vec2 &position, std::span<const Vec2> references) {
    if (references.empty()) throw std::invalid_argument("aoa_embedding: no reference points");
    std::vector<CirclePoint> c;
    c.reserve(references.size());
    for (const auto &ref : references) {
        const Vec2 diff = ref - position;
        if (diff.norm() <= kReferenceCollision) {
            throw SingularityError("aoa_embedding: position coincides with a reference point");
        }
        c.push_back(CirclePoint::from_vector(diff.x(), diff.y()));
    }
    return TorusPoint(std::move(c));
}

}  // namespace hvmgp

#endif
